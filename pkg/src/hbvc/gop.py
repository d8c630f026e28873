"""Hierarchical B-frame GOP planning: coding order, references and level labels.

Frames between two intra anchors are coded by recursive bisection in
breadth-first order, so every B frame has two already-decoded, equidistant
references.  The binary level label ``c`` is 1 for frames at the deepest
level (never used as a reference) and 0 otherwise.

Display indices are 0-based; intra frames sit at indices that are multiples
of the intra period.  A truncated tail is closed by decomposing the remaining
span into power-of-two sub-GOPs (largest first), each ending in an extra
intra frame, which keeps every B reference pair equidistant.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field


class GOPConfigError(ValueError):
    """Invalid GOP configuration (e.g. non-power-of-two intra period)."""


@dataclass
class GOPEntry:
    display_index: int
    coding_index: int
    frame_type: str  # "I" | "B"
    level: int
    c: int
    ref_past: int | None = None
    ref_future: int | None = None
    k: int = 0

    def as_dict(self) -> dict:
        return {
            "display_index": self.display_index,
            "coding_index": self.coding_index,
            "frame_type": self.frame_type,
            "level": self.level,
            "C": self.c,
            "ref_past": self.ref_past,
            "ref_future": self.ref_future,
            "k": self.k,
        }


@dataclass
class GOPPlan:
    entries: list  # GOPEntry in coding order
    intra_period: int
    num_frames: int = 0

    def __post_init__(self):
        if not self.num_frames:
            self.num_frames = len(self.entries)

    def in_display_order(self) -> list:
        return sorted(self.entries, key=lambda e: e.display_index)

    def coding_order(self) -> list:
        return [e.display_index for e in self.entries]

    def to_json(self, indent: int | None = 2) -> str:
        payload = {
            "intra_period": self.intra_period,
            "num_frames": self.num_frames,
            "entries": [e.as_dict() for e in self.entries],
        }
        return json.dumps(payload, indent=indent)


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def _anchor_positions(num_frames: int, intra_period: int) -> list:
    anchors = [0]
    pos = 0
    while pos < num_frames - 1:
        gap = num_frames - 1 - pos
        step = intra_period if gap >= intra_period else 1 << (gap.bit_length() - 1)
        pos += step
        anchors.append(pos)
    return anchors


def plan_gop(num_frames: int, intra_period: int) -> GOPPlan:
    """Plan coding order and references for ``num_frames`` display frames."""
    if num_frames < 1:
        raise GOPConfigError(f"num_frames must be >= 1, got {num_frames}")
    if intra_period < 2 or not _is_pow2(intra_period):
        raise GOPConfigError(
            f"intra_period must be a power of two >= 2, got {intra_period}")

    anchors = _anchor_positions(num_frames, intra_period)
    entries = [GOPEntry(0, 0, "I", level=1, c=0)]
    for lo, hi in zip(anchors[:-1], anchors[1:]):
        entries.append(GOPEntry(hi, len(entries), "I", level=1, c=0))
        # Breadth-first bisection of (lo, hi): midpoints become B frames.
        queue = [(lo, hi, 1)]
        while queue:
            a, b, level = queue.pop(0)
            if b - a < 2:
                continue
            mid = (a + b) // 2
            k = mid - a
            entries.append(GOPEntry(
                mid, len(entries), "B", level=level, c=1 if k == 1 else 0,
                ref_past=a, ref_future=b, k=k))
            queue.append((a, mid, level + 1))
            queue.append((mid, b, level + 1))
    return GOPPlan(entries, intra_period, num_frames)


def validate(plan: GOPPlan) -> list:
    """Check all GOP invariants; returns a list of violation strings (empty = ok)."""
    violations = []
    displays = [e.display_index for e in plan.entries]
    if sorted(displays) != list(range(plan.num_frames)):
        violations.append(
            "plan: coding order is not a permutation of display indices "
            f"0..{plan.num_frames - 1}")
        return violations

    coding_pos = {e.display_index: i for i, e in enumerate(plan.entries)}
    referenced = set()
    for e in plan.entries:
        if e.frame_type == "B":
            if e.ref_past is not None:
                referenced.add(e.ref_past)
            if e.ref_future is not None:
                referenced.add(e.ref_future)

    last_full_anchor = ((plan.num_frames - 1) // plan.intra_period) * plan.intra_period
    for i, e in enumerate(plan.entries):
        name = f"entry {i} (display {e.display_index})"
        if e.coding_index != i:
            violations.append(f"{name}: coding_index {e.coding_index} != position {i}")
        if e.level < 1:
            violations.append(f"{name}: level {e.level} < 1")
        if e.frame_type == "I":
            if e.ref_past is not None or e.ref_future is not None:
                violations.append(f"{name}: I frame carries references")
            if e.c != 0:
                violations.append(f"{name}: I frame must have C=0")
            if (e.display_index % plan.intra_period != 0
                    and e.display_index <= last_full_anchor):
                violations.append(
                    f"{name}: I frame outside intra grid before the final partial GOP")
        elif e.frame_type == "B":
            if e.display_index % plan.intra_period == 0:
                violations.append(f"{name}: display on the intra grid is not typed I")
            if e.ref_past is None or e.ref_future is None:
                violations.append(f"{name}: B frame missing a reference")
                continue
            if not (e.ref_past < e.display_index < e.ref_future):
                violations.append(
                    f"{name}: references {e.ref_past}/{e.ref_future} do not bracket it")
            if (e.display_index - e.ref_past != e.ref_future - e.display_index
                    or e.k != e.display_index - e.ref_past):
                violations.append(
                    f"{name}: references not equidistant with k={e.k} "
                    f"(past gap {e.display_index - e.ref_past}, "
                    f"future gap {e.ref_future - e.display_index})")
            for ref in (e.ref_past, e.ref_future):
                if ref not in coding_pos or coding_pos[ref] >= i:
                    violations.append(f"{name}: reference {ref} not coded before it")
            never_referenced = e.display_index not in referenced
            if bool(e.c) != never_referenced:
                violations.append(
                    f"{name}: C={e.c} but frame is "
                    f"{'never referenced' if never_referenced else 'referenced'}")
        else:
            violations.append(f"{name}: unknown frame type {e.frame_type!r}")
    return violations
