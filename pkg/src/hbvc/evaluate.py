"""RD evaluation, Bjontegaard delta rate, rate targeting and plotting."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.interpolate import PchipInterpolator

from .afmod import RateContext
from .yuv import psnr_yuv

METRICS_SCHEMA = "hbvc-metrics-v1"
COLOR_MATRIX = "bt601-full"


class NoOverlapError(ValueError):
    """The two RD curves share no PSNR interval."""


class NonMonotoneTraceError(RuntimeError):
    """Rate targeting observed bpp falling while the intra rate parameter rose."""


class TargetRangeError(ValueError):
    def __init__(self, target, lo, hi):
        super().__init__(
            f"target {target:.5f} bpp outside achievable range "
            f"[{lo:.5f}, {hi:.5f}]")
        self.achievable = (lo, hi)


@dataclass
class RDPoint:
    bpp: float
    psnr_y: float
    psnr_u: float
    psnr_v: float
    psnr_yuv: float
    lambda_index: int
    intra_lambda: float
    frames: list = field(default_factory=list)
    color_matrix: str = COLOR_MATRIX

    def as_dict(self) -> dict:
        return asdict(self)


def evaluate(frames, codec, lambda_index: int, intra_lambda: float | None = None,
             intra_period: int = 32, coder=None, coder_name: str = "rans16") -> RDPoint:
    """Full encode/decode of a sequence; bpp comes from actual stream bytes."""
    data, _, stats = codec.encode_sequence(
        frames, intra_period, lambda_index, intra_lambda,
        coder=coder, coder_name=coder_name)
    decoded, header = codec.decode_sequence(data, coder=coder)
    n = len(frames)
    luma_pixels = frames[0].width * frames[0].height
    bpp = len(data) * 8.0 / (luma_pixels * n)

    bits_by_display = {row["display_index"]: row["bytes"] * 8
                       for row in stats["frames"]}
    rows = []
    for i, (ref, rec) in enumerate(zip(frames, decoded)):
        p = psnr_yuv(ref, rec)
        rows.append({"frame": i, "psnr_y": p.psnr_y, "psnr_u": p.psnr_u,
                     "psnr_v": p.psnr_v, "psnr_yuv": p.psnr_yuv,
                     "bits": bits_by_display[i],
                     "lossless": p.lossless})
    return RDPoint(
        bpp=bpp,
        psnr_y=float(np.mean([r["psnr_y"] for r in rows])),
        psnr_u=float(np.mean([r["psnr_u"] for r in rows])),
        psnr_v=float(np.mean([r["psnr_v"] for r in rows])),
        psnr_yuv=float(np.mean([r["psnr_yuv"] for r in rows])),
        lambda_index=lambda_index,
        intra_lambda=float(header.intra_lambda),
        frames=rows)


def _curve_arrays(points):
    """Accept RDPoints, dicts or (bpp, psnr) pairs; returns sorted arrays."""
    rates, quals = [], []
    for p in points:
        if isinstance(p, RDPoint):
            rates.append(p.bpp)
            quals.append(p.psnr_yuv)
        elif isinstance(p, dict):
            rates.append(p["bpp"])
            quals.append(p["psnr_yuv"])
        else:
            r, q = p
            rates.append(r)
            quals.append(q)
    order = np.argsort(quals)
    q = np.asarray(quals, dtype=np.float64)[order]
    r = np.asarray(rates, dtype=np.float64)[order]
    if np.any(np.diff(q) <= 0):
        raise ValueError("duplicate or non-increasing PSNR values in RD curve")
    if np.any(r <= 0):
        raise ValueError("rates must be positive")
    return r, q


def bd_rate(anchor, test) -> float:
    """Average rate difference of ``test`` against ``anchor`` in percent.

    Piecewise-cubic (shape-preserving) interpolation of log-rate over PSNR,
    integrated over the common PSNR interval.
    """
    ra, qa = _curve_arrays(anchor)
    rt, qt = _curve_arrays(test)
    if len(ra) < 4 or len(rt) < 4:
        raise ValueError("need at least 4 RD points per curve")
    lo = max(qa.min(), qt.min())
    hi = min(qa.max(), qt.max())
    if hi <= lo:
        raise NoOverlapError(
            f"anchor spans [{qa.min():.2f}, {qa.max():.2f}] dB, test "
            f"[{qt.min():.2f}, {qt.max():.2f}] dB: no overlap")
    fa = PchipInterpolator(qa, np.log(ra))
    ft = PchipInterpolator(qt, np.log(rt))
    avg = (ft.integrate(lo, hi) - fa.integrate(lo, hi)) / (hi - lo)
    return float((math.exp(avg) - 1.0) * 100.0)


@dataclass
class TargetResult:
    lambda_index: int
    intra_lambda: float
    bpp: float
    probes: list  # (intra_lambda, bpp) bisection probes, combo scan excluded

    @property
    def num_probes(self) -> int:
        return len(self.probes)


def target_rate(frames, codec, target_bpp: float, intra_period: int = 32,
                tol: float = 0.02, max_probes: int = 8, coder=None) -> TargetResult:
    """Hit a bpp target: coarse rate-point selection, then bisection on the
    continuous intra rate parameter."""

    def measure(lambda_index, intra_lambda):
        return evaluate(frames, codec, lambda_index, intra_lambda,
                        intra_period, coder=coder).bpp

    cfg = codec.config
    table = cfg.lambda_table
    combos = [(i, table[i], measure(i, table[i])) for i in range(len(table))]
    lo_bpp = min(measure(int(np.argmin(table)), cfg.intra_lambda_min),
                 min(c[2] for c in combos))
    hi_bpp = max(measure(int(np.argmax(table)), cfg.intra_lambda_max),
                 max(c[2] for c in combos))
    if not lo_bpp <= target_bpp <= hi_bpp:
        raise TargetRangeError(target_bpp, lo_bpp, hi_bpp)

    idx, lam0, bpp0 = min(combos, key=lambda c: abs(c[2] - target_bpp))
    if abs(bpp0 - target_bpp) / target_bpp <= tol:
        return TargetResult(idx, lam0, bpp0, [])

    probes = []

    def probe(lam):
        b = measure(idx, lam)
        probes.append((lam, b))
        _check_monotone(probes)
        return b

    # Bracket the target on the intra rate parameter, then bisect in log-space.
    lo_lam, lo_val = lam0, bpp0
    hi_lam, hi_val = lam0, bpp0
    best = (lam0, bpp0)
    while len(probes) < max_probes:
        if lo_val > target_bpp:
            lo_lam = max(cfg.intra_lambda_min, lo_lam / 8.0)
            lo_val = probe(lo_lam)
        elif hi_val < target_bpp:
            hi_lam = min(cfg.intra_lambda_max, hi_lam * 8.0)
            hi_val = probe(hi_lam)
        else:
            mid = math.exp(0.5 * (math.log(lo_lam) + math.log(hi_lam)))
            val = probe(mid)
            if val < target_bpp:
                lo_lam, lo_val = mid, val
            else:
                hi_lam, hi_val = mid, val
        lam, b = probes[-1]
        if abs(b - target_bpp) < abs(best[1] - target_bpp):
            best = (lam, b)
        if abs(b - target_bpp) / target_bpp <= tol:
            return TargetResult(idx, lam, b, probes)
    return TargetResult(idx, best[0], best[1], probes)


def _check_monotone(probes, slack: float = 0.005):
    """bpp must not fall as the intra rate parameter rises (beyond noise)."""
    pts = sorted(probes)
    for (l0, b0), (l1, b1) in zip(pts[:-1], pts[1:]):
        if l1 > l0 and b1 < b0 * (1.0 - slack):
            raise NonMonotoneTraceError(
                f"bpp fell {b0:.5f} -> {b1:.5f} while intra lambda rose "
                f"{l0:.0f} -> {l1:.0f}; probe trace: {pts}")


# -- metrics files and plotting ---------------------------------------------------

def write_metrics(path, label: str, points) -> None:
    payload = {
        "schema": METRICS_SCHEMA,
        "label": label,
        "color_matrix": COLOR_MATRIX,
        "points": [p.as_dict() if isinstance(p, RDPoint) else p for p in points],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)


def read_metrics(path) -> dict:
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValueError(f"malformed metrics JSON at {path}: {exc}") from exc
    if payload.get("schema") != METRICS_SCHEMA:
        raise ValueError(f"{path}: unknown metrics schema {payload.get('schema')!r}")
    return payload


@dataclass
class PlotResult:
    figure_path: str
    table_text: str
    x_range: tuple
    y_range: tuple


def plot_rd(metric_paths, figure_path, anchor: str | None = None) -> PlotResult:
    """Plot bpp vs PSNR-YUV curves and tabulate BD-rates against an anchor."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if not metric_paths:
        raise ValueError("no metrics files given")
    curves = [read_metrics(p) for p in metric_paths]
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for c in curves:
        pts = sorted(c["points"], key=lambda p: p["bpp"])
        ax.plot([p["bpp"] for p in pts], [p["psnr_yuv"] for p in pts],
                marker="o", label=c["label"])
    ax.set_xlabel("bpp")
    ax.set_ylabel("PSNR-YUV (dB)")
    ax.grid(True, alpha=0.4)
    ax.legend()

    anchor_label = anchor or curves[0]["label"]
    anchor_curve = next((c for c in curves if c["label"] == anchor_label), None)
    if anchor_curve is None:
        raise ValueError(f"anchor curve {anchor_label!r} not among inputs")
    lines = [f"BD-rate vs anchor {anchor_label!r}:"]
    for c in curves:
        try:
            val = bd_rate(anchor_curve["points"], c["points"])
            lines.append(f"  {c['label']:24s} {val:+8.2f} %")
        except (ValueError, NoOverlapError) as exc:
            lines.append(f"  {c['label']:24s} n/a ({exc})")
    table_text = "\n".join(lines)

    fig.tight_layout()
    fig.savefig(figure_path, dpi=110)
    x_range = tuple(ax.get_xlim())
    y_range = tuple(ax.get_ylim())
    plt.close(fig)
    return PlotResult(str(figure_path), table_text, x_range, y_range)
