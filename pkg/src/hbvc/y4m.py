"""Readers and writers for YUV4MPEG2 (.y4m) streams and raw planar .yuv files.

Only 8-bit 4:2:0 content is supported.  Round-tripping a valid stream through
``read_y4m`` / ``write_y4m`` is byte-identical: the unparsed header tokens and
per-frame parameter strings are preserved verbatim.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .yuv import Frame420, plane_from_uint8, plane_to_uint8

_C420_TAGS = {"420", "420jpeg", "420mpeg2", "420paldv"}


class Y4MError(ValueError):
    """Malformed Y4M stream."""


class UnsupportedFormatError(Y4MError):
    """Valid Y4M, but not 8-bit 4:2:0."""


@dataclass
class Y4MMetadata:
    width: int
    height: int
    fps_num: int = 25
    fps_den: int = 1
    # Header tokens after "YUV4MPEG2", byte-exact and ordered (includes W/H/F).
    header_tokens: list = field(default_factory=list)
    # Per-frame parameter strings (text after "FRAME"), usually all empty.
    frame_params: list = field(default_factory=list)

    def tokens_or_default(self) -> list:
        if self.header_tokens:
            return list(self.header_tokens)
        return [
            f"W{self.width}",
            f"H{self.height}",
            f"F{self.fps_num}:{self.fps_den}",
            "Ip", "A1:1", "C420",
        ]


def _parse_header(line: bytes) -> Y4MMetadata:
    tokens = line.decode("ascii", errors="replace").split(" ")
    if tokens[0] != "YUV4MPEG2":
        raise Y4MError(f"bad signature token {tokens[0]!r}")
    meta = Y4MMetadata(width=0, height=0, header_tokens=tokens[1:])
    chroma = "420jpeg"  # y4m default when no C token is present
    for tok in tokens[1:]:
        if not tok:
            continue
        key, val = tok[0], tok[1:]
        try:
            if key == "W":
                meta.width = int(val)
            elif key == "H":
                meta.height = int(val)
            elif key == "F":
                num, den = val.split(":")
                meta.fps_num, meta.fps_den = int(num), int(den)
            elif key == "C":
                chroma = val
        except ValueError as exc:
            raise Y4MError(f"malformed header token {tok!r}") from exc
    if meta.width <= 0 or meta.height <= 0:
        raise Y4MError("missing or invalid W/H header tokens")
    if meta.width % 2 or meta.height % 2:
        raise Y4MError(f"odd frame dimensions {meta.width}x{meta.height}")
    if chroma not in _C420_TAGS:
        raise UnsupportedFormatError(f"unsupported chroma tag C{chroma}")
    return meta


def read_y4m(stream) -> tuple[list[Frame420], Y4MMetadata]:
    """Parse a Y4M byte stream (bytes or binary file object).

    Returns frames in display order plus the stream metadata.
    """
    if isinstance(stream, (bytes, bytearray)):
        stream = io.BytesIO(stream)
    data = stream.read()
    nl = data.find(b"\n")
    if nl < 0:
        raise Y4MError("no newline-terminated stream header found")
    meta = _parse_header(data[:nl])
    w, h = meta.width, meta.height
    ysize, csize = w * h, (w // 2) * (h // 2)
    frame_bytes = ysize + 2 * csize

    frames = []
    pos = nl + 1
    while pos < len(data):
        nl = data.find(b"\n", pos)
        if nl < 0:
            raise Y4MError(f"truncated frame header at byte {pos}")
        marker = data[pos:nl].decode("ascii", errors="replace")
        if not marker.startswith("FRAME"):
            raise Y4MError(f"expected FRAME marker, got {marker!r}")
        meta.frame_params.append(marker[len("FRAME"):])
        start = nl + 1
        if start + frame_bytes > len(data):
            raise Y4MError(f"truncated frame payload for frame {len(frames)}")
        raw = np.frombuffer(data[start:start + frame_bytes], dtype=np.uint8)
        frames.append(Frame420(
            plane_from_uint8(raw[:ysize].reshape(h, w)),
            plane_from_uint8(raw[ysize:ysize + csize].reshape(h // 2, w // 2)),
            plane_from_uint8(raw[ysize + csize:].reshape(h // 2, w // 2)),
        ))
        pos = start + frame_bytes
    return frames, meta


def write_y4m(frames, meta: Y4MMetadata) -> bytes:
    """Serialize frames to a Y4M byte stream (inverse of :func:`read_y4m`)."""
    for i, f in enumerate(frames):
        if (f.width, f.height) != (meta.width, meta.height):
            raise ValueError(
                f"frame {i} is {f.width}x{f.height}, metadata says "
                f"{meta.width}x{meta.height}")
    out = io.BytesIO()
    out.write(b"YUV4MPEG2 " + " ".join(meta.tokens_or_default()).encode("ascii"))
    out.write(b"\n")
    for i, f in enumerate(frames):
        params = meta.frame_params[i] if i < len(meta.frame_params) else ""
        out.write(b"FRAME" + params.encode("ascii") + b"\n")
        out.write(plane_to_uint8(f.y).tobytes())
        out.write(plane_to_uint8(f.u).tobytes())
        out.write(plane_to_uint8(f.v).tobytes())
    return out.getvalue()


def read_yuv_raw(stream, width: int, height: int, num_frames: int | None = None):
    """Read headerless planar 8-bit 4:2:0 data with explicit geometry."""
    if isinstance(stream, (bytes, bytearray)):
        data = bytes(stream)
    else:
        data = stream.read()
    if width % 2 or height % 2:
        raise ValueError(f"odd frame dimensions {width}x{height}")
    ysize, csize = width * height, (width // 2) * (height // 2)
    frame_bytes = ysize + 2 * csize
    available = len(data) // frame_bytes
    count = available if num_frames is None else num_frames
    if count > available:
        raise ValueError(f"requested {count} frames, stream holds {available}")
    frames = []
    for i in range(count):
        raw = np.frombuffer(data[i * frame_bytes:(i + 1) * frame_bytes], dtype=np.uint8)
        frames.append(Frame420(
            plane_from_uint8(raw[:ysize].reshape(height, width)),
            plane_from_uint8(raw[ysize:ysize + csize].reshape(height // 2, width // 2)),
            plane_from_uint8(raw[ysize + csize:].reshape(height // 2, width // 2)),
        ))
    return frames


def write_yuv_raw(frames) -> bytes:
    out = io.BytesIO()
    for f in frames:
        out.write(plane_to_uint8(f.y).tobytes())
        out.write(plane_to_uint8(f.u).tobytes())
        out.write(plane_to_uint8(f.v).tobytes())
    return out.getvalue()
