"""YUV 4:2:0 frame containers, colorspace conversion, resampling and quality metrics.

All planes are stored as float arrays normalized to [0, 1]; integer code
values appear only at file boundaries (see :mod:`hbvc.y4m`).  The colorspace
matrix is BT.601 full-range, chroma is downsampled by 2x2 box averaging and
upsampled bilinearly (half-pixel centers, edge clamp).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

PSNR_CAP_DB = 100.0

# BT.601 full-range RGB -> YCbCr (offset 0.5 on chroma).
_KR, _KG, _KB = 0.299, 0.587, 0.114


@dataclass
class Frame420:
    """One video frame as Y at full resolution and U/V at half resolution."""

    y: np.ndarray
    u: np.ndarray
    v: np.ndarray
    bit_depth: int = 8

    def __post_init__(self):
        h, w = self.y.shape
        if h % 2 or w % 2:
            raise ValueError(f"luma dimensions must be even, got {w}x{h}")
        for name, plane in (("u", self.u), ("v", self.v)):
            if plane.shape != (h // 2, w // 2):
                raise ValueError(
                    f"{name} plane must be {w // 2}x{h // 2}, got "
                    f"{plane.shape[1]}x{plane.shape[0]}")

    @property
    def width(self) -> int:
        return self.y.shape[1]

    @property
    def height(self) -> int:
        return self.y.shape[0]

    def copy(self) -> "Frame420":
        return Frame420(self.y.copy(), self.u.copy(), self.v.copy(), self.bit_depth)


@dataclass
class Frame444:
    """Frame with all three planes at one resolution (motion-estimation domain)."""

    y: np.ndarray
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        if not (self.y.shape == self.u.shape == self.v.shape):
            raise ValueError("all planes of a 4:4:4 frame must share one shape")


def box_down2(plane: np.ndarray) -> np.ndarray:
    """Downsample a plane by 2 in each dimension with 2x2 box averaging."""
    h, w = plane.shape
    if h % 2 or w % 2:
        raise ValueError(f"even dimensions required, got {w}x{h}")
    return plane.reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))


def _up2_1d(x: np.ndarray, axis: int) -> np.ndarray:
    """Bilinear x2 upsampling along one axis, half-pixel centers, edge clamp."""
    x = np.moveaxis(x, axis, 0)
    prev = np.concatenate([x[:1], x[:-1]], axis=0)
    nxt = np.concatenate([x[1:], x[-1:]], axis=0)
    even = 0.25 * prev + 0.75 * x
    odd = 0.75 * x + 0.25 * nxt
    out = np.stack([even, odd], axis=1).reshape((2 * x.shape[0],) + x.shape[1:])
    return np.moveaxis(out, 0, axis)


def bilinear_up2(plane: np.ndarray) -> np.ndarray:
    """Upsample a plane by 2 in each dimension (separable bilinear)."""
    return _up2_1d(_up2_1d(plane, 0), 1)


def to_444(frame: Frame420) -> Frame444:
    """Interpolate the chroma planes to luma resolution."""
    return Frame444(frame.y.copy(), bilinear_up2(frame.u), bilinear_up2(frame.v))


def rgb_to_yuv420(rgb: np.ndarray) -> Frame420:
    """Convert an HxWx3 RGB image in [0,1] to a 4:2:0 frame (BT.601 full range)."""
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"expected HxWx3 image, got shape {rgb.shape}")
    h, w = rgb.shape[:2]
    if h % 2 or w % 2:
        raise ValueError(f"even dimensions required, got {w}x{h}")
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    y = _KR * r + _KG * g + _KB * b
    u = (b - y) / (2.0 * (1.0 - _KB)) + 0.5
    v = (r - y) / (2.0 * (1.0 - _KR)) + 0.5
    return Frame420(y, box_down2(u), box_down2(v))


def yuv420_to_rgb(frame: Frame420) -> np.ndarray:
    """Inverse of :func:`rgb_to_yuv420`; output clipped to [0,1]."""
    y = frame.y
    u = bilinear_up2(frame.u) - 0.5
    v = bilinear_up2(frame.v) - 0.5
    r = y + 2.0 * (1.0 - _KR) * v
    b = y + 2.0 * (1.0 - _KB) * u
    g = (y - _KR * r - _KB * b) / _KG
    return np.clip(np.stack([r, g, b], axis=-1), 0.0, 1.0)


def space_to_depth(plane: np.ndarray, factor: int = 2) -> np.ndarray:
    """Rearrange an HxW plane into factor^2 channels of size (H/f)x(W/f).

    Channel order is row-major over the (dy, dx) sub-grid offsets, so a 2x2
    block [[a, b], [c, d]] becomes channels (a, b, c, d).
    """
    h, w = plane.shape
    if h % factor or w % factor:
        raise ValueError(f"dimensions must be divisible by {factor}, got {w}x{h}")
    x = plane.reshape(h // factor, factor, w // factor, factor)
    return x.transpose(1, 3, 0, 2).reshape(factor * factor, h // factor, w // factor)


def depth_to_space(channels: np.ndarray, factor: int = 2) -> np.ndarray:
    """Exact inverse of :func:`space_to_depth`."""
    c, h, w = channels.shape
    if c != factor * factor:
        raise ValueError(f"expected {factor * factor} channels, got {c}")
    x = channels.reshape(factor, factor, h, w)
    return x.transpose(2, 0, 3, 1).reshape(h * factor, w * factor)


@dataclass
class PsnrResult:
    psnr_y: float
    psnr_u: float
    psnr_v: float
    psnr_yuv: float
    lossless: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "psnr_y": self.psnr_y,
            "psnr_u": self.psnr_u,
            "psnr_v": self.psnr_v,
            "psnr_yuv": self.psnr_yuv,
            "lossless": dict(self.lossless),
        }


def psnr_plane(ref: np.ndarray, test: np.ndarray, cap: float = PSNR_CAP_DB):
    """PSNR of one plane against peak 1.0; returns (db, lossless_flag)."""
    if ref.shape != test.shape:
        raise ValueError(f"plane shapes differ: {ref.shape} vs {test.shape}")
    mse = float(np.mean((ref.astype(np.float64) - test.astype(np.float64)) ** 2))
    if mse == 0.0:
        return cap, True
    return min(-10.0 * math.log10(mse), cap), False


def psnr_yuv(ref: Frame420, test: Frame420, cap: float = PSNR_CAP_DB) -> PsnrResult:
    """Weighted PSNR-YUV: (6*PSNR_Y + PSNR_U + PSNR_V) / 8.

    The aggregation weights PSNRs (not MSEs) per plane and is kept in this
    one function so the pooling convention can be swapped in a single place.
    """
    py, ly = psnr_plane(ref.y, test.y, cap)
    pu, lu = psnr_plane(ref.u, test.u, cap)
    pv, lv = psnr_plane(ref.v, test.v, cap)
    return PsnrResult(
        psnr_y=py, psnr_u=pu, psnr_v=pv,
        psnr_yuv=(6.0 * py + pu + pv) / 8.0,
        lossless={"y": ly, "u": lu, "v": lv},
    )


def plane_to_uint8(plane: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(plane * 255.0), 0, 255).astype(np.uint8)


def plane_from_uint8(plane: np.ndarray) -> np.ndarray:
    return plane.astype(np.float32) / 255.0
