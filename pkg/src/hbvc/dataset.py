"""Training data: a bundled synthetic-motion generator plus a folder loader.

The generator renders short RGB clips of textured backgrounds and patches
with constant translation (patches also rotate slowly), sampled with
subpixel bilinear interpolation so motion is genuinely fractional.  Clips
default to 448x256 like the usual training corpus layout; crops are converted
to YUV 4:2:0 at sampling time.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .yuv import Frame420, rgb_to_yuv420, bilinear_up2


def _sample_bilinear(img: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Sample img (H,W) or (H,W,C) at float coords with edge clamping."""
    h, w = img.shape[:2]
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    fx = (xs - x0)[..., None] if img.ndim == 3 else xs - x0
    fy = (ys - y0)[..., None] if img.ndim == 3 else ys - y0
    x0c = np.clip(x0, 0, w - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)
    y0c = np.clip(y0, 0, h - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)
    top = img[y0c, x0c] * (1 - fx) + img[y0c, x1c] * fx
    bot = img[y1c, x0c] * (1 - fx) + img[y1c, x1c] * fx
    return top * (1 - fy) + bot * fy


def _smooth_texture(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    """Band-limited random texture in [0,1], (h,w,3)."""
    def layer(scale):
        small = rng.standard_normal((h // scale + 2, w // scale + 2))
        up = small
        for _ in range(int(np.log2(scale))):
            up = bilinear_up2(up)
        return up[:h, :w]

    # band-limited only: energy below the 2px scale would alias under the
    # subpixel resampling used for motion rendering
    base = 0.55 * layer(8) + 0.3 * layer(4) + 0.15 * layer(2)
    base = (base - base.min()) / (np.ptp(base) + 1e-9)
    tint = rng.uniform(0.2, 0.8, size=3)
    amp = rng.uniform(0.2, 0.45, size=3)
    rgb = tint[None, None] + amp[None, None] * (base[..., None] - 0.5) * 2.0
    return np.clip(rgb, 0.0, 1.0)


@dataclass
class _Patch:
    texture: np.ndarray
    cx: float
    cy: float
    vx: float
    vy: float
    omega: float  # radians per frame
    rx: float
    ry: float


def synthetic_clip(seed: int, width: int = 448, height: int = 256,
                   num_frames: int = 5) -> list:
    """Render one clip of RGB frames (H,W,3) in [0,1]."""
    rng = np.random.default_rng(seed)
    margin = 24
    canvas = _smooth_texture(rng, height + 2 * margin, width + 2 * margin)
    bg_v = rng.uniform(-2.5, 2.5, size=2)

    patches = []
    for _ in range(rng.integers(1, 4)):
        size = int(rng.integers(40, 110))
        patches.append(_Patch(
            texture=_smooth_texture(rng, size, size),
            cx=rng.uniform(0.2, 0.8) * width,
            cy=rng.uniform(0.2, 0.8) * height,
            vx=rng.uniform(-4.0, 4.0),
            vy=rng.uniform(-4.0, 4.0),
            omega=np.deg2rad(rng.uniform(-3.0, 3.0)),
            rx=size * rng.uniform(0.3, 0.5),
            ry=size * rng.uniform(0.3, 0.5),
        ))

    gy, gx = np.mgrid[0:height, 0:width].astype(np.float64)
    frames = []
    for t in range(num_frames):
        ox = margin + bg_v[0] * t
        oy = margin + bg_v[1] * t
        frame = _sample_bilinear(canvas, gy + oy, gx + ox)
        for p in patches:
            cx, cy = p.cx + p.vx * t, p.cy + p.vy * t
            ang = p.omega * t
            ca, sa = np.cos(ang), np.sin(ang)
            x0 = max(0, int(cx - 1.5 * max(p.rx, p.ry)))
            x1 = min(width, int(cx + 1.5 * max(p.rx, p.ry)) + 1)
            y0 = max(0, int(cy - 1.5 * max(p.rx, p.ry)))
            y1 = min(height, int(cy + 1.5 * max(p.rx, p.ry)) + 1)
            if x0 >= x1 or y0 >= y1:
                continue
            ly, lx = np.mgrid[y0:y1, x0:x1].astype(np.float64)
            dx, dy = lx - cx, ly - cy
            # rotate frame coords back into the patch's own frame
            px = ca * dx + sa * dy
            py = -sa * dx + ca * dy
            mask = (px / p.rx) ** 2 + (py / p.ry) ** 2 <= 1.0
            th, tw = p.texture.shape[:2]
            tex = _sample_bilinear(p.texture, py + th / 2, px + tw / 2)
            region = frame[y0:y1, x0:x1]
            region[mask] = tex[mask]
        frames.append(np.clip(frame, 0.0, 1.0).astype(np.float32))
    return frames


class SyntheticDataset:
    """Seeded bank of synthetic clips with crop-and-convert sampling."""

    def __init__(self, num_clips: int = 32, width: int = 448, height: int = 256,
                 num_frames: int = 5, seed: int = 0):
        self.num_clips = num_clips
        self.width = width
        self.height = height
        self.num_frames = num_frames
        self.seed = seed
        self._cache: dict[int, list] = {}

    def clip_rgb(self, index: int) -> list:
        if index not in self._cache:
            self._cache[index] = synthetic_clip(
                self.seed * 100003 + index, self.width, self.height,
                self.num_frames)
        return self._cache[index]

    def sample_crop(self, rng: np.random.Generator, crop: int) -> list:
        """Random clip, random even-aligned crop, converted to 4:2:0."""
        clip = self.clip_rgb(int(rng.integers(0, self.num_clips)))
        if crop > self.height or crop > self.width:
            raise ValueError(f"crop {crop} exceeds clip size")
        x = int(rng.integers(0, (self.width - crop) // 2 + 1)) * 2
        y = int(rng.integers(0, (self.height - crop) // 2 + 1)) * 2
        return [rgb_to_yuv420(f[y:y + crop, x:x + crop]) for f in clip]

    def full_clip_420(self, index: int) -> list:
        return [rgb_to_yuv420(f) for f in self.clip_rgb(index)]


class FolderDataset:
    """Clips stored as directories of numbered frame images (septuplet layout)."""

    def __init__(self, root: str, num_frames: int = 5):
        from PIL import Image  # noqa: F401  (validated lazily)
        self.root = root
        self.num_frames = num_frames
        self.clips = sorted(
            d for d in (os.path.join(root, n) for n in os.listdir(root))
            if os.path.isdir(d))
        if not self.clips:
            raise ValueError(f"no clip directories under {root}")

    @property
    def num_clips(self) -> int:
        return len(self.clips)

    def clip_rgb(self, index: int) -> list:
        from PIL import Image
        files = sorted(
            f for f in os.listdir(self.clips[index])
            if f.lower().endswith((".png", ".jpg", ".jpeg")))[:self.num_frames]
        out = []
        for f in files:
            img = np.asarray(Image.open(os.path.join(self.clips[index], f)))
            out.append(img.astype(np.float32) / 255.0)
        return out

    def sample_crop(self, rng: np.random.Generator, crop: int) -> list:
        clip = self.clip_rgb(int(rng.integers(0, self.num_clips)))
        h, w = clip[0].shape[:2]
        x = int(rng.integers(0, (w - crop) // 2 + 1)) * 2
        y = int(rng.integers(0, (h - crop) // 2 + 1)) * 2
        return [rgb_to_yuv420(f[y:y + crop, x:x + crop]) for f in clip]
