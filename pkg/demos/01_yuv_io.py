"""YUV 4:2:0 plumbing: files, colorspace, resampling and quality metrics.

Run:  python demos/01_yuv_io.py
"""

import io

import numpy as np

from hbvc.yuv import (psnr_yuv, rgb_to_yuv420, yuv420_to_rgb, to_444,
                      space_to_depth, depth_to_space)
from hbvc.y4m import read_y4m, write_y4m, Y4MMetadata

# %% Make a little RGB test card and take it to 4:2:0.
h, w = 64, 96
yy, xx = np.mgrid[0:h, 0:w]
rgb = np.stack([
    0.5 + 0.5 * np.sin(xx / 9.0),
    0.5 + 0.5 * np.cos(yy / 7.0),
    np.clip((xx + yy) / (h + w), 0, 1),
], axis=-1)
frame = rgb_to_yuv420(rgb)
print(f"luma {frame.y.shape}, chroma {frame.u.shape} (half resolution)")

# %% The conversion is BT.601 full-range; gray inputs sit on the neutral axis.
gray = rgb_to_yuv420(np.full((8, 8, 3), 0.4))
print(f"gray input -> y={gray.y[0, 0]:.3f}, u={gray.u[0, 0]:.3f}, "
      f"v={gray.v[0, 0]:.3f}")

# %% Round-trip error is bounded by chroma resampling.
back = yuv420_to_rgb(frame)
print(f"rgb->yuv420->rgb max error: {np.abs(back - rgb).max():.4f}")

# %% Y4M streams round-trip byte-for-byte.
meta = Y4MMetadata(width=w, height=h)
stream = write_y4m([frame, frame], meta)
frames2, meta2 = read_y4m(stream)
print(f"y4m bytes: {len(stream)}, reread gives {len(frames2)} frames, "
      f"byte-identical rewrite: {write_y4m(frames2, meta2) == stream}")

# %% Motion estimation runs in 4:4:4; chroma is upsampled bilinearly.
f444 = to_444(frame)
print(f"4:4:4 planes all {f444.u.shape}")

# %% space_to_depth is an exact invertible rearrangement of the luma plane.
ch = space_to_depth(frame.y)
print(f"space_to_depth: {frame.y.shape} -> {ch.shape}, "
      f"inverse exact: {np.array_equal(depth_to_space(ch), frame.y)}")

# %% PSNR-YUV weights luma 6:1:1 over 8.
noisy = frame.copy()
noisy.y = np.clip(noisy.y + 0.01, 0, 1)
res = psnr_yuv(frame, noisy)
print(f"psnr_y={res.psnr_y:.2f}  psnr_u={res.psnr_u:.1f}(capped) "
      f"psnr_yuv={res.psnr_yuv:.2f} dB")
