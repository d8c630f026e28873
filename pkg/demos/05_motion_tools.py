"""Motion tools: warping, flow resampling, estimation and compensation.

Run:  python demos/05_motion_tools.py
"""

import numpy as np
import torch

from hbvc.motion import (FlowField, MCNet, MENet, downscale_flow, warp)
from hbvc.dataset import _smooth_texture

torch.manual_seed(0)

# %% Backward warping: zero flow is the exact identity, integer flows shift.
x = torch.arange(16, dtype=torch.float32).reshape(1, 1, 4, 4)
print("warp(x, 0) == x:", torch.equal(warp(x, torch.zeros(1, 2, 4, 4)), x))
shift = torch.zeros(1, 2, 4, 4)
shift[:, 0] = 1.0
print("one-column shift:\n", warp(x, shift)[0, 0].int().numpy())

# %% Chroma-resolution flows: spatial 2x2 pooling AND halved displacement.
f = FlowField(np.full((4, 4), 2.0), np.zeros((4, 4)))
d = downscale_flow(f)
print(f"downscale_flow: u=2.0 at {f.u.shape} -> u={d.u[0, 0]} at {d.u.shape}")

# %% The pyramid estimator recovers translations out of the box (its levels
#    start from a closed-form correspondence solve the net only refines).
menet = MENet(levels=3, filters=12).eval()
tex = _smooth_texture(np.random.default_rng(3), 80, 80)
to_t = lambda a: torch.from_numpy(
    np.moveaxis(a, -1, 0).astype(np.float32)).unsqueeze(0)
cur = to_t(tex[16:64, 16:64])
ref = to_t(tex[16:64, 13:61])  # content moved 3 px right
with torch.no_grad():
    flow = menet(cur, ref)
print(f"estimated translation: u={float(flow[:, 0, 8:-8, 8:-8].mean()):+.2f} "
      f"(truth +3), v={float(flow[:, 1, 8:-8, 8:-8].mean()):+.2f} (truth 0)")

# %% Motion compensation fuses two warped references through a 48-channel
#    network; with zero weights it is exactly the warped average.
mc = MCNet(1)
a, b = torch.rand(1, 1, 16, 16), torch.rand(1, 1, 16, 16)
zero = torch.zeros(1, 2, 16, 16)
out = mc(a, b, zero, zero)
print("identity-initialized MCNet == mean of refs:",
      torch.allclose(out, ((a + b) / 2).clamp(0, 1), atol=1e-7))
print("internal width:", mc.CHANNELS)
