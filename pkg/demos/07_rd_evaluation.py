"""Rate-distortion tooling: single-model variable rate, BD-rate, plots.

Needs the trained toy checkpoint (scripts/train_toy.py).

Run:  python demos/07_rd_evaluation.py
"""

import os
import sys

from hbvc.codec import load_checkpoint
from hbvc.dataset import SyntheticDataset
from hbvc.evaluate import bd_rate, evaluate, plot_rd, write_metrics

CKPT = os.path.join(os.path.dirname(__file__), "..", "checkpoints", "toy.pt")
if not os.path.exists(CKPT):
    sys.exit("train the toy checkpoint first: python scripts/train_toy.py")

codec, extra = load_checkpoint(CKPT)
clip = SyntheticDataset(num_clips=1, width=192, height=128, seed=99).full_clip_420(0)

# %% One checkpoint, several rate points: the rate index steers every codec
#    through its feature modulation.
points = []
for li in (4, 3, 2, 1, 0):  # 128 ... 16384
    p = evaluate(clip, codec, lambda_index=li, intra_period=4)
    points.append(p)
    lam = codec.config.lambda_table[li]
    print(f"lambda={lam:>6.0f}: {p.bpp:.4f} bpp, PSNR-YUV {p.psnr_yuv:.2f} dB")

# %% BD-rate against a 10% fatter copy of the same curve is +10% by
#    construction; useful as a sanity anchor.
fat = [{"bpp": p.bpp * 1.1, "psnr_yuv": p.psnr_yuv} for p in points]
print(f"BD-rate vs 1.1x-rate copy: {bd_rate(points, fat):+.2f} %")

# %% Metrics files and the RD figure.
out = os.path.join(os.path.dirname(__file__), "_rd_demo")
os.makedirs(out, exist_ok=True)
write_metrics(os.path.join(out, "toy.json"), "toy", points)
write_metrics(os.path.join(out, "toy_fat.json"), "toy+10%", fat)
res = plot_rd([os.path.join(out, "toy.json"), os.path.join(out, "toy_fat.json")],
              os.path.join(out, "rd.png"), anchor="toy")
print(res.table_text)
print("figure:", res.figure_path)
