#!/usr/bin/env python3
"""Train the bundled toy checkpoints used by the acceptance suite.

Produces checkpoints/toy.pt (full model) and checkpoints/toy_ablated.pt
(content-adaptive and coding-level AF inputs disabled), trained with the same
seed and step budget on the synthetic dataset.
"""

import argparse
import os
import sys

from hbvc.dataset import SyntheticDataset
from hbvc.training import toy_config, train


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out-dir", default="checkpoints")
    ap.add_argument("--steps-full", type=int, default=None)
    ap.add_argument("--steps-intra", type=int, default=None)
    ap.add_argument("--steps-flow", type=int, default=None)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--only", choices=("full", "ablated"), default=None)
    args = ap.parse_args()

    os.makedirs(args.out_dir, exist_ok=True)
    overrides = {"seed": args.seed}
    for key in ("steps_full", "steps_intra", "steps_flow"):
        val = getattr(args, key)
        if val is not None:
            overrides[key] = val

    jobs = []
    if args.only in (None, "full"):
        jobs.append(("toy.pt", {}))
    if args.only in (None, "ablated"):
        jobs.append(("toy_ablated.pt",
                     {"af_content_adaptive": False, "af_coding_level": False}))

    for name, extra in jobs:
        cfg = toy_config(**overrides, **extra)
        data = SyntheticDataset(seed=cfg.seed)
        path = os.path.join(args.out_dir, name)
        print(f"=== training {name} ===", flush=True)
        train(data, cfg, path, log=lambda m: print(m, flush=True))


if __name__ == "__main__":
    sys.exit(main())
