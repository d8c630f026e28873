#!/usr/bin/env python3
"""Generate golden fixtures: coder conformance vectors and bitstream goldens.

`conformance` writes shared test vectors (tables, symbols, expected bytes)
exercised by both the reference and the native coder. `streams` encodes the
golden clip with the trained toy checkpoint plus a seeded independent-mode
checkpoint at three rate points each and freezes stream/reconstruction
hashes; it requires checkpoints/toy.pt to exist.
"""

import argparse
import base64
import hashlib
import json
import os
import sys

import numpy as np
import torch

REPO = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
GOLDEN = os.path.join(REPO, "tests", "golden")


def make_conformance():
    from hbvc import rans

    rng = np.random.default_rng(0)
    cases = []

    def add(name, tables, symbols, indices=None):
        tables = tables if isinstance(tables, list) else [tables]
        symbols = np.asarray(symbols, dtype=np.int64)
        data = rans.encode_symbols(symbols, tables, indices)
        back = rans.decode_symbols(
            data, tables,
            indices if indices is not None else None,
            count=len(symbols) if indices is None else None)
        assert np.array_equal(back, symbols)
        cases.append({
            "name": name,
            "tables": [t.as_dict() for t in tables],
            "indices": ([int(i) for i in indices] if indices is not None
                        else [0] * len(symbols)),
            "symbols": [int(s) for s in symbols],
            "bytes": base64.b64encode(data).decode(),
            "checksum": rans.symbols_checksum(symbols),
        })

    t1 = rans.build_cdf(0.0, 1.0, -8, 8)
    add("gaussian-unit", t1, np.rint(rng.normal(0, 1, 500)))
    t2 = rans.build_cdf(0.0, 0.5, -2, 2)
    add("tail-escapes", t2, [-40, -3, -2, -1, 0, 1, 2, 3, 57, 0, 2, -2])
    add("empty", t1, [])
    t3 = rans.build_cdf_from_pmf(np.array([1.0]), offset=0)
    add("single-bin", t3, [0] * 64)
    tabs = [rans.build_cdf(0.0, s, -16, 16) for s in (0.3, 1.0, 4.0)]
    idx = rng.integers(0, 3, 4000)
    sym = np.rint(rng.normal(0, np.array([0.3, 1.0, 4.0])[idx]))
    add("mixed-tables", tabs, sym, idx)
    t4 = rans.build_cdf(-0.3, 3.0, -20, 20)
    add("bulk", t4, np.rint(rng.normal(-0.3, 3.0, 20000)))

    build_cases = []
    for name, mean, scale, lo, hi in (
            ("unit", 0.0, 1.0, -8, 8),
            ("wide", 0.0, 6.5, -32, 32),
            ("offset-mean", 1.7, 0.4, -4, 6),
            ("near-floor", 0.0, 0.11, -2, 2)):
        t = rans.build_cdf(mean, scale, lo, hi)
        build_cases.append({
            "name": name, "mean": mean, "scale": scale, "lo": lo, "hi": hi,
            "precision_bits": 16, "cum": [int(c) for c in t.cum],
        })

    payload = {
        "schema": "hbvc-conformance-v1",
        "coding_cases": cases,
        "build_cdf_cases": build_cases,
    }
    os.makedirs(GOLDEN, exist_ok=True)
    path = os.path.join(GOLDEN, "conformance.json")
    with open(path, "w") as fh:
        json.dump(payload, fh)
    print(f"wrote {path} ({len(cases)} coding cases)")


def make_streams():
    from hbvc.codec import (BFrameCodec, CodecConfig, load_checkpoint,
                            save_checkpoint)
    from hbvc.dataset import SyntheticDataset
    from hbvc.training import toy_config

    os.makedirs(GOLDEN, exist_ok=True)
    toy_path = os.path.join(REPO, "checkpoints", "toy.pt")
    codec_toy, _ = load_checkpoint(toy_path)

    # a deterministic, untrained independent-mode codec (bit-exactness of the
    # pipeline does not depend on training)
    ind_path = os.path.join(GOLDEN, "independent_seed7.pt")
    torch.manual_seed(7)
    cfg = toy_config().codec_config()
    cfg = CodecConfig(**{**cfg.__dict__, "coding_mode": "independent"})
    codec_ind = BFrameCodec(cfg, init="random").eval()
    save_checkpoint(ind_path, codec_ind)

    ds = SyntheticDataset(num_clips=1, width=128, height=96, seed=777)
    clip = ds.full_clip_420(0)

    manifest = {"schema": "hbvc-golden-v1", "clip": {
        "width": 128, "height": 96, "frames": 5, "dataset_seed": 777},
        "streams": []}
    for mode, codec, ckpt in (("separate", codec_toy, "../../checkpoints/toy.pt"),
                              ("independent", codec_ind,
                               "independent_seed7.pt")):
        for li in (0, 2, 4):
            data, recons, _ = codec.encode_sequence(clip, 4, lambda_index=li)
            name = f"golden_{mode}_l{li}.bin"
            with open(os.path.join(GOLDEN, name), "wb") as fh:
                fh.write(data)
            recon_hash = hashlib.sha256()
            for f in recons:
                for plane in (f.y, f.u, f.v):
                    recon_hash.update(
                        np.ascontiguousarray(plane, dtype=np.float32).tobytes())
            manifest["streams"].append({
                "file": name, "mode": mode, "lambda_index": li,
                "checkpoint": ckpt,
                "stream_sha256": hashlib.sha256(data).hexdigest(),
                "recon_sha256": recon_hash.hexdigest(),
                "bytes": len(data),
            })
            print(f"{name}: {len(data)} bytes")
    with open(os.path.join(GOLDEN, "streams.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)
    print("golden stream manifest written")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("what", choices=("conformance", "streams", "all"))
    args = ap.parse_args()
    if args.what in ("conformance", "all"):
        make_conformance()
    if args.what in ("streams", "all"):
        make_streams()


if __name__ == "__main__":
    sys.exit(main())
