#!/usr/bin/env python3
"""Throughput report: reference coder vs native coder on 10^7 symbols.

The native side runs in-process in node (frontend/dist/bench.js); the
reference side is timed here. Results land in tests/golden/native_bench.json
and are reported (not gated) by the acceptance suite.
"""

import json
import os
import subprocess
import sys
import time

import numpy as np

REPO = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def main():
    n = int(float(sys.argv[1])) if len(sys.argv) > 1 else 10 ** 7
    from hbvc import rans

    rng = np.random.default_rng(0)
    table = rans.build_cdf(0.0, 2.0, -24, 24)
    # time the reference coder on a slice large enough to be stable, then
    # normalize per symbol (the full 1e7 would take minutes in Python)
    n_ref = min(n, 10 ** 6)
    sym = np.rint(rng.normal(0, 2.0, n_ref)).astype(np.int64)
    t0 = time.time()
    data = rans.encode_symbols(sym, table)
    t_enc = time.time() - t0
    t0 = time.time()
    out = rans.decode_symbols(data, table, count=n_ref)
    t_dec = time.time() - t0
    assert np.array_equal(out, sym)
    ref_msym = n_ref / 1e6 / (0.5 * (t_enc + t_dec))

    bench_js = os.path.join(REPO, "frontend", "dist", "bench.js")
    res = subprocess.run(["node", bench_js, str(n)], capture_output=True,
                         text=True, check=True)
    native = json.loads(res.stdout)
    assert native["lossless"]
    native_msym = 2.0 / (1.0 / native["encode_msym_per_s"]
                         + 1.0 / native["decode_msym_per_s"])

    report = {
        "symbols": n,
        "reference_symbols_timed": n_ref,
        "reference_encode_s_per_msym": t_enc / (n_ref / 1e6),
        "reference_decode_s_per_msym": t_dec / (n_ref / 1e6),
        "reference_msym_per_s": ref_msym,
        "native_encode_msym_per_s": native["encode_msym_per_s"],
        "native_decode_msym_per_s": native["decode_msym_per_s"],
        "native_msym_per_s": native_msym,
        "speedup": native_msym / ref_msym,
    }
    out_path = os.path.join(REPO, "tests", "golden", "native_bench.json")
    with open(out_path, "w") as fh:
        json.dump(report, fh, indent=2)
    print(json.dumps(report, indent=2))


if __name__ == "__main__":
    sys.exit(main())
