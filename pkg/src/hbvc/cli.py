"""Command-line interface: encode, decode, train, eval, bdrate, target-rate, plot."""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np


def _load_codec(path):
    from .codec import load_checkpoint
    return load_checkpoint(path)


def _make_coder(name: str):
    if name in ("reference", "rans16"):
        from .bitstream import ReferenceCoder
        return ReferenceCoder(), "rans16"
    if name == "native":
        from .native import NativeCoder
        return NativeCoder(), "native"
    raise SystemExit(f"unknown coder {name!r}")


def _read_input(args):
    from .y4m import read_y4m, read_yuv_raw

    if args.raw_size:
        w, h = (int(v) for v in args.raw_size.lower().split("x"))
        with open(args.input, "rb") as fh:
            return read_yuv_raw(fh, w, h, args.raw_frames)
    frames, _ = read_y4m(open(args.input, "rb"))
    return frames


def _add_input_args(parser):
    parser.add_argument("--input", required=True,
                        help=".y4m stream, or raw planar .yuv with --raw-size")
    parser.add_argument("--raw-size", default=None, metavar="WxH",
                        help="treat input as headerless 4:2:0 with this geometry")
    parser.add_argument("--raw-frames", type=int, default=None,
                        help="frame count for raw input (default: whole file)")


def cmd_encode(args):
    from .gop import plan_gop

    frames = _read_input(args)
    codec, _ = _load_codec(args.checkpoint)
    if args.coding_mode and args.coding_mode != codec.config.coding_mode:
        raise SystemExit(
            f"refusing: checkpoint was trained for coding mode "
            f"{codec.config.coding_mode!r}, requested {args.coding_mode!r}")
    coder, coder_name = _make_coder(args.coder)
    if args.dump_gop:
        print(plan_gop(len(frames), args.intra_period).to_json())
    data, _, stats = codec.encode_sequence(
        frames, args.intra_period, args.lambda_index,
        intra_lambda=args.intra_lambda, coder=coder, coder_name=coder_name,
        collect_flows=bool(args.dump_flows))
    with open(args.out, "wb") as fh:
        fh.write(data)
    if args.dump_flows:
        import os
        os.makedirs(args.dump_flows, exist_ok=True)
        for disp, flow in stats["flows"].items():
            arr = flow.numpy().astype(np.float32)
            arr.tofile(f"{args.dump_flows}/flow_{disp:05d}"
                       f"_{arr.shape[-1]}x{arr.shape[-2]}.f32")
    bpp = len(data) * 8 / (frames[0].width * frames[0].height * len(frames))
    print(f"wrote {len(data)} bytes ({bpp:.4f} bpp) to {args.out}")


def cmd_decode(args):
    from .y4m import write_y4m, Y4MMetadata

    codec, _ = _load_codec(args.checkpoint)
    coder, _ = _make_coder(args.coder)
    with open(args.input, "rb") as fh:
        data = fh.read()
    frames, header = codec.decode_sequence(data, coder=coder)
    meta = Y4MMetadata(width=header.width, height=header.height)
    with open(args.out, "wb") as fh:
        fh.write(write_y4m(frames, meta))
    print(f"decoded {len(frames)} frames to {args.out}")


def cmd_train(args):
    from .dataset import SyntheticDataset, FolderDataset
    from .training import TrainConfig, toy_config, train

    if args.config:
        with open(args.config) as fh:
            cfg = TrainConfig(**json.load(fh))
    elif args.preset == "toy":
        cfg = toy_config()
    else:
        cfg = TrainConfig()
    if args.steps_full is not None:
        cfg.steps_full = args.steps_full
        cfg.provenance["steps_full"] = "cli override"
    if args.no_content_adaptive:
        cfg.af_content_adaptive = False
    if args.no_coding_level:
        cfg.af_coding_level = False
    if args.coding_mode:
        cfg.coding_mode = args.coding_mode
    if args.seed is not None:
        cfg.seed = args.seed
    if args.dataset == "synthetic":
        data = SyntheticDataset(seed=cfg.seed)
    else:
        data = FolderDataset(args.dataset)
    train(data, cfg, args.out)


def cmd_eval(args):
    from .evaluate import evaluate, write_metrics

    frames = _read_input(args)
    codec, _ = _load_codec(args.checkpoint)
    coder, coder_name = _make_coder(args.coder)
    points = []
    for li in args.lambda_index:
        p = evaluate(frames, codec, li, args.intra_lambda, args.intra_period,
                     coder=coder, coder_name=coder_name)
        points.append(p)
        print(f"lambda_index={li}: {p.bpp:.4f} bpp, "
              f"PSNR-YUV {p.psnr_yuv:.2f} dB")
    write_metrics(args.out, args.label, points)
    print(f"metrics written to {args.out}")


def cmd_bdrate(args):
    from .evaluate import read_metrics, bd_rate

    anchor = read_metrics(args.anchor)
    test = read_metrics(args.test)
    val = bd_rate(anchor["points"], test["points"])
    print(f"{val:+.2f} %")


def cmd_target_rate(args):
    from .y4m import read_y4m
    from .evaluate import target_rate

    frames, _ = read_y4m(open(args.input, "rb"))
    codec, _ = _load_codec(args.checkpoint)
    res = target_rate(frames, codec, args.target_bpp, args.intra_period)
    print(f"lambda_index={res.lambda_index} intra_lambda={res.intra_lambda:.1f} "
          f"-> {res.bpp:.4f} bpp ({res.num_probes} probes)")
    for lam, bpp in res.probes:
        print(f"  probe intra_lambda={lam:.1f} -> {bpp:.4f} bpp")


def cmd_plot(args):
    from .evaluate import plot_rd

    res = plot_rd(args.metrics, args.out, anchor=args.anchor)
    print(res.table_text)
    print(f"figure written to {res.figure_path}")


def build_parser():
    p = argparse.ArgumentParser(prog="hbvc",
                                description="Hierarchical B-frame video codec "
                                            "for YUV 4:2:0 content")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("encode", help="encode a .y4m (or raw .yuv) file")
    _add_input_args(e)
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--lambda-index", type=int, default=2)
    e.add_argument("--intra-lambda", type=float, default=None)
    e.add_argument("--intra-period", type=int, default=32)
    e.add_argument("--coding-mode", default=None)
    e.add_argument("--coder", default="reference",
                   choices=("reference", "native"))
    e.add_argument("--dump-gop", action="store_true")
    e.add_argument("--dump-flows", default=None, metavar="DIR")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_encode)

    d = sub.add_parser("decode", help="decode a bitstream")
    d.add_argument("--in", dest="input", required=True)
    d.add_argument("--checkpoint", required=True)
    d.add_argument("--coder", default="reference",
                   choices=("reference", "native"))
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_decode)

    t = sub.add_parser("train", help="train a codec checkpoint")
    t.add_argument("--out", required=True)
    t.add_argument("--preset", default="toy", choices=("toy", "paper"))
    t.add_argument("--config", default=None, help="TrainConfig JSON file")
    t.add_argument("--dataset", default="synthetic",
                   help='"synthetic" or a clip-folder path')
    t.add_argument("--steps-full", type=int, default=None)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--coding-mode", default=None)
    t.add_argument("--no-content-adaptive", action="store_true")
    t.add_argument("--no-coding-level", action="store_true")
    t.set_defaults(func=cmd_train)

    v = sub.add_parser("eval", help="rate-distortion evaluation")
    _add_input_args(v)
    v.add_argument("--checkpoint", required=True)
    v.add_argument("--lambda-index", type=int, nargs="+", default=[0, 2, 4])
    v.add_argument("--intra-lambda", type=float, default=None)
    v.add_argument("--intra-period", type=int, default=32)
    v.add_argument("--coder", default="reference",
                   choices=("reference", "native"))
    v.add_argument("--label", default="hbvc")
    v.add_argument("--out", required=True)
    v.set_defaults(func=cmd_eval)

    b = sub.add_parser("bdrate", help="BD-rate between two metrics files")
    b.add_argument("--anchor", required=True)
    b.add_argument("--test", required=True)
    b.set_defaults(func=cmd_bdrate)

    r = sub.add_parser("target-rate", help="fit a target bpp")
    r.add_argument("--input", required=True)
    r.add_argument("--checkpoint", required=True)
    r.add_argument("--target-bpp", type=float, required=True)
    r.add_argument("--intra-period", type=int, default=32)
    r.set_defaults(func=cmd_target_rate)

    g = sub.add_parser("plot", help="RD plot + BD-rate table")
    g.add_argument("metrics", nargs="+")
    g.add_argument("--anchor", default=None)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_plot)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
