"""Training loop: staged curriculum ending in end-to-end 5-frame clips.

The published defaults (256 crops, learning rate 1e-4, 5-frame clips with a
two-level hierarchy at intra period 4) live in TrainConfig; desk-scale runs
override them through :func:`toy_config` and every override is recorded in
the checkpoint for provenance.

Stages: (1) flow estimation/prediction with a photometric loss, (2) the
continuous-rate intra codec, (3) everything jointly under the rate-distortion
objective with uniformly sampled rate points.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, asdict, replace

import numpy as np
import torch
import torch.nn.functional as F

from .afmod import LAMBDA_TABLE, RateContext
from .codec import BFrameCodec, CodecConfig, TFrame, frame_to_tensors, save_checkpoint
from .gop import plan_gop
from .motion import warp
from .coupling import NumericError


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    crop_size: int = 256
    learning_rate: float = 1e-4
    clip_length: int = 5
    train_intra_period: int = 4
    lambda_table: tuple = LAMBDA_TABLE
    intra_lambda_min: float = 64.0
    intra_lambda_max: float = 65536.0
    steps_flow: int = 1000
    steps_intra: int = 2000
    steps_full: int = 4000
    x_mid_weight: float = 0.1
    flow_smooth_weight: float = 0.01
    grad_clip: float = 1.0
    seed: int = 0
    quant_mode: str = "noise"
    coding_mode: str = "separate"
    af_content_adaptive: bool = True
    af_coding_level: bool = True
    val_clips: int = 4
    val_every: int = 250
    log_every: int = 100
    codec_overrides: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def codec_config(self) -> CodecConfig:
        return CodecConfig(
            coding_mode=self.coding_mode,
            af_content_adaptive=self.af_content_adaptive,
            af_coding_level=self.af_coding_level,
            lambda_table=self.lambda_table,
            intra_lambda_min=self.intra_lambda_min,
            intra_lambda_max=self.intra_lambda_max,
            quant_mode=self.quant_mode,
            **self.codec_overrides)


def toy_config(**overrides) -> TrainConfig:
    """Desk-scale preset: small crops, raised learning rate, reduced widths."""
    base = dict(
        crop_size=64,
        learning_rate=5e-4,
        steps_flow=400,
        steps_intra=900,
        steps_full=2600,
        codec_overrides=dict(
            filters=24, latent_ch=12, hyper_ch=8,
            motion_filters=24, motion_latent_ch=8,
            intra_filters=24, intra_latent_ch=12,
            menet_filters=16, mpnet_filters=16),
    )
    base.update(overrides)
    cfg = TrainConfig(**base)
    cfg.provenance = {
        "preset": "toy",
        "overrides_from_defaults": sorted(set(base) - {"provenance"}),
    }
    return cfg


def rd_loss(originals, recons, rates, lam: float):
    """Per-clip rate-distortion objective.

    L = mean_t [ lam * (6*MSE_Y + 2*MSE_UV)/8 + R_t ] with R_t in bits per
    luma pixel.  MSE_UV pools the concatenated U and V planes.
    """
    if not (len(originals) == len(recons) == len(rates)):
        raise ValueError("originals, recons and rates must align")
    terms = []
    for o, r, bits in zip(originals, recons, rates):
        if o.y.shape != r.y.shape or o.uv.shape != r.uv.shape:
            raise ValueError("original/reconstruction shape mismatch")
        mse_y = F.mse_loss(r.y, o.y)
        mse_uv = F.mse_loss(r.uv, o.uv)
        pixels = o.y.shape[0] * o.y.shape[-1] * o.y.shape[-2]
        terms.append(lam * (6.0 * mse_y + 2.0 * mse_uv) / 8.0 + bits / pixels)
    return torch.stack([t if torch.is_tensor(t) else torch.tensor(t)
                        for t in terms]).mean()


def lambda_cycle(rng: np.random.Generator, n: int):
    """Uniform rate-index sampler as reshuffled full cycles (guaranteed
    coverage of every index in any window of 2n-1 draws)."""
    while True:
        order = rng.permutation(n)
        for i in order:
            yield int(i)


def _clip_tensors(frames, pad: int):
    return [frame_to_tensors(f, pad) for f in frames]


def _check_finite(loss, codec, step, stage, snapshot_path=None):
    if torch.isfinite(loss):
        return
    snap = snapshot_path or f"diverged_{stage}_{step}.pt"
    torch.save({"stage": stage, "step": step,
                "state_dict": codec.state_dict()}, snap)
    raise TrainingDiverged(
        f"non-finite loss at {stage} step {step}; snapshot written to {snap}")


@torch.no_grad()
def val_rd_profile(codec: BFrameCodec, dataset, config: TrainConfig,
                   clip_index: int = 10 ** 6) -> list:
    """Estimated bpp and weighted MSE per rate index on one held-out clip."""
    rng = np.random.default_rng(config.seed + 7777)
    frames = dataset.sample_crop(rng, config.crop_size)
    pad = codec.config.pad_multiple
    tf = _clip_tensors(frames, pad)
    plan = plan_gop(config.clip_length, config.train_intra_period)
    rows = []
    for li, lam in enumerate(config.lambda_table):
        ctx = RateContext(li, 0, lam)
        recons, bits, _ = codec.forward_clip(tf, plan, ctx, mode="round")
        pixels = tf[0].y.numel() * len(tf)
        bpp = float(sum(float(b) for b in bits)) / pixels
        mse = float(sum(
            float((6 * F.mse_loss(r.y, o.y) + 2 * F.mse_loss(r.uv, o.uv)) / 8)
            for o, r in zip(tf, recons))) / len(tf)
        rows.append({"lambda_index": li, "bpp_est": bpp, "wmse": mse})
    return rows


@torch.no_grad()
def held_out_rd_loss(codec: BFrameCodec, dataset, config: TrainConfig,
                     num_clips: int | None = None) -> float:
    """Deterministic validation loss: every rate index on fixed held-out crops."""
    rng = np.random.default_rng(config.seed + 91)
    total, count = 0.0, 0
    pad = codec.config.pad_multiple
    plan = plan_gop(config.clip_length, config.train_intra_period)
    for ci in range(num_clips or config.val_clips):
        frames = dataset.sample_crop(rng, config.crop_size)
        tf = _clip_tensors(frames, pad)
        for li, lam in enumerate(config.lambda_table):
            ctx = RateContext(li, 0, lam)
            recons, bits, _ = codec.forward_clip(tf, plan, ctx, mode="round")
            total += float(rd_loss(tf, recons, bits, lam))
            count += 1
    return total / count


def train(dataset, config: TrainConfig, checkpoint_path: str,
          log=print, resume_from: str | None = None) -> str:
    """Run the curriculum and write a checkpoint.

    With ``resume_from`` the model weights are loaded from an existing
    checkpoint and only the joint stage runs (stages 1-2 are skipped); the
    previous history is carried over.
    """
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    codec = BFrameCodec(config.codec_config(), init="identity")
    codec.train()
    pad = codec.config.pad_multiple
    history = {"flow": [], "intra": [], "full": [], "val": []}
    if resume_from:
        payload = torch.load(resume_from, map_location="cpu", weights_only=False)
        codec.load_state_dict(payload["state_dict"])
        history = payload.get("extra", {}).get("history", history)
        config = replace(config, steps_flow=0, steps_intra=0)
        rng = np.random.default_rng(config.seed + 1 + len(history["full"]))
        log(f"resumed from {resume_from} "
            f"({len(history['full'])} joint steps so far)")
    t0 = time.time()

    # -- stage 1: motion estimation and prediction -----------------------------
    params = list(codec.menet.parameters()) + list(codec.mpnet.parameters())
    opt = torch.optim.Adam(params, lr=config.learning_rate)
    for step in range(config.steps_flow):
        frames = dataset.sample_crop(rng, config.crop_size)
        tf = _clip_tensors(frames, pad)
        # supervised pair with a known subpixel shift (well-posed target)
        cur444 = codec._to444(tf[int(rng.integers(0, len(tf)))])
        gt = torch.zeros(1, 2, *cur444.shape[-2:])
        gt[:, 0] = float(rng.uniform(-3.0, 3.0))
        gt[:, 1] = float(rng.uniform(-3.0, 3.0))
        ref444 = warp(cur444, -gt).detach()
        b = 6  # replicated borders carry no correspondence
        sup = ((codec.menet(cur444, ref444) - gt)[..., b:-b, b:-b] ** 2).mean()
        # photometric consistency on a real reference triple
        k = int(rng.integers(1, 3))
        mid = len(tf) // 2
        past, cur, fut = tf[mid - k], tf[mid], tf[min(mid + k, len(tf) - 1)]
        c4 = codec._to444(cur)
        past444 = codec._to444(past)
        fut444 = codec._to444(fut)
        f_b = codec.menet(c4, past444)
        f_f = codec.menet(c4, fut444)
        photometric = (F.mse_loss(warp(past444, f_b), c4)
                       + F.mse_loss(warp(fut444, f_f), c4))
        smooth = sum(
            f.diff(dim=-1).pow(2).mean() + f.diff(dim=-2).pow(2).mean()
            for f in (f_b, f_f))
        pred = codec.mpnet(codec.menet, past444, fut444)
        pred_loss = F.mse_loss(pred, torch.cat([f_b, f_f], dim=1).detach())
        loss = (sup + 0.5 * photometric + 0.5 * pred_loss
                + config.flow_smooth_weight * smooth)
        _check_finite(loss, codec, step, "flow")
        opt.zero_grad()
        loss.backward()
        torch.nn.utils.clip_grad_norm_(params, config.grad_clip)
        opt.step()
        history["flow"].append(float(loss.detach()))
        if step % config.log_every == 0:
            log(f"[flow {step}/{config.steps_flow}] loss={float(loss.detach()):.5f}")

    # -- stage 2: intra codec ----------------------------------------------------
    params = (list(codec.intra_y.parameters())
              + list(codec.intra_uv.parameters()))
    opt = torch.optim.Adam(params, lr=config.learning_rate)
    log_lo, log_hi = math.log(config.intra_lambda_min), math.log(config.intra_lambda_max)
    for step in range(config.steps_intra):
        frames = dataset.sample_crop(rng, config.crop_size)
        tf = frame_to_tensors(frames[int(rng.integers(0, len(frames)))], pad)
        lam = math.exp(rng.uniform(log_lo, log_hi))
        codec.box.ctx = RateContext(0, 0, lam)
        y_hat, bzy, bhy, ymid = codec.intra_y(tf.y, mode=config.quant_mode)
        cond = F.avg_pool2d(y_hat, 2)
        uv_hat, bzu, bhu, uvmid = codec.intra_uv(tf.uv, cond=cond,
                                                 mode=config.quant_mode)
        bits = bzy + bhy + bzu + bhu
        loss = (rd_loss([tf], [TFrame(y_hat, uv_hat)], [bits], lam)
                + config.x_mid_weight * ((ymid ** 2).mean() + (uvmid ** 2).mean()))
        _check_finite(loss, codec, step, "intra")
        opt.zero_grad()
        loss.backward()
        torch.nn.utils.clip_grad_norm_(params, config.grad_clip)
        opt.step()
        history["intra"].append(float(loss.detach()))
        if step % config.log_every == 0:
            log(f"[intra {step}/{config.steps_intra}] loss={float(loss.detach()):.5f} "
                f"lam={lam:.0f}")

    # -- stage 3: full system ------------------------------------------------------
    opt = torch.optim.Adam(codec.parameters(), lr=config.learning_rate)
    cycle = lambda_cycle(rng, len(config.lambda_table))
    plan = plan_gop(config.clip_length, config.train_intra_period)
    decay_at = int(0.75 * config.steps_full)
    for step in range(config.steps_full):
        if step == decay_at:
            for group in opt.param_groups:
                group["lr"] = config.learning_rate * 0.3
        frames = dataset.sample_crop(rng, config.crop_size)
        tf = _clip_tensors(frames, pad)
        li = next(cycle)
        lam = config.lambda_table[li]
        ctx = RateContext(li, 0, lam)
        try:
            recons, bits, mid = codec.forward_clip(tf, plan, ctx)
        except NumericError as exc:
            snap = f"diverged_full_{step}.pt"
            torch.save({"stage": "full", "step": step,
                        "state_dict": codec.state_dict()}, snap)
            raise TrainingDiverged(f"{exc} at full step {step}; snapshot "
                                   f"written to {snap}") from exc
        loss = rd_loss(tf, recons, bits, lam) + config.x_mid_weight * mid
        _check_finite(loss, codec, step, "full")
        opt.zero_grad()
        loss.backward()
        torch.nn.utils.clip_grad_norm_(codec.parameters(), config.grad_clip)
        opt.step()
        history["full"].append(float(loss.detach()))
        if step % config.val_every == 0 or step == config.steps_full - 1:
            codec.eval()
            val = held_out_rd_loss(codec, dataset, config)
            profile = val_rd_profile(codec, dataset, config)
            codec.train()
            history["val"].append({"step": step, "loss": val,
                                   "profile": profile})
            knob = " ".join(f"{r['bpp_est']:.3f}" for r in profile)
            log(f"[full {step}/{config.steps_full}] loss={float(loss.detach()):.5f} "
                f"val={val:.5f} lam={lam:.0f} bpp[{knob}] "
                f"({time.time() - t0:.0f}s)")

    codec.eval()
    save_checkpoint(checkpoint_path, codec, extra={
        "train_config": asdict(config),
        "history": history,
        "wall_seconds": time.time() - t0,
    })
    log(f"checkpoint written to {checkpoint_path}")
    return checkpoint_path
