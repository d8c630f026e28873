"""The hierarchical B-frame coding system.

Encoding one B frame runs: motion estimation on the original frame against
both decoded references, bidirectional motion prediction from the references
alone, conditional coding of the 4-channel flow stack, motion compensation
into per-component condition frames, then conditional coding of Y followed by
UV (UV additionally conditioned on the just-decoded Y).  I frames use the
intra codec with a continuous rate parameter.  The decoder mirrors everything
except motion estimation.

Besides the default two-codec arrangement ("separate"), the inter stage can
be built in four ablation variants selected at construction time:
independent (no cross-component conditioning), merged (one codec over
learned latent embeddings), space_to_depth (luma rearranged to chroma
resolution) and yuv444 (chroma upsampled).
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field, asdict, replace
from typing import NamedTuple

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .afmod import (LAMBDA_TABLE, ContextBox, RateContext, attach_af,
                    count_convs)
from .bitstream import (FrameBitstream, ReferenceCoder, SequenceHeader,
                        Substream, BitstreamError, ChecksumError,
                        decode_factorized_payload, decode_gaussian_payload,
                        encode_factorized_payload, encode_gaussian_payload,
                        model_hash, read_sequence, write_sequence)
from .coupling import CanfCoder, LATENT_STRIDE, HYPER_STRIDE
from .entropy import round_away
from .gop import GOPPlan, plan_gop, validate
from .motion import FLOW_LIMIT, MCNet, MENet, MPNet, downscale_flow_tensor
from .yuv import Frame420

CODING_MODES = ("separate", "independent", "merged", "space_to_depth", "yuv444")


class OrderingError(RuntimeError):
    """A frame component was coded before the signals it depends on."""


class CheckpointMismatchError(RuntimeError):
    """Stream was produced with different weights than the loaded checkpoint."""


@dataclass
class CodecConfig:
    coding_mode: str = "separate"
    filters: int = 32
    latent_ch: int = 24
    hyper_ch: int = 16
    motion_filters: int = 32
    motion_latent_ch: int = 16
    intra_filters: int = 32
    intra_latent_ch: int = 24
    menet_filters: int = 24
    mpnet_filters: int = 24
    merged_ch: int = 8
    af_content_adaptive: bool = True
    af_coding_level: bool = True
    lambda_table: tuple = LAMBDA_TABLE
    intra_lambda_min: float = 64.0
    intra_lambda_max: float = 65536.0
    scale_floor: float = 0.11
    quant_mode: str = "noise"
    pad_multiple: int = 32

    def __post_init__(self):
        if self.coding_mode not in CODING_MODES:
            raise ValueError(f"unknown coding mode {self.coding_mode!r}")
        self.lambda_table = tuple(float(v) for v in self.lambda_table)


class TFrame(NamedTuple):
    """One padded frame as tensors: y (1,1,H,W) and uv (1,2,H/2,W/2)."""

    y: torch.Tensor
    uv: torch.Tensor


def pad_to_multiple(t: torch.Tensor, multiple: int) -> torch.Tensor:
    h, w = t.shape[-2:]
    ph = (-h) % multiple
    pw = (-w) % multiple
    if ph or pw:
        t = F.pad(t, (0, pw, 0, ph), mode="replicate")
    return t


def frame_to_tensors(frame: Frame420, pad_multiple: int = 32) -> TFrame:
    y = torch.from_numpy(frame.y.astype(np.float32))[None, None]
    uv = torch.from_numpy(np.stack([frame.u, frame.v]).astype(np.float32))[None]
    return TFrame(pad_to_multiple(y, pad_multiple),
                  pad_to_multiple(uv, pad_multiple // 2))


def tensors_to_frame(tf: TFrame, height: int, width: int) -> Frame420:
    y = tf.y[0, 0, :height, :width].clamp(0, 1).cpu().numpy()
    uv = tf.uv[0, :, :height // 2, :width // 2].clamp(0, 1).cpu().numpy()
    return Frame420(y, uv[0], uv[1])


@contextlib.contextmanager
def single_thread():
    """Pin torch to one thread during entropy-affecting inference so that
    float reductions are reproducible across processes."""
    n = torch.get_num_threads()
    torch.set_num_threads(1)
    try:
        yield
    finally:
        torch.set_num_threads(n)


class MergedInterCodec(nn.Module):
    """Joint Y/UV coding through learned latent embeddings (one flow codec)."""

    def __init__(self, ch: int, filters: int, latent_ch: int, hyper_ch: int,
                 scale_floor: float, init: str):
        super().__init__()
        self.embed_y = nn.Conv2d(1, ch, 3, stride=2, padding=1)
        self.embed_uv = nn.Conv2d(2, ch, 3, stride=1, padding=1)
        self.unembed_y = nn.ConvTranspose2d(2 * ch, 1, 3, stride=2, padding=1,
                                            output_padding=1)
        self.unembed_uv = nn.Conv2d(2 * ch, 2, 3, stride=1, padding=1)
        self.coder = CanfCoder(2 * ch, 2 * ch, filters=filters,
                               latent_ch=latent_ch, hyper=True,
                               hyper_ch=hyper_ch, scale_floor=scale_floor,
                               init=init)

    def pack(self, y: torch.Tensor, uv: torch.Tensor) -> torch.Tensor:
        return torch.cat([self.embed_y(y), self.embed_uv(uv)], dim=1)

    def unpack(self, feat: torch.Tensor):
        return self.unembed_y(feat), self.unembed_uv(feat)


class BFrameCodec(nn.Module):
    """Full codec: motion tools, conditional codecs and the intra codec."""

    def __init__(self, config: CodecConfig | None = None, init: str = "identity",
                 instrument: bool = True):
        super().__init__()
        cfg = config or CodecConfig()
        self.config = cfg
        self.box = ContextBox()
        self.menet = MENet(levels=3, filters=cfg.menet_filters)
        self.mpnet = MPNet(filters=cfg.mpnet_filters)
        self.mcnet_y = MCNet(1)
        self.mcnet_uv = MCNet(2)
        self.motion_codec = CanfCoder(
            4, 4, filters=cfg.motion_filters, latent_ch=cfg.motion_latent_ch,
            hyper=True, hyper_ch=cfg.hyper_ch, scale_floor=cfg.scale_floor,
            init=init)

        mode = cfg.coding_mode
        self.inter_y = self.inter_uv = self.inter_joint = None
        if mode in ("separate", "independent"):
            self.inter_y = CanfCoder(
                1, 1, filters=cfg.filters, latent_ch=cfg.latent_ch, hyper=True,
                hyper_ch=cfg.hyper_ch, scale_floor=cfg.scale_floor, init=init)
            uv_cond = 3 if mode == "separate" else 2
            self.inter_uv = CanfCoder(
                2, uv_cond, filters=cfg.filters, latent_ch=cfg.latent_ch,
                hyper=False, prior_ch=uv_cond, prior_filters=cfg.filters,
                scale_floor=cfg.scale_floor, init=init)
        elif mode == "merged":
            self.inter_joint = MergedInterCodec(
                cfg.merged_ch, cfg.filters, cfg.latent_ch, cfg.hyper_ch,
                cfg.scale_floor, init)
        elif mode == "space_to_depth":
            self.inter_joint = CanfCoder(
                6, 6, filters=cfg.filters, latent_ch=cfg.latent_ch, hyper=True,
                hyper_ch=cfg.hyper_ch, scale_floor=cfg.scale_floor, init=init)
        elif mode == "yuv444":
            self.inter_joint = CanfCoder(
                3, 3, filters=cfg.filters, latent_ch=cfg.latent_ch, hyper=True,
                hyper_ch=cfg.hyper_ch, scale_floor=cfg.scale_floor, init=init)

        self.intra_y = CanfCoder(
            1, 0, filters=cfg.intra_filters, latent_ch=cfg.intra_latent_ch,
            hyper=True, hyper_ch=cfg.hyper_ch, scale_floor=cfg.scale_floor,
            init=init)
        self.intra_uv = CanfCoder(
            2, 1, filters=cfg.intra_filters, latent_ch=cfg.intra_latent_ch,
            hyper=True, hyper_ch=cfg.hyper_ch, scale_floor=cfg.scale_floor,
            init=init)

        self.af_counts = {}
        if instrument:
            self.attach_af_everywhere()

    # -- instrumentation ------------------------------------------------------

    def attach_af_everywhere(self) -> dict:
        """Attach one AF module after every convolution of the codecs.

        Motion and inter codecs use the discrete rate index plus the coding
        level; the intra codec uses continuous-rate modulation without a
        coding level.  Raises if any codec is already instrumented.
        """
        cfg = self.config
        counts = {}
        kwargs = dict(content_adaptive=cfg.af_content_adaptive,
                      coding_level=cfg.af_coding_level,
                      lambda_table=cfg.lambda_table)
        counts["motion"] = attach_af(self.motion_codec, self.box, **kwargs)
        inter = [m for m in (self.inter_y, self.inter_uv, self.inter_joint)
                 if m is not None]
        counts["inter"] = sum(attach_af(m, self.box, **kwargs) for m in inter)
        counts["intra"] = sum(
            attach_af(m, self.box, content_adaptive=cfg.af_content_adaptive,
                      coding_level=False, continuous=True,
                      lambda_table=cfg.lambda_table)
            for m in (self.intra_y, self.intra_uv))
        self.af_counts = counts
        return counts

    def instrumented_conv_count(self) -> int:
        modules = [self.motion_codec, self.intra_y, self.intra_uv] + [
            m for m in (self.inter_y, self.inter_uv, self.inter_joint)
            if m is not None]
        return sum(count_convs(m) for m in modules)

    # -- shared helpers ---------------------------------------------------------

    def _to444(self, tf: TFrame) -> torch.Tensor:
        uv = F.interpolate(tf.uv, scale_factor=2, mode="bilinear",
                           align_corners=False)
        return torch.cat([tf.y, uv], dim=1)

    def estimate_flows(self, cur: TFrame, past: TFrame, fut: TFrame) -> torch.Tensor:
        cur444 = self._to444(cur)
        return torch.cat([self.menet(cur444, self._to444(past)),
                          self.menet(cur444, self._to444(fut))], dim=1)

    def predict_flows(self, past: TFrame, fut: TFrame) -> torch.Tensor:
        return self.mpnet(self.menet, self._to444(past), self._to444(fut))

    def compensate(self, past: TFrame, fut: TFrame, flows: torch.Tensor):
        x_c_y = self.mcnet_y(past.y, fut.y, flows[:, 0:2], flows[:, 2:4])
        fd = downscale_flow_tensor(flows)
        x_c_uv = self.mcnet_uv(past.uv, fut.uv, fd[:, 0:2], fd[:, 2:4])
        return x_c_y, x_c_uv

    def _pack_joint(self, y, uv):
        mode = self.config.coding_mode
        if mode == "space_to_depth":
            return torch.cat([F.pixel_unshuffle(y, 2), uv], dim=1)
        if mode == "yuv444":
            up = F.interpolate(uv, scale_factor=2, mode="bilinear",
                               align_corners=False)
            return torch.cat([y, up], dim=1)
        raise ValueError(f"no joint packing for mode {self.config.coding_mode}")

    def _unpack_joint(self, t):
        mode = self.config.coding_mode
        if mode == "space_to_depth":
            return F.pixel_shuffle(t[:, :4], 2), t[:, 4:6]
        if mode == "yuv444":
            return t[:, 0:1], F.avg_pool2d(t[:, 1:3], 2)
        raise ValueError(f"no joint packing for mode {self.config.coding_mode}")

    def _set_ctx(self, ctx: RateContext):
        self.box.ctx = ctx

    # -- differentiable clip coding (training) -----------------------------------

    def code_frame_train(self, entry, cur: TFrame, recon: dict,
                         ctx: RateContext, mode: str):
        """Train-mode coding of one GOP entry; returns (TFrame, bits, mid_penalty)."""
        self._set_ctx(ctx)
        if entry.frame_type == "I":
            y_hat, bzy, bhy, ymid = self.intra_y(cur.y, mode=mode)
            cond = F.avg_pool2d(y_hat, 2)
            uv_hat, bzu, bhu, uvmid = self.intra_uv(cur.uv, cond=cond, mode=mode)
            bits = bzy + bhy + bzu + bhu
            mid = (ymid ** 2).mean() + (uvmid ** 2).mean()
            return TFrame(y_hat, uv_hat), bits, mid

        past, fut = recon[entry.ref_past], recon[entry.ref_future]
        flows = self.estimate_flows(cur, past, fut)
        pred = self.predict_flows(past, fut)
        m_hat, bzm, bhm, mmid = self.motion_codec(
            flows, cond=pred, start=pred, mode=mode)
        m_hat = m_hat.clamp(-FLOW_LIMIT, FLOW_LIMIT)
        mid = ((mmid - pred) ** 2).mean()
        x_c_y, x_c_uv = self.compensate(past, fut, m_hat)
        cmode = self.config.coding_mode
        if cmode in ("separate", "independent"):
            y_hat, bzy, bhy, ymid = self.inter_y(
                cur.y, cond=x_c_y, start=x_c_y, mode=mode)
            mid = mid + ((ymid - x_c_y) ** 2).mean()
            if cmode == "separate":
                cond_uv = torch.cat([x_c_uv, F.avg_pool2d(y_hat, 2)], dim=1)
            else:
                cond_uv = x_c_uv
            uv_hat, bzu, bhu, uvmid = self.inter_uv(
                cur.uv, cond=cond_uv, start=x_c_uv, prior_inp=cond_uv, mode=mode)
            mid = mid + ((uvmid - x_c_uv) ** 2).mean()
            bits = bzm + bhm + bzy + bhy + bzu + bhu
        elif cmode == "merged":
            x = self.inter_joint.pack(cur.y, cur.uv)
            cond = self.inter_joint.pack(x_c_y, x_c_uv)
            f_hat, bz, bh, fmid = self.inter_joint.coder(
                x, cond=cond, start=cond, mode=mode)
            mid = mid + ((fmid - cond) ** 2).mean()
            y_hat, uv_hat = self.inter_joint.unpack(f_hat)
            bits = bzm + bhm + bz + bh
        else:
            x = self._pack_joint(cur.y, cur.uv)
            cond = self._pack_joint(x_c_y, x_c_uv)
            j_hat, bz, bh, jmid = self.inter_joint(
                x, cond=cond, start=cond, mode=mode)
            mid = mid + ((jmid - cond) ** 2).mean()
            y_hat, uv_hat = self._unpack_joint(j_hat)
            bits = bzm + bhm + bz + bh
        return TFrame(y_hat, uv_hat), bits, mid

    def forward_clip(self, tframes: list, plan: GOPPlan, ctx: RateContext,
                     mode: str | None = None):
        """Code a clip per its GOP plan (training path, reconstructions
        propagate as references).  Returns display-ordered reconstructions,
        per-frame bit estimates and the summed flow-consistency penalty."""
        mode = mode or self.config.quant_mode
        recon, bits, mids = {}, {}, []
        for entry in plan.entries:
            ctx_f = replace(ctx, c=entry.c)
            out, b, mid = self.code_frame_train(
                entry, tframes[entry.display_index], recon, ctx_f, mode)
            recon[entry.display_index] = out
            bits[entry.display_index] = b
            mids.append(mid)
        n = plan.num_frames
        return ([recon[i] for i in range(n)],
                [bits[i] for i in range(n)],
                torch.stack(mids).sum())

    # -- inference: per-codec compress/decompress ---------------------------------

    @torch.no_grad()
    def _compress_canf(self, codec: CanfCoder, main_name: str, x, cond, start,
                       prior_inp, coder):
        x1, z2 = codec.flow_encode(x, cond)
        subs = []
        est = {"hyper_bits": 0.0}
        z_hw = z2.shape[-2:]
        if codec.hyper:
            h_sym = round_away(codec.hyper_analysis(z2))
            payload, crc = encode_factorized_payload(h_sym, codec.hyper_model, coder)
            subs.append(Substream("hyper", payload, crc))
            est["hyper_bits"] = codec.hyper_model.est_bits(h_sym)
            mean, scale = codec.entropy_params(h_float=h_sym, z_hw=z_hw)
        else:
            mean, scale = codec.entropy_params(prior_inp=prior_inp, z_hw=z_hw)
        z_sym = round_away(z2 - mean)
        payload, crc = encode_gaussian_payload(z_sym, scale, coder)
        subs.append(Substream(main_name, payload, crc))
        est["main_bits"] = codec.gaussian.est_bits(z_sym + mean, mean, scale)
        dec_start = torch.zeros_like(x) if start is None else start
        x_hat = codec.flow_decode(dec_start, z_sym + mean, cond)
        return subs, x_hat, est

    @torch.no_grad()
    def _decompress_canf(self, codec: CanfCoder, main_name: str, subs, cond,
                         start, prior_inp, coder, out_hw):
        lh, lw = out_hw[0] // LATENT_STRIDE, out_hw[1] // LATENT_STRIDE
        if codec.hyper:
            sub = subs.pop(0)
            if sub.name != "hyper":
                raise BitstreamError(f"expected hyper substream, got {sub.name}")
            hh, hww = CanfCoder.hyper_shape_for((lh, lw))
            shape = (1, codec.hyper_ch, hh, hww)
            h_sym, _, crc = decode_factorized_payload(
                sub.payload, 0, codec.hyper_model, shape, coder)
            if crc != sub.crc:
                raise ChecksumError(f"hyper substream of {main_name} corrupt")
            mean, scale = codec.entropy_params(h_float=h_sym, z_hw=(lh, lw))
        else:
            mean, scale = codec.entropy_params(prior_inp=prior_inp, z_hw=(lh, lw))
        sub = subs.pop(0)
        if sub.name != main_name:
            raise BitstreamError(f"expected {main_name} substream, got {sub.name}")
        z_sym, _, crc = decode_gaussian_payload(sub.payload, 0, scale, coder)
        if crc != sub.crc:
            raise ChecksumError(f"{main_name} substream corrupt")
        if start is None:
            start = z_sym.new_zeros((1, codec.in_ch, out_hw[0], out_hw[1]))
        return codec.flow_decode(start, z_sym + mean, cond)

    # -- inference: frame coding ---------------------------------------------------

    @torch.no_grad()
    def compress_intra(self, cur: TFrame, ctx: RateContext, coder):
        self._set_ctx(ctx)
        subs_y, y_raw, est_y = self._compress_canf(
            self.intra_y, "intra_y", cur.y, None, None, None, coder)
        y_hat = y_raw.clamp(0, 1)
        cond = F.avg_pool2d(y_hat, 2)
        subs_uv, uv_raw, est_uv = self._compress_canf(
            self.intra_uv, "intra_uv", cur.uv, cond, None, None, coder)
        uv_hat = uv_raw.clamp(0, 1)
        est = {"intra_y": est_y, "intra_uv": est_uv}
        return subs_y + subs_uv, TFrame(y_hat, uv_hat), est

    @torch.no_grad()
    def decompress_intra(self, fb: FrameBitstream, ctx: RateContext, coder, hw):
        self._set_ctx(ctx)
        subs = list(fb.substreams)
        y_raw = self._decompress_canf(
            self.intra_y, "intra_y", subs, None, None, None, coder, hw)
        y_hat = y_raw.clamp(0, 1)
        cond = F.avg_pool2d(y_hat, 2)
        uv_raw = self._decompress_canf(
            self.intra_uv, "intra_uv", subs, cond, None, None, coder,
            (hw[0] // 2, hw[1] // 2))
        return TFrame(y_hat, uv_raw.clamp(0, 1))

    @torch.no_grad()
    def _compress_inter(self, cur: TFrame, x_c_y, x_c_uv, coder):
        mode = self.config.coding_mode
        if mode in ("separate", "independent"):
            subs, y_raw, est_y = self._compress_canf(
                self.inter_y, "inter_y", cur.y, x_c_y, x_c_y, None, coder)
            y_hat = y_raw.clamp(0, 1)
            cond_uv = self._uv_condition(x_c_uv, y_hat)
            subs_uv, uv_raw, est_uv = self._compress_canf(
                self.inter_uv, "inter_uv", cur.uv, cond_uv, x_c_uv, cond_uv,
                coder)
            return (subs + subs_uv, TFrame(y_hat, uv_raw.clamp(0, 1)),
                    {"inter_y": est_y, "inter_uv": est_uv})
        if mode == "merged":
            x = self.inter_joint.pack(cur.y, cur.uv)
            cond = self.inter_joint.pack(x_c_y, x_c_uv)
            subs, f_hat, est = self._compress_canf(
                self.inter_joint.coder, "inter_yuv", x, cond, cond, None, coder)
            y_raw, uv_raw = self.inter_joint.unpack(f_hat)
        else:
            x = self._pack_joint(cur.y, cur.uv)
            cond = self._pack_joint(x_c_y, x_c_uv)
            subs, j_hat, est = self._compress_canf(
                self.inter_joint, "inter_yuv", x, cond, cond, None, coder)
            y_raw, uv_raw = self._unpack_joint(j_hat)
        return (subs, TFrame(y_raw.clamp(0, 1), uv_raw.clamp(0, 1)),
                {"inter_yuv": est})

    def _uv_condition(self, x_c_uv, y_hat):
        """Coupling/prior condition for the UV codec.

        In the default mode the decoded luma is a live conditioning signal;
        the "independent" variant has no cross-component pathway at all.
        """
        if self.config.coding_mode == "separate":
            if y_hat is None:
                raise OrderingError(
                    "UV component coded before the Y component of this frame")
            return torch.cat([x_c_uv, F.avg_pool2d(y_hat, 2)], dim=1)
        return x_c_uv

    @torch.no_grad()
    def _decompress_inter(self, subs, x_c_y, x_c_uv, coder, hw):
        mode = self.config.coding_mode
        chw = (hw[0] // 2, hw[1] // 2)
        if mode in ("separate", "independent"):
            y_raw = self._decompress_canf(
                self.inter_y, "inter_y", subs, x_c_y, x_c_y, None, coder, hw)
            y_hat = y_raw.clamp(0, 1)
            cond_uv = self._uv_condition(x_c_uv, y_hat)
            uv_raw = self._decompress_canf(
                self.inter_uv, "inter_uv", subs, cond_uv, x_c_uv, cond_uv,
                coder, chw)
            return TFrame(y_hat, uv_raw.clamp(0, 1))
        if mode == "merged":
            cond = self.inter_joint.pack(x_c_y, x_c_uv)
            f_hat = self._decompress_canf(
                self.inter_joint.coder, "inter_yuv", subs, cond, cond, None,
                coder, chw)
            y_raw, uv_raw = self.inter_joint.unpack(f_hat)
        else:
            cond = self._pack_joint(x_c_y, x_c_uv)
            jhw = chw if mode == "space_to_depth" else hw
            j_hat = self._decompress_canf(
                self.inter_joint, "inter_yuv", subs, cond, cond, None, coder, jhw)
            y_raw, uv_raw = self._unpack_joint(j_hat)
        return TFrame(y_raw.clamp(0, 1), uv_raw.clamp(0, 1))

    @torch.no_grad()
    def compress_bframe(self, cur: TFrame, past: TFrame, fut: TFrame,
                        ctx: RateContext, coder):
        self._set_ctx(ctx)
        flows = self.estimate_flows(cur, past, fut)
        pred = self.predict_flows(past, fut)
        subs_m, flows_hat, est_m = self._compress_canf(
            self.motion_codec, "motion", flows, pred, pred, None, coder)
        flows_hat = flows_hat.clamp(-FLOW_LIMIT, FLOW_LIMIT)
        x_c_y, x_c_uv = self.compensate(past, fut, flows_hat)
        subs_i, rec, est_i = self._compress_inter(cur, x_c_y, x_c_uv, coder)
        est = {"motion": est_m, **est_i}
        return subs_m + subs_i, rec, est, flows_hat

    @torch.no_grad()
    def decompress_bframe(self, fb: FrameBitstream, past: TFrame, fut: TFrame,
                          ctx: RateContext, coder, hw):
        self._set_ctx(ctx)
        pred = self.predict_flows(past, fut)
        subs = list(fb.substreams)
        flows_hat = self._decompress_canf(
            self.motion_codec, "motion", subs, pred, pred, None, coder, hw)
        flows_hat = flows_hat.clamp(-FLOW_LIMIT, FLOW_LIMIT)
        x_c_y, x_c_uv = self.compensate(past, fut, flows_hat)
        return self._decompress_inter(subs, x_c_y, x_c_uv, coder, hw)

    # -- spec-level single-component operations ------------------------------------

    @torch.no_grad()
    def encode_motion(self, flows: torch.Tensor, predicted: torch.Tensor,
                      ctx: RateContext, coder=None):
        """Code a 4-channel bidirectional flow stack against its prediction."""
        coder = coder or ReferenceCoder()
        self._set_ctx(ctx)
        subs, flows_hat, est = self._compress_canf(
            self.motion_codec, "motion", flows, predicted, predicted, None, coder)
        return subs, flows_hat.clamp(-FLOW_LIMIT, FLOW_LIMIT), est

    @torch.no_grad()
    def encode_inter_y(self, x_y: torch.Tensor, x_c_y: torch.Tensor,
                       ctx: RateContext, coder=None):
        coder = coder or ReferenceCoder()
        self._set_ctx(ctx)
        if self.inter_y is None:
            raise RuntimeError(
                f"mode {self.config.coding_mode!r} has no separate Y codec")
        subs, y_raw, est = self._compress_canf(
            self.inter_y, "inter_y", x_y, x_c_y, x_c_y, None, coder)
        return subs, y_raw.clamp(0, 1), est

    @torch.no_grad()
    def encode_inter_uv(self, x_uv: torch.Tensor, x_c_uv: torch.Tensor,
                        x_a: torch.Tensor | None, ctx: RateContext, coder=None):
        """Code the chroma pair; ``x_a`` is this frame's already-decoded luma."""
        coder = coder or ReferenceCoder()
        self._set_ctx(ctx)
        if self.inter_uv is None:
            raise RuntimeError(
                f"mode {self.config.coding_mode!r} has no separate UV codec")
        cond_uv = self._uv_condition(x_c_uv, x_a)
        subs, uv_raw, est = self._compress_canf(
            self.inter_uv, "inter_uv", x_uv, cond_uv, x_c_uv, cond_uv, coder)
        return subs, uv_raw.clamp(0, 1), est

    @torch.no_grad()
    def encode_intra(self, frame: TFrame, lambda_value: float, coder=None):
        """Intra-code one frame at a continuous rate parameter."""
        lambda_value = self.clamp_intra_lambda(lambda_value)
        ctx = RateContext(0, 0, lambda_value)
        coder = coder or ReferenceCoder()
        return self.compress_intra(frame, ctx, coder)

    def clamp_intra_lambda(self, lambda_value: float) -> float:
        cfg = self.config
        if not cfg.intra_lambda_min <= lambda_value <= cfg.intra_lambda_max:
            import warnings
            clamped = min(max(lambda_value, cfg.intra_lambda_min),
                          cfg.intra_lambda_max)
            warnings.warn(
                f"intra lambda {lambda_value:.1f} outside trained range "
                f"[{cfg.intra_lambda_min:.0f}, {cfg.intra_lambda_max:.0f}]; "
                f"clamped to {clamped:.1f}")
            return clamped
        return float(lambda_value)

    # -- inference: whole sequences ----------------------------------------------

    @torch.no_grad()
    def encode_sequence(self, frames: list, intra_period: int,
                        lambda_index: int, intra_lambda: float | None = None,
                        coder=None, coder_name: str = "rans16",
                        collect_flows: bool = False):
        """Encode display-ordered frames; returns (stream bytes, reconstructions
        in display order, stats dict)."""
        if not frames:
            raise ValueError("no frames to encode")
        coder = coder or ReferenceCoder()
        cfg = self.config
        if intra_lambda is None:
            intra_lambda = cfg.lambda_table[lambda_index]
        intra_lambda = self.clamp_intra_lambda(intra_lambda)
        width, height = frames[0].width, frames[0].height
        plan = plan_gop(len(frames), intra_period)
        problems = validate(plan)
        if problems:
            raise RuntimeError(f"internal GOP plan invalid: {problems[0]}")

        with single_thread():
            tframes = [frame_to_tensors(f, cfg.pad_multiple) for f in frames]
            hw = tframes[0].y.shape[-2:]
            recon: dict[int, TFrame] = {}
            chunks: list[FrameBitstream] = []
            stats = {"frames": [], "flows": {} if collect_flows else None}
            for entry in plan.entries:
                ctx = RateContext(lambda_index, entry.c, intra_lambda)
                cur = tframes[entry.display_index]
                if entry.frame_type == "I":
                    subs, rec, est = self.compress_intra(cur, ctx, coder)
                else:
                    for ref in (entry.ref_past, entry.ref_future):
                        if ref not in recon:
                            raise OrderingError(
                                f"frame {entry.display_index} needs undecoded "
                                f"reference {ref}")
                    subs, rec, est, flows_hat = self.compress_bframe(
                        cur, recon[entry.ref_past], recon[entry.ref_future],
                        ctx, coder)
                    if collect_flows:
                        stats["flows"][entry.display_index] = flows_hat.cpu()
                recon[entry.display_index] = rec
                fb = FrameBitstream(entry.frame_type, entry.c, subs)
                chunks.append(fb)
                stats["frames"].append({
                    "display_index": entry.display_index,
                    "frame_type": entry.frame_type,
                    "c": entry.c,
                    "bytes": fb.byte_length,
                    "substream_bytes": {s.name: len(s.payload) for s in subs},
                    "est_bits": est,
                })

        header = SequenceHeader(
            width=width, height=height, frame_count=len(frames),
            intra_period=intra_period, lambda_index=lambda_index,
            intra_lambda=float(intra_lambda), coding_mode=cfg.coding_mode,
            coder=coder_name, checkpoint_hash=model_hash(self),
            lambda_table=cfg.lambda_table)
        data = write_sequence(header, chunks)
        stats["total_bytes"] = len(data)
        stats["header_bytes"] = header.byte_length
        stats["plan"] = plan
        recons = [tensors_to_frame(recon[i], height, width)
                  for i in range(len(frames))]
        return data, recons, stats

    @torch.no_grad()
    def decode_sequence(self, data: bytes, coder=None, verify_hash: bool = True):
        """Decode a sequence bitstream; returns (frames in display order, header)."""
        coder = coder or ReferenceCoder()
        header, chunks = read_sequence(data)
        if header.coding_mode != self.config.coding_mode:
            raise CheckpointMismatchError(
                f"stream was coded in mode {header.coding_mode!r}, checkpoint "
                f"is {self.config.coding_mode!r}")
        if verify_hash and header.checkpoint_hash != model_hash(self):
            raise CheckpointMismatchError(
                "stream checkpoint hash does not match the loaded weights")
        plan = plan_gop(header.frame_count, header.intra_period)
        cfg = self.config
        pad = cfg.pad_multiple
        hw = (header.height + (-header.height) % pad,
              header.width + (-header.width) % pad)
        with single_thread():
            recon: dict[int, TFrame] = {}
            for entry, fb in zip(plan.entries, chunks):
                if fb.frame_type != entry.frame_type:
                    raise BitstreamError(
                        f"frame {entry.display_index}: stream says "
                        f"{fb.frame_type}, GOP plan says {entry.frame_type}")
                ctx = RateContext(header.lambda_index, entry.c,
                                  header.intra_lambda)
                if entry.frame_type == "I":
                    rec = self.decompress_intra(fb, ctx, coder, hw)
                else:
                    rec = self.decompress_bframe(
                        fb, recon[entry.ref_past], recon[entry.ref_future],
                        ctx, coder, hw)
                recon[entry.display_index] = rec
        frames = [tensors_to_frame(recon[i], header.height, header.width)
                  for i in range(header.frame_count)]
        return frames, header


# -- checkpoints -------------------------------------------------------------------

CHECKPOINT_VERSION = 1


def save_checkpoint(path, codec: BFrameCodec, extra: dict | None = None):
    payload = {
        "version": CHECKPOINT_VERSION,
        "config": asdict(codec.config),
        "state_dict": codec.state_dict(),
        "extra": extra or {},
    }
    torch.save(payload, path)


def load_checkpoint(path) -> tuple:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {payload.get('version')}")
    cfg = CodecConfig(**payload["config"])
    codec = BFrameCodec(cfg, init="identity")
    codec.load_state_dict(payload["state_dict"])
    codec.eval()
    return codec, payload.get("extra", {})
