"""Conditional augmented-flow codec core.

A coder is two additive coupling pairs: each analysis net adds an increment
to the latent path (conditioned by channel-concatenation), each synthesis net
subtracts an update from the input path.  Running both pairs converts the
input toward the conditioning signal; the quantized second-step latent is
what gets entropy coded, and the decoder runs the exact inverse starting from
the conditioning signal (or zeros for unconditional/intra use).

Entropy parameters for the main latent come either from a factorized-coded
hyper-latent or, when ``hyper=False``, from a prior network fed with
causally available signals (temporal prior).
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .entropy import (
    FactorizedEntropyModel,
    GaussianConditional,
    SCALE_MIN,
    quantize,
    rate_bits,
    round_away,
)

LATENT_STRIDE = 8   # three stride-2 stages in each coupling net
HYPER_STRIDE = 4    # two more for the hyper-latent


class NumericError(RuntimeError):
    """Non-finite activations encountered; names the offending stage."""


def _check_finite(x: torch.Tensor, stage: str):
    if not torch.isfinite(x).all():
        raise NumericError(f"non-finite values after {stage}")


def _analysis_net(in_ch, filters, out_ch, kernel=5):
    pad = kernel // 2
    return nn.Sequential(
        nn.Conv2d(in_ch, filters, kernel, stride=2, padding=pad),
        nn.LeakyReLU(0.2, inplace=True),
        nn.Conv2d(filters, filters, kernel, stride=2, padding=pad),
        nn.LeakyReLU(0.2, inplace=True),
        nn.Conv2d(filters, out_ch, kernel, stride=2, padding=pad),
    )


def _synthesis_net(in_ch, filters, out_ch, kernel=5):
    pad = kernel // 2
    return nn.Sequential(
        nn.ConvTranspose2d(in_ch, filters, kernel, stride=2, padding=pad,
                           output_padding=1),
        nn.LeakyReLU(0.2, inplace=True),
        nn.ConvTranspose2d(filters, filters, kernel, stride=2, padding=pad,
                           output_padding=1),
        nn.LeakyReLU(0.2, inplace=True),
        nn.ConvTranspose2d(filters, out_ch, kernel, stride=2, padding=pad,
                           output_padding=1),
    )


def _zero_last_conv(net: nn.Sequential):
    last = net[-1]
    nn.init.zeros_(last.weight)
    if last.bias is not None:
        nn.init.zeros_(last.bias)


class TransformPair(nn.Module):
    """One coupling step: latent increment (analysis) + input update (synthesis)."""

    def __init__(self, step_index, in_ch, cond_ch, filters, latent_ch, kernel=5):
        super().__init__()
        self.step_index = step_index
        self.analysis = _analysis_net(in_ch + cond_ch, filters, latent_ch, kernel)
        self.synthesis = _synthesis_net(latent_ch, filters, in_ch, kernel)

    def enc_step(self, x, z, cond=None):
        inp = x if cond is None else torch.cat([x, cond], dim=1)
        z = self.analysis(inp) if z is None else z + self.analysis(inp)
        x = x - self.synthesis(z)
        return x, z

    def dec_step(self, x, z, cond=None):
        x = x + self.synthesis(z)
        inp = x if cond is None else torch.cat([x, cond], dim=1)
        z = z - self.analysis(inp)
        return x, z


@dataclass
class LatentBundle:
    """Coded latents of one coder pass.

    ``z2_hat``/``h2_hat`` hold the coded values as mean-removed residuals, so
    they are integer-valued at inference; the decoder restores the mean from
    the prior.  ``e_z``/``e_h`` are the augmented latent-path inputs (zero
    tensors here, see the decisions notes).
    """

    z2_hat: torch.Tensor
    h2_hat: torch.Tensor | None
    e_z: torch.Tensor
    e_h: torch.Tensor | None
    est_bits_z: float
    est_bits_h: float

    @property
    def est_bits(self) -> float:
        return self.est_bits_z + self.est_bits_h


class CanfCoder(nn.Module):
    """Two-pair conditional flow codec with a pluggable prior.

    in_ch/cond_ch   -- channels of the coded tensor and of the coupling condition
    hyper           -- use a factorized-coded hyper-latent for (mean, scale)
    prior_ch        -- with hyper=False, channels of the temporal-prior input
    init            -- "identity" zeroes every net's last layer so the whole
                       coder is a pass-through of the decode start at first;
                       "random" leaves default init (useful in tests)
    """

    def __init__(self, in_ch, cond_ch=0, *, filters=32, latent_ch=24,
                 hyper=True, hyper_ch=16, hyper_filters=32,
                 prior_ch=0, prior_filters=32, kernel=5,
                 scale_floor=SCALE_MIN, init="identity"):
        super().__init__()
        self.in_ch = in_ch
        self.cond_ch = cond_ch
        self.latent_ch = latent_ch
        self.hyper = hyper
        self.hyper_ch = hyper_ch if hyper else 0
        self.pair1 = TransformPair(1, in_ch, cond_ch, filters, latent_ch, kernel)
        self.pair2 = TransformPair(2, in_ch, cond_ch, filters, latent_ch, kernel)
        if hyper:
            self.hyper_analysis = nn.Sequential(
                nn.Conv2d(latent_ch, hyper_filters, 3, stride=1, padding=1),
                nn.LeakyReLU(0.2, inplace=True),
                nn.Conv2d(hyper_filters, hyper_filters, 5, stride=2, padding=2),
                nn.LeakyReLU(0.2, inplace=True),
                nn.Conv2d(hyper_filters, hyper_ch, 5, stride=2, padding=2),
            )
            self.hyper_synthesis = nn.Sequential(
                nn.ConvTranspose2d(hyper_ch, hyper_filters, 5, stride=2,
                                   padding=2, output_padding=1),
                nn.LeakyReLU(0.2, inplace=True),
                nn.ConvTranspose2d(hyper_filters, hyper_filters, 5, stride=2,
                                   padding=2, output_padding=1),
                nn.LeakyReLU(0.2, inplace=True),
                nn.Conv2d(hyper_filters, 2 * latent_ch, 3, stride=1, padding=1),
            )
            self.hyper_model = FactorizedEntropyModel(hyper_ch)
            self.prior_net = None
        else:
            if prior_ch <= 0:
                raise ValueError("prior_ch required when the hyperprior is removed")
            self.hyper_analysis = None
            self.hyper_synthesis = None
            self.hyper_model = None
            self.prior_net = _analysis_net(prior_ch, prior_filters,
                                           2 * latent_ch, kernel)
        self.gaussian = GaussianConditional(scale_floor)
        if init == "identity":
            self.init_identity()
        elif init != "random":
            raise ValueError(f"unknown init {init!r}")

    def init_identity(self):
        for pair in (self.pair1, self.pair2):
            _zero_last_conv(pair.analysis)
            _zero_last_conv(pair.synthesis)
        if self.hyper:
            _zero_last_conv(self.hyper_analysis)
            _zero_last_conv(self.hyper_synthesis)
        else:
            _zero_last_conv(self.prior_net)

    # -- flow ---------------------------------------------------------------

    def _cond(self, x, cond):
        if (cond is None) != (self.cond_ch == 0):
            raise ValueError("condition tensor does not match coder configuration")
        if cond is not None and cond.shape[-2:] != x.shape[-2:]:
            raise ValueError(
                f"condition resolution {tuple(cond.shape[-2:])} != "
                f"input {tuple(x.shape[-2:])}")
        return x if cond is None else torch.cat([x, cond], dim=1)

    def flow_encode(self, x, cond=None):
        """Run both coupling steps; returns (x1, z2) with the final input
        update deferred until the latent is quantized."""
        if x.shape[-1] % LATENT_STRIDE or x.shape[-2] % LATENT_STRIDE:
            raise ValueError(
                f"spatial dims must be multiples of {LATENT_STRIDE}, "
                f"got {tuple(x.shape[-2:])}")
        z1 = self.pair1.analysis(self._cond(x, cond))
        x1 = x - self.pair1.synthesis(z1)
        _check_finite(x1, "coupling step 1")
        z2 = z1 + self.pair2.analysis(self._cond(x1, cond))
        _check_finite(z2, "coupling step 2 (analysis)")
        return x1, z2

    def flow_decode(self, start, z_hat, cond=None):
        """Exact inverse of the coupling chain, starting the input path at
        ``start`` (the condition at inference, the true mid-state in tests)."""
        x1 = start + self.pair2.synthesis(z_hat)
        z1 = z_hat - self.pair2.analysis(self._cond(x1, cond))
        x_hat = x1 + self.pair1.synthesis(z1)
        _check_finite(x_hat, "coupling decode")
        return x_hat

    # -- priors -------------------------------------------------------------

    def entropy_params(self, h_float=None, prior_inp=None, z_hw=None):
        """Gaussian (mean, scale) for the main latent; output cropped to the
        latent's spatial size (stride chains may overshoot on odd sizes)."""
        if self.hyper:
            raw = self.hyper_synthesis(h_float)
        else:
            if prior_inp is None:
                raise ValueError("temporal-prior coder needs prior_inp")
            raw = self.prior_net(prior_inp)
        if z_hw is not None:
            raw = raw[:, :, :z_hw[0], :z_hw[1]]
        mean, scale_raw = raw.chunk(2, dim=1)
        return mean, self.gaussian.clamp_scale(scale_raw)

    @staticmethod
    def hyper_shape_for(z_hw) -> tuple:
        """Spatial size of the hyper-latent for a given latent size."""
        h = (z_hw[0] + 1) // 2
        w = (z_hw[1] + 1) // 2
        return ((h + 1) // 2, (w + 1) // 2)

    # -- differentiable training pass ----------------------------------------

    def forward(self, x, cond=None, start=None, prior_inp=None, mode="noise"):
        """Returns (x_hat, bits_z, bits_h, x_mid); x_mid is the input-path
        residue that training pulls toward the decode start."""
        x1, z2 = self.flow_encode(x, cond)
        z_hw = z2.shape[-2:]
        if self.hyper:
            h = self.hyper_analysis(z2)
            h_hat, h_lik = self.hyper_model(h, mode)
            mean, scale = self.entropy_params(h_float=h_hat, z_hw=z_hw)
            bits_h = rate_bits(h_lik)
        else:
            mean, scale = self.entropy_params(prior_inp=prior_inp, z_hw=z_hw)
            bits_h = x.new_zeros(())
        z_hat, z_lik = self.gaussian(z2, mean, scale, mode)
        bits_z = rate_bits(z_lik)
        x_mid = x1 - self.pair2.synthesis(z_hat)
        dec_start = torch.zeros_like(x) if start is None else start
        x_hat = self.flow_decode(dec_start, z_hat, cond)
        return x_hat, bits_z, bits_h, x_mid

    # -- spec-level encode/decode --------------------------------------------

    @torch.no_grad()
    def encode(self, x, cond=None, prior_inp=None, mode="infer"):
        """Quantize-and-bundle one tensor; returns (LatentBundle, x_recon_path).

        mode "infer" produces integer residual latents; "train" uses the
        noise surrogate; "pass" disables quantization (invertibility oracle).
        """
        if mode not in ("infer", "train", "pass"):
            raise ValueError(f"unknown encode mode {mode!r}")
        x1, z2 = self.flow_encode(x, cond)
        h_sym = None
        e_h = None
        est_bits_h = 0.0
        if self.hyper:
            h = self.hyper_analysis(z2)
            e_h = torch.zeros_like(h)
            if mode == "infer":
                h_sym = round_away(h)
            elif mode == "train":
                h_sym = quantize(h, "noise")
            else:
                h_sym = h
            est_bits_h = self.hyper_model.est_bits(h_sym)
            mean, scale = self.entropy_params(h_float=h_sym, z_hw=z2.shape[-2:])
        else:
            mean, scale = self.entropy_params(prior_inp=prior_inp,
                                              z_hw=z2.shape[-2:])
        if mode == "infer":
            z_sym = round_away(z2 - mean)
        elif mode == "train":
            z_sym = quantize(z2, "noise") - mean
        else:
            z_sym = z2 - mean
        z_abs = z_sym + mean
        est_bits_z = self.gaussian.est_bits(z_abs, mean, scale)
        x_recon_path = x1 - self.pair2.synthesis(z_abs)
        bundle = LatentBundle(
            z2_hat=z_sym, h2_hat=h_sym,
            e_z=torch.zeros_like(z2), e_h=e_h,
            est_bits_z=est_bits_z, est_bits_h=est_bits_h,
        )
        return bundle, x_recon_path

    @torch.no_grad()
    def decode(self, bundle: LatentBundle, cond=None, start=None, prior_inp=None):
        """Reconstruct from a bundle; deterministic given weights and inputs."""
        z_hw = bundle.z2_hat.shape[-2:]
        if self.hyper:
            mean, scale = self.entropy_params(h_float=bundle.h2_hat, z_hw=z_hw)
        else:
            mean, scale = self.entropy_params(prior_inp=prior_inp, z_hw=z_hw)
        if bundle.z2_hat.shape[1] != self.latent_ch:
            raise ValueError(
                f"latent has {bundle.z2_hat.shape[1]} channels, "
                f"coder expects {self.latent_ch}")
        z_hat = bundle.z2_hat + mean
        if start is None:
            hw = (z_hat.shape[-2] * LATENT_STRIDE, z_hat.shape[-1] * LATENT_STRIDE)
            start = z_hat.new_zeros((z_hat.shape[0], self.in_ch) + hw)
        return self.flow_decode(start, z_hat, cond)
