"""Quantizers and entropy models for the flow codecs.

Two model families are used: a per-channel learned factorized model for the
hyper-latent and a conditional Gaussian (mean + scale from a prior network)
for the main latent.  Scales are clamped to ``SCALE_MIN`` so every integer
bin keeps strictly positive probability.

Rate estimates here are differentiable surrogates; actual byte counts come
from :mod:`hbvc.rans` tables built out of the same probabilities.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .rans import CdfTable, build_cdf, build_cdf_from_pmf

SCALE_MIN = 0.11
SCALE_MAX = 64.0
SCALE_LEVELS = 64
LIKELIHOOD_MIN = 2.0 ** -32


class _LowerBoundFn(torch.autograd.Function):
    """Clamp from below but let gradients that push the input upward pass."""

    @staticmethod
    def forward(ctx, x, bound):
        ctx.save_for_backward(x)
        ctx.bound = bound
        return x.clamp_min(bound)

    @staticmethod
    def backward(ctx, grad):
        (x,) = ctx.saved_tensors
        passthrough = (x >= ctx.bound) | (grad < 0)
        return grad * passthrough, None


def lower_bound(x: torch.Tensor, bound: float) -> torch.Tensor:
    return _LowerBoundFn.apply(x, float(bound))


def round_away(x: torch.Tensor) -> torch.Tensor:
    """Round to nearest integer, ties away from zero."""
    return torch.sign(x) * torch.floor(x.abs() + 0.5)


def quantize(x: torch.Tensor, mode: str, mean: torch.Tensor | None = None) -> torch.Tensor:
    """Quantize (or perturb) a latent tensor.

    noise  -- additive uniform noise in [-0.5, 0.5) (training surrogate)
    ste    -- rounding with straight-through gradients
    round  -- hard rounding, ties away from zero (inference)
    pass   -- identity (quantization disabled)

    With ``mean`` given, rounding modes quantize the residual ``x - mean`` and
    add the mean back, so coded symbols are the integer residuals.
    """
    if mode == "pass":
        return x
    if mode == "noise":
        return x + (torch.rand_like(x) - 0.5)
    if mode in ("round", "ste"):
        centered = x if mean is None else x - mean
        rounded = round_away(centered)
        if mean is not None:
            rounded = rounded + mean
        if mode == "ste":
            return x + (rounded - x).detach()
        return rounded
    raise ValueError(f"unknown quantize mode {mode!r}")


def rate_bits(likelihood: torch.Tensor) -> torch.Tensor:
    """Total bits implied by per-element likelihoods (clamped, differentiable)."""
    return -torch.log2(lower_bound(likelihood, LIKELIHOOD_MIN)).sum()


class GaussianConditional(nn.Module):
    """Mean/scale Gaussian entropy model over unit-width integer bins."""

    def __init__(self, scale_floor: float = SCALE_MIN):
        super().__init__()
        self.scale_floor = float(scale_floor)

    def clamp_scale(self, scale: torch.Tensor) -> torch.Tensor:
        return lower_bound(scale, self.scale_floor)

    @staticmethod
    def _cdf(x: torch.Tensor) -> torch.Tensor:
        return 0.5 * torch.erfc(-x * (2.0 ** -0.5))

    def likelihood(self, x: torch.Tensor, mean: torch.Tensor,
                   scale: torch.Tensor) -> torch.Tensor:
        scale = self.clamp_scale(scale)
        values = (x - mean).abs().neg()
        upper = self._cdf((values + 0.5) / scale)
        lower = self._cdf((values - 0.5) / scale)
        return upper - lower

    def forward(self, x, mean, scale, mode: str):
        x_hat = quantize(x, mode, mean=mean if mode in ("round", "ste") else None)
        return x_hat, self.likelihood(x_hat, mean, scale)

    def est_bits(self, x_hat, mean, scale) -> float:
        """Inference-time rate estimate in float64 for oracle-grade accuracy."""
        with torch.no_grad():
            lik = self.likelihood(x_hat.double(), mean.double(), scale.double())
            return float(rate_bits(lik).item())


class _FactorizedCell(nn.Module):
    def __init__(self, channels, in_dim, out_dim, scale, factor=True):
        super().__init__()
        init = math.log(math.expm1(1.0 / scale / out_dim))
        self.weight = nn.Parameter(torch.full((channels, out_dim, in_dim), init))
        self.bias = nn.Parameter(torch.empty(channels, out_dim, 1).uniform_(-0.5, 0.5))
        self.factor = nn.Parameter(torch.zeros(channels, out_dim, 1)) if factor else None

    def forward(self, x):
        out = F.softplus(self.weight) @ x + self.bias
        if self.factor is not None:
            out = out + torch.tanh(self.factor) * torch.tanh(out)
        return out


class FactorizedEntropyModel(nn.Module):
    """Learned per-channel cumulative model (deep factorized density)."""

    def __init__(self, channels: int, filters=(3, 3, 3), init_scale: float = 10.0):
        super().__init__()
        self.channels = channels
        dims = (1,) + tuple(filters) + (1,)
        scale = init_scale ** (1.0 / (len(dims) - 1))
        self.cells = nn.ModuleList([
            _FactorizedCell(channels, dims[i], dims[i + 1], scale,
                            factor=i < len(dims) - 2)
            for i in range(len(dims) - 1)
        ])

    def _logits_cdf(self, x: torch.Tensor) -> torch.Tensor:
        """x: (C, 1, N) -> logits of the cumulative at x."""
        for cell in self.cells:
            x = cell(x)
        return x

    def likelihood(self, x: torch.Tensor) -> torch.Tensor:
        b, c, h, w = x.shape
        flat = x.transpose(0, 1).reshape(c, 1, -1)
        upper = self._logits_cdf(flat + 0.5)
        lower = self._logits_cdf(flat - 0.5)
        sign = -torch.sign(upper + lower).detach()
        lik = torch.abs(torch.sigmoid(sign * upper) - torch.sigmoid(sign * lower))
        return lik.reshape(c, b, h, w).transpose(0, 1)

    def forward(self, x, mode: str):
        x_hat = quantize(x, mode)
        return x_hat, self.likelihood(x_hat)

    def est_bits(self, x_hat) -> float:
        with torch.no_grad():
            return float(rate_bits(self.likelihood(x_hat)).item())

    @torch.no_grad()
    def integer_pmf(self, lo: int, hi: int) -> np.ndarray:
        """Per-channel bin masses over lo..hi with the tails folded into the ends.

        Returns (channels, hi-lo+1) float64, each row summing to 1.
        """
        grid = torch.arange(lo, hi + 1, dtype=torch.float32)
        flat = grid.view(1, 1, -1).expand(self.channels, 1, -1)
        upper = torch.sigmoid(self._logits_cdf(flat + 0.5)).squeeze(1).double()
        lower = torch.sigmoid(self._logits_cdf(flat - 0.5)).squeeze(1).double()
        pmf = (upper - lower).clamp_min(0)
        pmf[:, 0] += lower[:, 0]
        pmf[:, -1] += 1.0 - upper[:, -1]
        return pmf.numpy()


def scale_table() -> np.ndarray:
    """Log-spaced coding scales; prior scales snap to the nearest entry."""
    return np.exp(np.linspace(math.log(SCALE_MIN), math.log(SCALE_MAX), SCALE_LEVELS))


def scale_to_index(scale: torch.Tensor) -> torch.Tensor:
    """Map clamped scales to scale_table indices (identical on both codec ends)."""
    span = math.log(SCALE_MAX) - math.log(SCALE_MIN)
    idx = (torch.log(scale.clamp(SCALE_MIN, SCALE_MAX)) - math.log(SCALE_MIN)) / span
    return torch.round(idx * (SCALE_LEVELS - 1)).long()


@lru_cache(maxsize=32)
def gaussian_coding_tables(minmax: int, precision_bits: int = 16) -> list:
    """One zero-mean CdfTable per scale_table entry covering [-minmax, minmax]."""
    return [build_cdf(0.0, s, -minmax, minmax, precision_bits) for s in scale_table()]


def factorized_coding_tables(model: FactorizedEntropyModel, lo: int, hi: int,
                             precision_bits: int = 16) -> list:
    """Per-channel CdfTables for a factorized model over symbols lo..hi."""
    pmf = model.integer_pmf(lo, hi)
    return [build_cdf_from_pmf(pmf[c], lo, precision_bits)
            for c in range(model.channels)]
