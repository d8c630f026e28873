"""Adaptive feature modulation: per-channel affine adaptation of conv outputs.

Each instrumented convolution is followed by a module that pools its output
(global average), concatenates rate conditioning (the rate parameter, and for
the B-frame codecs a learned per-rate-point embedding plus the binary coding
level) and emits per-channel (gamma, beta).  The multiplier is parameterized
as 1 + delta with a zero-initialized head, so modulation is exactly the
identity before training.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn

LAMBDA_TABLE = (16384.0, 4096.0, 1024.0, 256.0, 128.0)


class DoubleAttachError(RuntimeError):
    """A codec graph was instrumented twice."""


@dataclass
class RateContext:
    """Rate conditioning for one coded frame.

    ``lambda_index`` selects from the discrete rate-point table (B-frame and
    motion codecs); ``lambda_value`` is the continuous rate parameter used by
    the intra codec.  ``c`` is the binary coding level (1 = deepest, never
    referenced).
    """

    lambda_index: int = 0
    c: int = 0
    lambda_value: float | None = None

    def __post_init__(self):
        if not 0 <= self.lambda_index < len(LAMBDA_TABLE):
            raise ValueError(f"lambda_index {self.lambda_index} out of range")
        if self.c not in (0, 1):
            raise ValueError(f"coding level must be 0 or 1, got {self.c}")
        if self.lambda_value is not None and self.lambda_value <= 0:
            raise ValueError("lambda_value must be positive")

    @property
    def lambda_inter(self) -> float:
        return LAMBDA_TABLE[self.lambda_index]

    @property
    def lambda_intra(self) -> float:
        return self.lambda_value if self.lambda_value is not None else self.lambda_inter


class ContextBox:
    """Mutable holder distributing the current RateContext to AF modules."""

    def __init__(self):
        self.ctx: RateContext | None = None


class AFModule(nn.Module):
    """Emit per-channel (gamma, beta) from pooled features and rate context."""

    GAIN_RANGE = 1.5

    def __init__(self, channels: int, *, content_adaptive=True, coding_level=True,
                 continuous=False, lambda_table=LAMBDA_TABLE, embed_dim=4):
        super().__init__()
        self.channels = channels
        self.content_adaptive = content_adaptive
        self.coding_level = coding_level and not continuous
        self.continuous = continuous
        self.lambda_table = tuple(lambda_table)
        self.log_lambda_max = math.log(max(self.lambda_table))
        in_dim = 1  # scalar log-lambda is always present
        if content_adaptive:
            in_dim += channels
        if not continuous:
            self.embed = nn.Embedding(len(self.lambda_table), embed_dim)
            in_dim += embed_dim
        else:
            self.embed = None
        if self.coding_level:
            in_dim += 2
        self.in_dim = in_dim
        self.fc1 = nn.Linear(in_dim, channels)
        self.fc2 = nn.Linear(channels, 2 * channels)
        nn.init.zeros_(self.fc2.weight)
        nn.init.zeros_(self.fc2.bias)

    def affine_params(self, features: torch.Tensor, ctx: RateContext):
        b = features.shape[0]
        parts = []
        if self.content_adaptive:
            parts.append(features.mean(dim=(2, 3)))
        lam = ctx.lambda_intra if self.continuous else ctx.lambda_inter
        scalar = math.log(lam) / self.log_lambda_max
        parts.append(features.new_full((b, 1), scalar))
        if self.embed is not None:
            idx = torch.full((b,), ctx.lambda_index, dtype=torch.long,
                             device=features.device)
            parts.append(self.embed(idx))
        if self.coding_level:
            onehot = features.new_zeros((b, 2))
            onehot[:, ctx.c] = 1.0
            parts.append(onehot)
        h = torch.relu(self.fc1(torch.cat(parts, dim=1)))
        delta, beta = self.fc2(h).chunk(2, dim=1)
        # gain bounded to (1-GAIN_RANGE, 1+GAIN_RANGE): multiplicative blowup
        # through stacked modulated convs is the main training hazard; the
        # bound is wide enough for the rate knob and exact-identity at init
        gamma = 1.0 + self.GAIN_RANGE * torch.tanh(delta / self.GAIN_RANGE)
        return gamma, beta

    def forward(self, features: torch.Tensor, ctx: RateContext) -> torch.Tensor:
        if features.shape[1] != self.channels:
            raise ValueError(
                f"feature channels {features.shape[1]} != module width {self.channels}")
        gamma, beta = self.affine_params(features, ctx)
        return features * gamma[:, :, None, None] + beta[:, :, None, None]


class ModulatedConv(nn.Module):
    """A convolution with AF modulation applied to its output."""

    def __init__(self, conv: nn.Module, af: AFModule, box: ContextBox):
        super().__init__()
        self.conv = conv
        self.af = af
        self.box = box

    def forward(self, x):
        out = self.conv(x)
        if self.box.ctx is None:
            raise RuntimeError("no RateContext set before running a modulated codec")
        return self.af(out, self.box.ctx)


def attach_af(module: nn.Module, box: ContextBox, *, content_adaptive=True,
              coding_level=True, continuous=False,
              lambda_table=LAMBDA_TABLE) -> int:
    """Wrap every convolution under ``module`` with one AF module.

    Returns the number of instrumented convolutions; attaching twice raises.
    """
    count = 0
    for name, child in list(module.named_children()):
        if isinstance(child, ModulatedConv):
            raise DoubleAttachError(
                f"convolution {name!r} already carries an AF module")
        if isinstance(child, (nn.Conv2d, nn.ConvTranspose2d)):
            af = AFModule(child.out_channels, content_adaptive=content_adaptive,
                          coding_level=coding_level, continuous=continuous,
                          lambda_table=lambda_table)
            setattr(module, name, ModulatedConv(child, af, box))
            count += 1
        else:
            count += attach_af(child, box, content_adaptive=content_adaptive,
                               coding_level=coding_level, continuous=continuous,
                               lambda_table=lambda_table)
    return count


def count_convs(module: nn.Module) -> int:
    return sum(1 for m in module.modules()
               if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)))
