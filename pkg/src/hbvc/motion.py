"""Motion estimation, prediction, resampling and compensation.

Flow convention: a field (u, v) at the current frame's grid samples the
reference at (x + u, y + v) (backward warping, bilinear, border replication).
Displacements are in luma-pixel units; chroma-resolution warping uses fields
downscaled with :func:`downscale_flow`, which also halves the values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .yuv import Frame444, to_444

FLOW_LIMIT = 16.0  # generous bound for desk-scale content; keeps codecs sane


@dataclass
class FlowField:
    """Dense displacement field at the resolution of the plane it warps."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        if self.u.shape != self.v.shape:
            raise ValueError("u and v components must share a shape")

    def to_tensor(self) -> torch.Tensor:
        return torch.from_numpy(
            np.stack([self.u, self.v]).astype(np.float32)).unsqueeze(0)

    @classmethod
    def from_tensor(cls, t: torch.Tensor) -> "FlowField":
        arr = t.detach().squeeze(0).cpu().numpy()
        return cls(arr[0].copy(), arr[1].copy())


@dataclass
class FlowPair:
    backward: FlowField  # toward the past reference (t -> t-k)
    forward: FlowField   # toward the future reference (t -> t+k)

    def __post_init__(self):
        if self.backward.u.shape != self.forward.u.shape:
            raise ValueError("flow pair resolutions differ")

    def to_tensor(self) -> torch.Tensor:
        return torch.cat([self.backward.to_tensor(), self.forward.to_tensor()], dim=1)

    @classmethod
    def from_tensor(cls, t: torch.Tensor) -> "FlowPair":
        return cls(FlowField.from_tensor(t[:, 0:2]), FlowField.from_tensor(t[:, 2:4]))


def warp(x: torch.Tensor, flow: torch.Tensor) -> torch.Tensor:
    """Backward-warp (B,C,H,W) by (B,2,H,W); differentiable in both inputs.

    Implemented with explicit gathers so that integer flows reproduce exact
    sample values (warp(x, 0) == x bitwise).
    """
    b, c, h, w = x.shape
    if flow.shape[-2:] != (h, w):
        raise ValueError(
            f"flow resolution {tuple(flow.shape[-2:])} != plane {(h, w)}")
    xs = torch.arange(w, dtype=x.dtype, device=x.device).view(1, 1, w) + flow[:, 0]
    ys = torch.arange(h, dtype=x.dtype, device=x.device).view(1, h, 1) + flow[:, 1]
    x0 = torch.floor(xs)
    y0 = torch.floor(ys)
    fx = (xs - x0).unsqueeze(1)
    fy = (ys - y0).unsqueeze(1)

    x0i = x0.long().clamp(0, w - 1)
    x1i = (x0.long() + 1).clamp(0, w - 1)
    y0i = y0.long().clamp(0, h - 1)
    y1i = (y0.long() + 1).clamp(0, h - 1)

    flat = x.reshape(b, c, h * w)

    def gather(yi, xi):
        idx = (yi * w + xi).reshape(b, 1, h * w).expand(b, c, h * w)
        return torch.gather(flat, 2, idx).reshape(b, c, h, w)

    v00 = gather(y0i, x0i)
    v01 = gather(y0i, x1i)
    v10 = gather(y1i, x0i)
    v11 = gather(y1i, x1i)
    top = v00 * (1 - fx) + v01 * fx
    bot = v10 * (1 - fx) + v11 * fx
    return top * (1 - fy) + bot * fy


def downscale_flow_tensor(flow: torch.Tensor) -> torch.Tensor:
    """2x2 average pooling with displacement values halved."""
    if flow.shape[-1] % 2 or flow.shape[-2] % 2:
        raise ValueError(f"even dimensions required, got {tuple(flow.shape[-2:])}")
    return F.avg_pool2d(flow, 2) * 0.5


def downscale_flow(flow: FlowField) -> FlowField:
    return FlowField.from_tensor(downscale_flow_tensor(flow.to_tensor()))


def frame444_tensor(frame: Frame444) -> torch.Tensor:
    return torch.from_numpy(
        np.stack([frame.y, frame.u, frame.v]).astype(np.float32)).unsqueeze(0)


def _spatial_gradients(x: torch.Tensor):
    """Centered differences with replicated edges, per channel."""
    p = F.pad(x, (1, 1, 1, 1), mode="replicate")
    gx = 0.5 * (p[..., 1:-1, 2:] - p[..., 1:-1, :-2])
    gy = 0.5 * (p[..., 2:, 1:-1] - p[..., :-2, 1:-1])
    return gx, gy


def _lk_step(cur: torch.Tensor, warped: torch.Tensor, window: int = 7,
             damp: float = 1e-4, clamp: float = 2.0) -> torch.Tensor:
    """Windowed Lucas-Kanade increment (differentiable, no parameters).

    Solves the damped 2x2 brightness-constancy normal equations per pixel,
    pooling products over a box window and over channels; the increment is
    clamped to the linearization's validity range.
    """
    diff = cur - warped
    gx, gy = _spatial_gradients(warped)

    def box(t):
        return F.avg_pool2d(t.sum(dim=1, keepdim=True), window, stride=1,
                            padding=window // 2)

    sxx = box(gx * gx) + damp
    syy = box(gy * gy) + damp
    sxy = box(gx * gy)
    sxd = box(gx * diff)
    syd = box(gy * diff)
    det = (sxx * syy - sxy * sxy).clamp_min(damp * damp)
    u = (syy * sxd - sxy * syd) / det
    v = (sxx * syd - sxy * sxd) / det
    return torch.cat([u, v], dim=1).clamp(-clamp, clamp)


class MENet(nn.Module):
    """Coarse-to-fine pyramid flow estimator operating on 4:4:4 frames.

    Each level starts from a closed-form Lucas-Kanade increment on the warped
    reference and lets a small conv net emit a learned correction, so the
    estimator is usable from initialization and improves with training.
    """

    IN_CH = 5 * 3 + 2  # cur, warped, diff, grad-x, grad-y, flow

    def __init__(self, levels: int = 3, filters: int = 32):
        super().__init__()
        self.levels = levels
        self.nets = nn.ModuleList()
        for _ in range(levels):
            net = nn.Sequential(
                nn.Conv2d(self.IN_CH, filters, 3, padding=1),
                nn.LeakyReLU(0.2, inplace=True),
                nn.Conv2d(filters, filters, 3, padding=1),
                nn.LeakyReLU(0.2, inplace=True),
                nn.Conv2d(filters, 16, 3, padding=1),
                nn.LeakyReLU(0.2, inplace=True),
                nn.Conv2d(16, 2, 3, padding=1),
            )
            nn.init.zeros_(net[-1].weight)
            nn.init.zeros_(net[-1].bias)
            self.nets.append(net)

    def forward(self, cur: torch.Tensor, ref: torch.Tensor) -> torch.Tensor:
        if cur.shape != ref.shape:
            raise ValueError(f"resolution mismatch {cur.shape} vs {ref.shape}")
        curs, refs = [cur], [ref]
        for _ in range(self.levels - 1):
            curs.append(F.avg_pool2d(curs[-1], 2))
            refs.append(F.avg_pool2d(refs[-1], 2))
        flow = None
        for lvl in range(self.levels - 1, -1, -1):
            c, r = curs[lvl], refs[lvl]
            if flow is None:
                flow = c.new_zeros((c.shape[0], 2) + c.shape[-2:])
            else:
                flow = F.interpolate(flow, scale_factor=2, mode="bilinear",
                                     align_corners=False) * 2.0
            warped = warp(r, flow)
            flow = flow + _lk_step(c, warped)
            warped = warp(r, flow)
            gx, gy = _spatial_gradients(warped)
            feats = torch.cat([c, warped, c - warped, gx, gy, flow], dim=1)
            flow = flow + self.nets[lvl](feats)
        return flow.clamp(-FLOW_LIMIT, FLOW_LIMIT)

    def estimate(self, cur: Frame444, ref: Frame444) -> FlowField:
        with torch.no_grad():
            return FlowField.from_tensor(
                self(frame444_tensor(cur), frame444_tensor(ref)))


class MPNet(nn.Module):
    """Bidirectional flow prediction from the two decoded references only.

    The reference-to-reference flow is scaled to the midpoint (+-0.5, the
    constant-velocity solution) and polished by a small refiner, so the
    prediction is causal and available to the decoder.
    """

    def __init__(self, filters: int = 32):
        super().__init__()
        self.refine = nn.Sequential(
            nn.Conv2d(10, filters, 3, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(filters, filters, 3, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(filters, 4, 3, padding=1),
        )
        nn.init.zeros_(self.refine[-1].weight)
        nn.init.zeros_(self.refine[-1].bias)

    def forward(self, menet: MENet, past: torch.Tensor, future: torch.Tensor):
        ref_flow = menet(past, future)  # at the past frame's grid, toward future
        m_bwd = -0.5 * ref_flow
        m_fwd = 0.5 * ref_flow
        delta = self.refine(torch.cat([m_bwd, m_fwd, past, future], dim=1))
        pred = torch.cat([m_bwd + delta[:, 0:2], m_fwd + delta[:, 2:4]], dim=1)
        return pred.clamp(-FLOW_LIMIT, FLOW_LIMIT)


def predict_flows(menet: MENet, mpnet: MPNet, ref_past, ref_future) -> FlowPair:
    """Spec-level wrapper over MPNet for 4:2:0 reference frames."""
    with torch.no_grad():
        pred = mpnet(menet,
                     frame444_tensor(to_444(ref_past)),
                     frame444_tensor(to_444(ref_future)))
    return FlowPair.from_tensor(pred)


class MCNet(nn.Module):
    """Motion compensation: fuse two warped references into the condition frame.

    One network instance per plane group (Y and UV use disjoint weights); the
    internal width is 48 channels.
    """

    CHANNELS = 48

    def __init__(self, plane_ch: int):
        super().__init__()
        self.plane_ch = plane_ch
        ch = self.CHANNELS
        in_ch = 4 * plane_ch + 4  # warped pair + reference pair + both flows
        self.head = nn.Sequential(
            nn.Conv2d(in_ch, ch, 3, padding=1), nn.LeakyReLU(0.2, inplace=True))
        self.down = nn.Sequential(
            nn.Conv2d(ch, ch, 3, stride=2, padding=1), nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(ch, ch, 3, padding=1), nn.LeakyReLU(0.2, inplace=True))
        self.fuse = nn.Sequential(
            nn.Conv2d(2 * ch, ch, 3, padding=1), nn.LeakyReLU(0.2, inplace=True))
        self.out = nn.Conv2d(ch, plane_ch, 3, padding=1)
        nn.init.zeros_(self.out.weight)
        nn.init.zeros_(self.out.bias)

    def forward(self, ref_past, ref_future, flow_bwd, flow_fwd):
        if ref_past.shape[-2:] != flow_bwd.shape[-2:]:
            raise ValueError(
                f"flow resolution {tuple(flow_bwd.shape[-2:])} != plane "
                f"{tuple(ref_past.shape[-2:])}")
        wp = warp(ref_past, flow_bwd)
        wf = warp(ref_future, flow_fwd)
        base = 0.5 * (wp + wf)
        feat = self.head(torch.cat(
            [wp, wf, ref_past, ref_future, flow_bwd, flow_fwd], dim=1))
        deep = F.interpolate(self.down(feat), scale_factor=2, mode="nearest")
        fused = self.fuse(torch.cat([feat, deep], dim=1))
        return (base + self.out(fused)).clamp(0.0, 1.0)
