import inspect

import numpy as np
import pytest
import torch

from hbvc.motion import (FlowField, FlowPair, MCNet, MENet, MPNet,
                         downscale_flow, downscale_flow_tensor, warp)
from hbvc.dataset import _smooth_texture


def psnr(a, b):
    mse = float(((a - b) ** 2).mean())
    return 99.0 if mse == 0 else -10.0 * np.log10(mse)


def shifted_pair(rng, size, dx, dy, ch=3):
    """cur plus a reference whose content moved by (dx, dy) pixels."""
    canvas = _smooth_texture(rng, size + 32, size + 32)[..., :ch]
    base = 16
    cur = canvas[base:base + size, base:base + size]
    ref = canvas[base - dy:base - dy + size, base - dx:base - dx + size]
    to_t = lambda a: torch.from_numpy(
        np.moveaxis(a, -1, 0).astype(np.float32)).unsqueeze(0)
    return to_t(cur), to_t(ref)


# ---- warp ------------------------------------------------------------------------

def test_warp_zero_flow_is_exact_identity():
    torch.manual_seed(0)
    x = torch.rand(2, 3, 9, 13)
    out = warp(x, torch.zeros(2, 2, 9, 13))
    assert torch.equal(out, x)


def test_warp_integer_shift_matches_index_oracle():
    x = torch.arange(36, dtype=torch.float32).reshape(1, 1, 6, 6)
    flow = torch.zeros(1, 2, 6, 6)
    flow[:, 0] = 1.0  # sample one column to the right
    out = warp(x, flow)
    # index-shift oracle with border replication
    oracle = torch.empty_like(x)
    for c in range(6):
        oracle[0, 0, :, c] = x[0, 0, :, min(c + 1, 5)]
    assert torch.equal(out, oracle)


def test_warp_vertical_and_negative_shift():
    x = torch.rand(1, 1, 5, 4)
    flow = torch.zeros(1, 2, 5, 4)
    flow[:, 1] = -2.0
    out = warp(x, flow)
    oracle = torch.empty_like(x)
    for r in range(5):
        oracle[0, 0, r] = x[0, 0, max(r - 2, 0)]
    assert torch.equal(out, oracle)


def test_warp_resolution_mismatch():
    with pytest.raises(ValueError, match="resolution"):
        warp(torch.zeros(1, 1, 4, 4), torch.zeros(1, 2, 8, 8))


def test_warp_gradients_match_finite_differences():
    torch.manual_seed(1)
    x = torch.rand(1, 1, 6, 6, dtype=torch.float64, requires_grad=True)
    # keep flows away from integers where bilinear weights are non-smooth
    flow = (torch.rand(1, 2, 6, 6, dtype=torch.float64) * 1.2 + 0.15
            ).requires_grad_(True)
    assert torch.autograd.gradcheck(warp, (x, flow), eps=1e-6, atol=1e-3)


# ---- flow resampling ----------------------------------------------------------------

def test_downscale_flow_halves_constant():
    f = FlowField(np.full((4, 4), 2.0), np.zeros((4, 4)))
    d = downscale_flow(f)
    assert d.u.shape == (2, 2)
    assert np.allclose(d.u, 1.0) and np.allclose(d.v, 0.0)


def test_downscale_flow_zero_stays_zero():
    d = downscale_flow(FlowField(np.zeros((8, 6)), np.zeros((8, 6))))
    assert not d.u.any() and not d.v.any()


def test_downscale_flow_matches_nested_loop_oracle():
    rng = np.random.default_rng(2)
    for _ in range(5):
        u = rng.normal(size=(8, 10))
        v = rng.normal(size=(8, 10))
        d = downscale_flow(FlowField(u, v))
        for comp, src in ((d.u, u), (d.v, v)):
            for r in range(4):
                for c in range(5):
                    block = src[2 * r:2 * r + 2, 2 * c:2 * c + 2]
                    assert abs(comp[r, c] - 0.5 * block.mean()) < 1e-6


def test_downscale_flow_rejects_odd():
    with pytest.raises(ValueError):
        downscale_flow_tensor(torch.zeros(1, 2, 5, 4))


def test_flow_pair_shape_validation():
    with pytest.raises(ValueError):
        FlowField(np.zeros((4, 4)), np.zeros((2, 2)))
    with pytest.raises(ValueError):
        FlowPair(FlowField(np.zeros((4, 4)), np.zeros((4, 4))),
                 FlowField(np.zeros((2, 2)), np.zeros((2, 2))))


def test_flow_pair_tensor_roundtrip():
    rng = np.random.default_rng(3)
    pair = FlowPair(FlowField(rng.normal(size=(4, 4)), rng.normal(size=(4, 4))),
                    FlowField(rng.normal(size=(4, 4)), rng.normal(size=(4, 4))))
    t = pair.to_tensor()
    assert t.shape == (1, 4, 4, 4)
    back = FlowPair.from_tensor(t)
    assert np.allclose(back.forward.v, pair.forward.v, atol=1e-6)


# ---- trained flow estimation --------------------------------------------------------

@pytest.fixture(scope="module")
def trained_menet():
    torch.manual_seed(0)
    rng = np.random.default_rng(0)
    net = MENet(levels=3, filters=12)
    opt = torch.optim.Adam(net.parameters(), lr=2e-3)
    for step in range(300):
        dx, dy = rng.uniform(-3, 3), rng.uniform(-3, 3)
        cur, _ = shifted_pair(rng, 48, 0, 0)
        gt = torch.zeros(1, 2, 48, 48)
        gt[:, 0] = dx
        gt[:, 1] = dy
        ref = warp(cur, -gt).detach()
        flow = net(cur, ref)
        b = 6
        loss = ((flow - gt)[..., b:-b, b:-b] ** 2).mean()
        opt.zero_grad()
        loss.backward()
        opt.step()
    net.eval()
    return net


def test_menet_output_resolution_matches_luma(trained_menet):
    cur = torch.rand(1, 3, 32, 48)
    flow = trained_menet(cur, torch.rand(1, 3, 32, 48))
    assert flow.shape == (1, 2, 32, 48)
    with pytest.raises(ValueError):
        trained_menet(cur, torch.rand(1, 3, 16, 16))


def test_menet_self_flow_near_zero(trained_menet):
    rng = np.random.default_rng(5)
    cur, _ = shifted_pair(rng, 48, 0, 0)
    flow = trained_menet(cur, cur)
    assert float(flow.abs().mean()) <= 0.1


def test_menet_recovers_translation(trained_menet):
    rng = np.random.default_rng(6)
    errs = []
    for seed in range(4):
        cur, ref = shifted_pair(np.random.default_rng(100 + seed), 48, 2, 0)
        flow = trained_menet(cur, ref)
        inner = flow[:, 0, 8:-8, 8:-8]  # borders have no correspondence
        errs.append(float(inner.mean()))
    assert abs(np.mean(errs) - 2.0) <= 0.5


def test_mpnet_identical_references_near_zero(trained_menet):
    mp = MPNet(filters=8)
    rng = np.random.default_rng(7)
    cur, _ = shifted_pair(rng, 48, 0, 0)
    pred = mp(trained_menet, cur, cur)
    assert float(pred.abs().mean()) <= 0.1


def test_mpnet_constant_velocity_midpoint(trained_menet):
    mp = MPNet(filters=8)  # zero-initialized refiner: pure midpoint scaling
    vals_b, vals_f = [], []
    for seed in range(4):
        rng = np.random.default_rng(200 + seed)
        past, fut = shifted_pair(rng, 48, 4, 0)  # future moved +4 px vs past
        pred = mp(trained_menet, past, fut)
        vals_b.append(float(pred[:, 0, 8:-8, 8:-8].mean()))
        vals_f.append(float(pred[:, 2, 8:-8, 8:-8].mean()))
    assert abs(np.mean(vals_b) + 2.0) <= 0.5
    assert abs(np.mean(vals_f) - 2.0) <= 0.5


def test_mpnet_output_matches_motion_codec_input_shape(trained_menet):
    mp = MPNet(filters=8)
    pred = mp(trained_menet, torch.rand(1, 3, 32, 32), torch.rand(1, 3, 32, 32))
    assert pred.shape == (1, 4, 32, 32)  # 4-channel condition


def test_mpnet_reads_only_references():
    # causality is enforced by the signature: no current-frame argument exists
    params = list(inspect.signature(MPNet.forward).parameters)
    assert params == ["self", "menet", "past", "future"]


# ---- motion compensation ---------------------------------------------------------------

def test_mcnet_identity_init_fuses_references():
    torch.manual_seed(2)
    net = MCNet(1)
    a = torch.rand(1, 1, 16, 16)
    b = torch.rand(1, 1, 16, 16)
    zero = torch.zeros(1, 2, 16, 16)
    out = net(a, b, zero, zero)
    assert torch.allclose(out, ((a + b) / 2).clamp(0, 1), atol=1e-7)


def test_mcnet_zero_flow_identical_refs_pass_through():
    torch.manual_seed(3)
    net = MCNet(2)
    ref = torch.rand(1, 2, 8, 8)
    zero = torch.zeros(1, 2, 8, 8)
    assert torch.allclose(net(ref, ref, zero, zero), ref, atol=1e-7)


def test_mcnet_internal_width_is_48():
    net = MCNet(1)
    assert net.CHANNELS == 48
    convs = [m for m in net.modules() if isinstance(m, torch.nn.Conv2d)]
    inner = [c for c in convs if c.out_channels != net.plane_ch]
    assert inner and all(c.out_channels == 48 for c in inner)


def test_mcnet_y_and_uv_weights_disjoint():
    y, uv = MCNet(1), MCNet(2)
    ids_y = {id(p) for p in y.parameters()}
    ids_uv = {id(p) for p in uv.parameters()}
    assert not ids_y & ids_uv


def test_mcnet_resolution_mismatch():
    net = MCNet(1)
    with pytest.raises(ValueError, match="flow"):
        net(torch.zeros(1, 1, 8, 8), torch.zeros(1, 1, 8, 8),
            torch.zeros(1, 2, 4, 4), torch.zeros(1, 2, 4, 4))


def test_mcnet_compensation_beats_raw_references():
    torch.manual_seed(4)
    net = MCNet(1)
    opt = torch.optim.Adam(net.parameters(), lr=1e-3)
    rng = np.random.default_rng(8)

    def triple(seed):
        # same seed -> same canvas, so past/fut bracket the same current frame
        cur, past = shifted_pair(np.random.default_rng(seed), 32, 2, 0, ch=1)
        _, fut = shifted_pair(np.random.default_rng(seed), 32, -2, 0, ch=1)
        fb = torch.zeros(1, 2, 32, 32)
        fb[:, 0] = 2.0
        ff = torch.zeros(1, 2, 32, 32)
        ff[:, 0] = -2.0
        return cur, past, fut, fb, ff

    for step in range(120):
        cur, past, fut, fb, ff = triple(int(rng.integers(0, 10000)))
        out = net(past, fut, fb, ff)
        loss = ((out - cur) ** 2).mean()
        opt.zero_grad()
        loss.backward()
        opt.step()

    gains = 0
    for seed in (1, 2, 3, 4, 5):
        cur, past, fut, fb, ff = triple(30000 + seed)
        out = net(past, fut, fb, ff)
        if (psnr(out, cur) > psnr(past, cur)
                and psnr(out, cur) > psnr(fut, cur)):
            gains += 1
    assert gains >= 4


def test_mcnet_uv_output_resolution():
    net = MCNet(2)
    out = net(torch.rand(1, 2, 8, 12), torch.rand(1, 2, 8, 12),
              torch.zeros(1, 2, 8, 12), torch.zeros(1, 2, 8, 12))
    assert out.shape == (1, 2, 8, 12)
    assert float(out.min()) >= 0.0 and float(out.max()) <= 1.0
