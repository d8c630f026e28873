import pytest
import torch
from torch import nn

from hbvc.afmod import (AFModule, ContextBox, DoubleAttachError, LAMBDA_TABLE,
                        ModulatedConv, RateContext, attach_af, count_convs)


def ctx(idx=0, c=0, lam=None):
    return RateContext(idx, c, lam)


# ---- RateContext -----------------------------------------------------------------

def test_rate_context_validation():
    with pytest.raises(ValueError):
        RateContext(lambda_index=9)
    with pytest.raises(ValueError):
        RateContext(0, c=2)
    with pytest.raises(ValueError):
        RateContext(0, 0, lambda_value=-1.0)
    r = RateContext(1, 1, 300.0)
    assert r.lambda_inter == LAMBDA_TABLE[1]
    assert r.lambda_intra == 300.0
    assert RateContext(3).lambda_intra == LAMBDA_TABLE[3]


# ---- AF module --------------------------------------------------------------------

def test_identity_at_initialization_exact():
    torch.manual_seed(0)
    af = AFModule(8)
    x = torch.randn(2, 8, 5, 5)
    assert torch.equal(af(x, ctx()), x)


def test_identity_holds_for_every_context():
    torch.manual_seed(1)
    af = AFModule(4)
    x = torch.randn(1, 4, 3, 3)
    for idx in range(5):
        for c in (0, 1):
            assert torch.equal(af(x, ctx(idx, c)), x)


def test_shape_preserved_after_training_drift():
    torch.manual_seed(2)
    af = AFModule(6)
    nn.init.normal_(af.fc2.weight, std=0.1)
    x = torch.randn(3, 6, 7, 9)
    out = af(x, ctx(2, 1))
    assert out.shape == x.shape
    assert not torch.equal(out, x)


def test_same_pooled_stats_same_affine_params():
    torch.manual_seed(3)
    af = AFModule(4)
    nn.init.normal_(af.fc2.weight, std=0.1)
    x1 = torch.randn(1, 4, 4, 4)
    # shuffle pixels per channel: identical GAP statistics, different content
    perm = torch.randperm(16)
    x2 = x1.view(1, 4, 16)[:, :, perm].view(1, 4, 4, 4)
    g1, b1 = af.affine_params(x1, ctx(1, 0))
    g2, b2 = af.affine_params(x2, ctx(1, 0))
    assert torch.allclose(g1, g2, atol=1e-6) and torch.allclose(b1, b2, atol=1e-6)


def test_params_differ_across_coding_level():
    torch.manual_seed(4)
    af = AFModule(4)
    nn.init.normal_(af.fc2.weight, std=0.3)
    x = torch.randn(1, 4, 4, 4)
    g0, b0 = af.affine_params(x, ctx(1, 0))
    g1, b1 = af.affine_params(x, ctx(1, 1))
    assert not (torch.allclose(g0, g1) and torch.allclose(b0, b1))


def test_channel_mismatch_rejected():
    af = AFModule(4)
    with pytest.raises(ValueError):
        af(torch.randn(1, 5, 2, 2), ctx())


def test_ablation_flags_shrink_condition_structurally():
    full = AFModule(8)
    no_content = AFModule(8, content_adaptive=False)
    no_level = AFModule(8, coding_level=False)
    neither = AFModule(8, content_adaptive=False, coding_level=False)
    assert full.in_dim == 8 + 1 + 4 + 2
    assert no_content.in_dim == 1 + 4 + 2
    assert no_level.in_dim == 8 + 1 + 4
    # both branches off: plain rate-conditional modulation
    assert neither.in_dim == 1 + 4
    assert neither.embed is not None


def test_continuous_mode_has_no_level_or_index_embedding():
    af = AFModule(8, continuous=True)
    assert af.embed is None
    assert not af.coding_level
    assert af.in_dim == 8 + 1
    x = torch.randn(1, 8, 4, 4)
    assert torch.equal(af(x, ctx(0, 0, 777.0)), x)


def test_continuous_mode_tracks_lambda_value():
    torch.manual_seed(5)
    af = AFModule(4, continuous=True)
    nn.init.normal_(af.fc2.weight, std=0.3)
    x = torch.randn(1, 4, 4, 4)
    o1 = af(x, ctx(0, 0, 64.0))
    o2 = af(x, ctx(0, 0, 32768.0))
    assert not torch.allclose(o1, o2)


# ---- attachment -------------------------------------------------------------------

class SmallGraph(nn.Module):
    def __init__(self):
        super().__init__()
        self.stem = nn.Conv2d(1, 4, 3, padding=1)
        self.block = nn.Sequential(
            nn.Conv2d(4, 4, 3, padding=1), nn.ReLU(),
            nn.ConvTranspose2d(4, 2, 4, stride=2, padding=1))

    def forward(self, x):
        return self.block(self.stem(x))


def test_attach_wraps_every_convolution():
    g = SmallGraph()
    box = ContextBox()
    n = attach_af(g, box)
    assert n == 3 == count_convs(g)
    assert isinstance(g.stem, ModulatedConv)
    box.ctx = ctx(0, 0)
    out = g(torch.randn(1, 1, 8, 8))
    assert out.shape == (1, 2, 16, 16)


def test_double_attach_raises():
    g = SmallGraph()
    box = ContextBox()
    attach_af(g, box)
    with pytest.raises(DoubleAttachError):
        attach_af(g, box)


def test_missing_context_raises():
    g = SmallGraph()
    box = ContextBox()
    attach_af(g, box)
    with pytest.raises(RuntimeError, match="RateContext"):
        g(torch.randn(1, 1, 8, 8))


def test_modulation_identity_preserved_through_attachment():
    torch.manual_seed(6)
    g1 = SmallGraph()
    g2 = SmallGraph()
    g2.load_state_dict(g1.state_dict())
    box = ContextBox()
    attach_af(g2, box)
    box.ctx = ctx(3, 1)
    x = torch.randn(1, 1, 8, 8)
    assert torch.equal(g1(x), g2(x))
