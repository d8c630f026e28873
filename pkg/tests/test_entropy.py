import math

import numpy as np
import pytest
import torch
from scipy.stats import norm

from hbvc.entropy import (FactorizedEntropyModel, GaussianConditional,
                          LIKELIHOOD_MIN, SCALE_LEVELS, SCALE_MAX, SCALE_MIN,
                          lower_bound, quantize, rate_bits, round_away,
                          scale_table, scale_to_index)


# ---- quantizers ---------------------------------------------------------------

def test_round_ties_away_from_zero():
    x = torch.tensor([1.5, -1.5, 2.5, -2.5, 0.49, -0.49, 0.5])
    out = quantize(x, "round")
    assert out.tolist() == [2.0, -2.0, 3.0, -3.0, 0.0, 0.0, 1.0]


def test_round_integers_unchanged():
    x = torch.tensor([-3.0, 0.0, 7.0])
    assert torch.equal(quantize(x, "round"), x)


def test_round_with_mean_codes_residual():
    x = torch.tensor([1.2, 2.6])
    mean = torch.tensor([1.0, 2.0])
    out = quantize(x, "round", mean=mean)
    assert torch.allclose(out, torch.tensor([1.0, 3.0]))


def test_noise_mode_unbiased_monte_carlo():
    torch.manual_seed(0)
    x = torch.full((10 ** 5,), 0.3)
    out = quantize(x, "noise")
    resid = (out - x)
    assert resid.min() >= -0.5 and resid.max() < 0.5
    sigma = 1.0 / math.sqrt(12.0)
    bound = 3.0 * sigma / math.sqrt(10 ** 5)
    assert abs(float(resid.mean())) <= bound


def test_ste_values_and_gradient():
    x = torch.tensor([0.4, 1.7], requires_grad=True)
    out = quantize(x, "ste")
    assert out.detach().tolist() == [0.0, 2.0]
    out.sum().backward()
    assert torch.equal(x.grad, torch.ones(2))


def test_pass_mode_identity():
    x = torch.randn(5)
    assert torch.equal(quantize(x, "pass"), x)


def test_unknown_mode_rejected():
    with pytest.raises(ValueError):
        quantize(torch.zeros(1), "magic")


# ---- lower bound ----------------------------------------------------------------

def test_lower_bound_clamps_and_groks_gradients():
    x = torch.tensor([0.05, 0.5], requires_grad=True)
    y = lower_bound(x, 0.11)
    assert y.detach().tolist() == pytest.approx([0.11, 0.5])
    y.sum().backward()
    # below the bound only gradients pushing upward pass; d(sum)/dx pulls up
    assert x.grad.tolist() == [0.0, 1.0]
    x2 = torch.tensor([0.05], requires_grad=True)
    (-lower_bound(x2, 0.11).sum()).backward()
    assert x2.grad.tolist() == [-1.0]


# ---- gaussian model --------------------------------------------------------------

def test_gaussian_rate_closed_form():
    g = GaussianConditional()
    x = torch.zeros(1)
    lik = g.likelihood(x, torch.zeros(1), torch.ones(1))
    expected = -math.log2(norm.cdf(0.5) - norm.cdf(-0.5))  # = 1.3848665...
    assert math.isclose(float(rate_bits(lik)), expected, rel_tol=1e-6)
    assert math.isclose(expected, 1.3846, abs_tol=5e-4)


def test_gaussian_rate_positive_for_peaked_model():
    g = GaussianConditional()
    x = torch.zeros(1000)
    lik = g.likelihood(x, torch.zeros(1000), torch.full((1000,), SCALE_MIN))
    bits = float(rate_bits(lik))
    assert 0.0 < bits < 1.0  # near-minimal but strictly positive


def test_rate_additivity_across_blocks():
    torch.manual_seed(1)
    g = GaussianConditional()
    x = torch.round(torch.randn(20000) * 2)
    mean = torch.zeros_like(x)
    scale = torch.full_like(x, 2.0)
    full = float(rate_bits(g.likelihood(x, mean, scale)))
    half = float(rate_bits(g.likelihood(x[:10000], mean[:10000], scale[:10000])))
    assert abs(full - 2 * half) / full < 0.01


def test_gaussian_scale_floor_applied():
    g = GaussianConditional(scale_floor=0.11)
    lik_tiny = g.likelihood(torch.zeros(1), torch.zeros(1), torch.tensor([1e-6]))
    lik_floor = g.likelihood(torch.zeros(1), torch.zeros(1), torch.tensor([0.11]))
    assert torch.allclose(lik_tiny, lik_floor)


def test_est_bits_matches_pmf_summation_oracle():
    torch.manual_seed(2)
    g = GaussianConditional()
    mean = torch.randn(500)
    scale = torch.rand(500) * 3 + 0.2
    sym = torch.round(torch.randn(500) * 2)
    x_hat = sym + mean
    est = g.est_bits(x_hat, mean, scale)
    m = mean.double().numpy()
    s = np.maximum(scale.double().numpy(), 0.11)
    v = sym.double().numpy()
    p = norm.cdf((v + 0.5) / s) - norm.cdf((v - 0.5) / s)
    oracle = float(-np.log2(np.maximum(p, LIKELIHOOD_MIN)).sum())
    assert abs(est - oracle) / oracle <= 1e-6


# ---- factorized model --------------------------------------------------------------

def test_factorized_likelihood_positive_and_shaped():
    torch.manual_seed(3)
    m = FactorizedEntropyModel(4)
    x = torch.randn(2, 4, 6, 6)
    x_hat, lik = m(x, "round")
    assert lik.shape == x.shape
    assert (lik > 0).all()
    assert torch.equal(x_hat, round_away(x))


def test_factorized_integer_pmf_sums_to_one():
    torch.manual_seed(4)
    m = FactorizedEntropyModel(3)
    pmf = m.integer_pmf(-12, 12)
    assert pmf.shape == (3, 25)
    assert np.allclose(pmf.sum(axis=1), 1.0, atol=1e-9)
    assert (pmf >= 0).all()


def test_factorized_est_bits_matches_likelihood_sum():
    torch.manual_seed(5)
    m = FactorizedEntropyModel(2)
    x = torch.round(torch.randn(1, 2, 8, 8) * 3)
    est = m.est_bits(x)
    oracle = float(rate_bits(m.likelihood(x)))
    assert math.isclose(est, oracle, rel_tol=1e-6)


# ---- scale table ---------------------------------------------------------------------

def test_scale_table_spans_bounds():
    t = scale_table()
    assert len(t) == SCALE_LEVELS
    assert math.isclose(t[0], SCALE_MIN, rel_tol=1e-12)
    assert math.isclose(t[-1], SCALE_MAX, rel_tol=1e-12)
    assert (np.diff(t) > 0).all()


def test_scale_to_index_roundtrip_on_table():
    t = scale_table()
    idx = scale_to_index(torch.tensor(t, dtype=torch.float64))
    assert idx.tolist() == list(range(SCALE_LEVELS))
    assert int(scale_to_index(torch.tensor([1e-9]))) == 0
    assert int(scale_to_index(torch.tensor([1e9]))) == SCALE_LEVELS - 1
