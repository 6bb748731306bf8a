import numpy as np
import pytest
import scipy.optimize

from hypersharp.linalg import (CsWeights, centered_moments, cross_covariance,
                               estimate_weights_lsq, nnls)


def test_exact_band_recovery(rng):
    x = rng.random((20, 20, 4))
    w = estimate_weights_lsq(x, x[:, :, 0])
    assert np.allclose(w.w, [1, 0, 0, 0], atol=1e-8)
    assert abs(w.bias) < 1e-8


def test_constructed_regression(rng):
    x = rng.random((20, 20, 3))
    t = 2 * x[:, :, 0] + 3 * x[:, :, 1] + 1
    w = estimate_weights_lsq(x, t)
    assert np.allclose(w.w, [2, 3, 0], atol=1e-8)
    assert w.bias == pytest.approx(1.0, abs=1e-8)


@pytest.mark.filterwarnings("ignore:ill-conditioned")
def test_duplicated_bands_stay_finite(rng):
    base = rng.random((30, 30, 3))
    dup = np.concatenate([base, base[:, :, :1]], axis=2)
    t = base @ np.array([0.5, -1.0, 2.0]) + 0.3 * rng.random((30, 30))
    ref = estimate_weights_lsq(base, t)
    w = estimate_weights_lsq(dup, t)
    assert np.all(np.isfinite(w.w))
    r_ref = t - ref.combine(base)
    r_dup = t - w.combine(dup)
    assert np.sqrt(np.mean((r_ref - r_dup) ** 2)) < 1e-6


def test_weights_validation():
    with pytest.raises(ValueError):
        CsWeights(np.array([1.0, np.nan]))
    with pytest.raises(ValueError):
        CsWeights(np.ones(2), bias=np.inf)


def test_flat_bands_give_zero_weights_and_mean_bias(rng):
    x = np.ones((5, 5, 3))
    t = rng.random((5, 5))
    w = estimate_weights_lsq(x, t)
    assert not np.any(w.w)
    assert w.bias == pytest.approx(t.mean())


def test_centered_moments_match_numpy(rng):
    x = rng.random((1000, 3))
    t = rng.random(1000)
    mx, cxx, mt, cxt = centered_moments(x, t)
    assert np.allclose(mx, x.mean(0))
    assert np.allclose(cxx, np.cov(x.T, bias=True))
    assert mt == pytest.approx(t.mean())
    assert np.allclose(cxt, cross_covariance(x, t))
    assert np.allclose(cxt, [np.mean((x[:, k] - x[:, k].mean()) * (t - t.mean()))
                             for k in range(3)])


@pytest.mark.parametrize("shape", [(10, 3), (30, 8), (6, 6), (40, 17)])
def test_nnls_against_scipy(rng, shape):
    for _ in range(5):
        a = rng.standard_normal(shape)
        b = rng.standard_normal(shape[0])
        x, rnorm = nnls(a, b)
        xs, rs = scipy.optimize.nnls(a, b)
        assert np.all(x >= 0)
        assert rnorm == pytest.approx(rs, rel=1e-9, abs=1e-12)
        assert np.allclose(x, xs, atol=1e-8)


def test_nnls_inactive_constraints_equal_lstsq(rng):
    a = rng.standard_normal((40, 5))
    x_true = rng.random(5) + 0.5
    b = a @ x_true + 0.01 * rng.standard_normal(40)
    x, _ = nnls(a, b)
    ls = np.linalg.lstsq(a, b, rcond=None)[0]
    assert np.all(ls > 0)
    assert np.allclose(x, ls, atol=1e-8)
