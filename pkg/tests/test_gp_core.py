import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gpalign import gp_core, kernels
from gpalign.errors import InvalidArgumentError, NumericalFailure
from gpalign.kernels import KernelSpec

from _helpers import mvn_logpdf

SE1 = KernelSpec(kernels.SE, 1.0, 1.0, jitter=0.0)


def test_log_marginal_univariate():
    assert gp_core.log_marginal(SE1, 1.0, [0.0], [0.0]) == pytest.approx(-0.5 * np.log(4 * np.pi))
    assert gp_core.log_marginal(SE1, 1.0, [0.0], [2.0]) == pytest.approx(-0.5 * np.log(4 * np.pi) - 1.0)


def test_log_marginal_diagonal_factorizes():
    # Inputs far apart relative to the lengthscale give a diagonal Gram.
    k = KernelSpec(kernels.SE, 1.5, 1e-3, jitter=0.0)
    y = np.array([0.3, -1.0, 2.0])
    expected = sum(mvn_logpdf([v], [[1.5 + 0.5]]) for v in y)
    assert gp_core.log_marginal(k, 2.0, [0.0, 1.0, 2.0], y) == pytest.approx(expected, abs=1e-12)


def test_log_marginal_dense_oracle():
    rng = np.random.default_rng(0)
    k = KernelSpec(kernels.MATERN32, 1.4, 0.5)
    x, y = rng.uniform(-1, 1, 9), rng.normal(size=9)
    C = kernels.gram(k, x, add_jitter=True) + np.eye(9) / 3.0
    assert gp_core.log_marginal(k, 3.0, x, y) == pytest.approx(mvn_logpdf(y, C), abs=1e-10)


def test_log_marginal_gradients():
    rng = np.random.default_rng(1)
    for k in (KernelSpec(kernels.SE, 1.2, 0.5), KernelSpec(kernels.PERIODIC, 0.8, 1.1, period=0.7),
              KernelSpec(kernels.MATERN12, 1.0, 0.4)):
        n = int(rng.integers(2, 13))
        x, y = rng.uniform(-1, 1, n), rng.normal(size=(n, 2))
        beta = 2.5
        _, g = gp_core.log_marginal(k, beta, x, y, return_grad=True)
        lp, h = k.log_params(), 1e-5
        for i in range(len(lp)):
            e = np.zeros_like(lp)
            e[i] = h
            fd = (gp_core.log_marginal(k.with_log_params(lp + e), beta, x, y)
                  - gp_core.log_marginal(k.with_log_params(lp - e), beta, x, y)) / (2 * h)
            assert g["log_params"][i] == pytest.approx(fd, rel=1e-4, abs=1e-6)
        fd = (gp_core.log_marginal(k, beta * np.exp(h), x, y)
              - gp_core.log_marginal(k, beta * np.exp(-h), x, y)) / (2 * h)
        assert g["log_noise"] == pytest.approx(fd, rel=1e-4)
        for i in range(n):
            e = np.zeros_like(y)
            e[i, 1] = h
            fd = (gp_core.log_marginal(k, beta, x, y + e) - gp_core.log_marginal(k, beta, x, y - e)) / (2 * h)
            assert g["targets"][i, 1] == pytest.approx(fd, rel=1e-4, abs=1e-6)
            e = np.zeros(n)
            e[i] = h
            fd = (gp_core.log_marginal(k, beta, x + e, y) - gp_core.log_marginal(k, beta, x - e, y)) / (2 * h)
            assert g["inputs"][i] == pytest.approx(fd, rel=1e-4, abs=1e-6)


def test_bad_noise_and_lengths():
    with pytest.raises(InvalidArgumentError):
        gp_core.log_marginal(SE1, 0.0, [0.0], [1.0])
    with pytest.raises(InvalidArgumentError):
        gp_core.log_marginal(SE1, 1.0, [0.0, 1.0], [1.0])


def test_jitter_escalation_then_failure():
    # Duplicated inputs without noise: needs jitter; with zero jitter it must fail.
    x = np.zeros(3)
    L, _ = gp_core.factor_gram(KernelSpec(kernels.SE, 1.0, 1.0), x, None)
    assert np.all(np.isfinite(L))
    with pytest.raises(NumericalFailure):
        gp_core.factor_gram(KernelSpec(kernels.SE, 1.0, 1.0, jitter=0.0), x, None, index=4)


def test_gpfit_factor_reproduces_covariance():
    rng = np.random.default_rng(2)
    k = KernelSpec(kernels.SE, 1.3, 0.3)
    x = rng.uniform(-1, 1, 12)
    fit = gp_core.GPFit.build(k, 4.0, x, rng.normal(size=12))
    C = kernels.gram(k, x, add_jitter=True) + np.eye(12) / 4.0
    assert np.linalg.norm(fit.covariance() - C) / np.linalg.norm(C) < 1e-10


def test_posterior_examples():
    fit = gp_core.GPFit.build(SE1, 1.0, [0.0], [1.0])
    mean, var = gp_core.posterior_predict(fit, [0.0])
    assert mean[0] == pytest.approx(0.5) and var[0] == pytest.approx(0.5)
    k = KernelSpec(kernels.SE, 1.0, 0.3)
    x = np.linspace(-1, 1, 5)
    y = np.sin(3 * x)
    fit = gp_core.GPFit.build(k, 1e10, x, y)
    mean, _ = fit.predict(x[2:3])
    assert mean[0] == pytest.approx(y[2], abs=1e-4)
    mean, var = fit.predict([50.0])
    assert abs(mean[0]) < 1e-3 and var[0] == pytest.approx(1.0, abs=1e-3)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_posterior_variance_bounds(seed):
    rng = np.random.default_rng(seed)
    k = KernelSpec(kernels.MATERN32, float(rng.uniform(0.5, 2)), float(rng.uniform(0.1, 1)))
    beta = float(rng.uniform(0.5, 100))
    fit = gp_core.GPFit.build(k, beta, rng.uniform(-1, 1, 6), rng.normal(size=6))
    _, var = fit.predict(rng.uniform(-2, 2, 20))
    assert np.all(var >= 0) and np.all(var <= k.variance + 1 / beta + 1e-8)


def _dense_bound(k, beta, z, x, y):
    Kmm = kernels.gram(k, z, add_jitter=True)
    Knm = kernels.gram(k, x, z)
    Q = Knm @ np.linalg.solve(Kmm, Knm.T)
    Knn = kernels.gram(k, x, add_jitter=True)
    return mvn_logpdf(y, Q + np.eye(len(x)) / beta) - 0.5 * beta * np.trace(Knn - Q)


def test_sparse_small_dense_oracle():
    k = KernelSpec(kernels.SE, 1.0, 0.7)
    x, y, z = np.array([-0.3, 0.4]), np.array([0.5, -1.2]), np.array([0.1])
    assert gp_core.sparse_lower_bound(k, 2.0, z, x, y) == pytest.approx(_dense_bound(k, 2.0, z, x, y), abs=1e-10)


def test_sparse_bound_is_tight_and_nested():
    rng = np.random.default_rng(3)
    k = KernelSpec(kernels.SE, 1.1, 0.4)
    x, y = rng.uniform(-1, 1, 10), rng.normal(size=10)
    exact = gp_core.log_marginal(k, 5.0, x, y)
    assert gp_core.sparse_lower_bound(k, 5.0, x, x, y) == pytest.approx(exact, abs=1e-6)
    order = rng.permutation(10)
    values = [gp_core.sparse_lower_bound(k, 5.0, x[order[:m]], x, y) for m in range(1, 11)]
    assert np.all(np.diff(values) >= -1e-8)
    assert max(values) <= exact + 1e-8


def test_sparse_gradients():
    rng = np.random.default_rng(4)
    k = KernelSpec(kernels.MATERN32, 1.3, 0.5)
    x, y, z = rng.uniform(-1, 1, 9), rng.normal(size=(9, 2)), np.linspace(-0.9, 0.9, 4)
    beta, h = 3.0, 1e-5
    _, g = gp_core.sparse_lower_bound(k, beta, z, x, y, return_grad=True)
    lp = k.log_params()
    for i in range(len(lp)):
        e = np.zeros_like(lp)
        e[i] = h
        fd = (gp_core.sparse_lower_bound(k.with_log_params(lp + e), beta, z, x, y)
              - gp_core.sparse_lower_bound(k.with_log_params(lp - e), beta, z, x, y)) / (2 * h)
        assert g["log_params"][i] == pytest.approx(fd, rel=1e-4, abs=1e-6)
    for i in range(9):
        e = np.zeros(9)
        e[i] = h
        fd = (gp_core.sparse_lower_bound(k, beta, z, x + e, y)
              - gp_core.sparse_lower_bound(k, beta, z, x - e, y)) / (2 * h)
        assert g["inputs"][i] == pytest.approx(fd, rel=1e-4, abs=1e-6)
