import numpy as np
import pytest

from gpalign import kernels, model, optimizer, warps
from gpalign.errors import InvalidArgumentError

from _helpers import fd_gradient_error, mvn_logpdf, random_state

LOG2PI = np.log(2 * np.pi)


def test_dataset_validation():
    with pytest.raises(InvalidArgumentError):
        model.Dataset(np.linspace(-1, 1, 4), np.full((2, 4, 1), np.nan))
    with pytest.raises(InvalidArgumentError):
        model.Dataset(np.array([0.0, 0.0, 1.0]), np.zeros((2, 3, 1)))
    d = model.Dataset(np.linspace(-1, 1, 4), np.zeros((2, 4)))
    assert (d.J, d.N, d.D) == (2, 4, 1)


def test_seq_term_two_point_oracle():
    v, beta, s, y = 1.3, 2.0, 0.4, -0.7
    k = kernels.KernelSpec(kernels.SE, v, 0.5, jitter=0.0)
    C = np.array([[v + 1 / beta, v], [v, v + 1 / beta]])
    got = model.seq_term([[y]], [[s]], [0.0], [0.0], k, beta)
    assert got == pytest.approx(mvn_logpdf([s, y], C), abs=1e-12)


def test_seq_term_swap_and_duplicate_columns():
    rng = np.random.default_rng(0)
    X = np.linspace(-1, 1, 6)
    k = kernels.KernelSpec(kernels.MATERN32, 1.2, 0.4)
    S, Y = rng.normal(size=(6, 1)), rng.normal(size=(6, 1))
    a = model.seq_term(Y, S, X, X, k, 3.0)
    assert model.seq_term(S, Y, X, X, k, 3.0) == pytest.approx(a, abs=1e-10)
    G = warps.warp_from_aux(rng.normal(size=6))
    one = model.seq_term(Y, S, G, X, k, 3.0)
    two = model.seq_term(np.hstack([Y, Y]), np.hstack([S, S]), G, X, k, 3.0)
    assert two == pytest.approx(2 * one, abs=1e-10)


def test_lvm_term_examples():
    rng = np.random.default_rng(1)
    psi = kernels.KernelSpec(kernels.SE, 1.5, 1.0)
    S = rng.normal(size=(1, 4, 2))
    var = 1.5 * (1 + 1e-6) + 1 / 2.0
    expected = sum(mvn_logpdf([s], [[var]]) for s in S.ravel())
    assert model.lvm_term(S, np.zeros((1, 2)), psi, 2.0) == pytest.approx(expected, abs=1e-10)

    Z = rng.normal(size=(3, 2))
    C = kernels.gram(psi, Z, add_jitter=True) + np.eye(3) / 2.0
    _, logdet = np.linalg.slogdet(C)
    zero = model.lvm_term(np.zeros((3, 4, 2)), Z, psi, 2.0)
    assert zero == pytest.approx(-0.5 * 8 * (3 * LOG2PI + logdet))

    S = rng.normal(size=(3, 4, 1))
    expected = sum(mvn_logpdf(S[:, n, 0], C) for n in range(4))
    assert model.lvm_term(S, Z, psi, 2.0) == pytest.approx(expected, abs=1e-10)


def test_objective_decomposition():
    rng = np.random.default_rng(2)
    state, data = random_state(rng, 3, 6, 2)
    terms = model.log_posterior_terms(state, data)
    G = state.warps(data.X)
    for j in range(3):
        assert terms["seq"][j] == pytest.approx(model.seq_term(
            data.Y[j], state.S[j], G[j], data.X, state.theta(j), np.exp(state.log_beta[j])))
        assert terms["warp_prior"][j] == pytest.approx(warps.warp_log_prior(
            G[j], data.X, state.warp.omega_j(j), state.warp.U[j]))
    assert terms["alignment"] == pytest.approx(
        model.lvm_term(state.S, state.Z, state.psi(), np.exp(state.log_gamma)))
    total = sum(terms["seq"]) + terms["alignment"] + terms["latent"] + sum(terms["warp_prior"]) + terms["hyper"]
    assert model.objective(state, data) == pytest.approx(-total)


def test_latent_and_hyper_priors_at_origin():
    rng = np.random.default_rng(3)
    state, data = random_state(rng, 2, 5, 1, scale=0.0)
    state.Z[:] = 0.0
    terms = model.log_posterior_terms(state, data)
    assert terms["latent"] == pytest.approx(-0.5 * 2 * 2 * LOG2PI)
    # theta (2 x 2), beta (2), psi (2), gamma (1): 9 log-values, all zero.
    assert terms["hyper"] == pytest.approx(-0.5 * 9 * LOG2PI)


def test_gradient_finite_differences():
    rng = np.random.default_rng(4)
    state, data = random_state(rng, 3, 8, 1)
    assert fd_gradient_error(state, data) < 1e-4


@pytest.mark.parametrize("cfg", [
    dict(warp_family=warps.BASIS),
    dict(warp_family=warps.SHIFT, alignment=model.ENERGY),
    dict(optimize_omega=True),
    dict(inducing_count=4, alignment=model.ENERGY),
    dict(data_kernel=kernels.KernelSpec(kernels.SUM, parts=(
        kernels.KernelSpec(kernels.MATERN12), kernels.KernelSpec(kernels.PERIODIC)))),
], ids=["basis", "shift-energy", "omega", "sparse", "sum-kernel"])
def test_gradient_variants(cfg):
    rng = np.random.default_rng(5)
    state, data = random_state(rng, 2, 6, 2, **cfg)
    assert fd_gradient_error(state, data) < 1e-4


def test_frozen_omega_has_no_gradient():
    rng = np.random.default_rng(6)
    state, data = random_state(rng, 2, 5, 1)
    assert "log_omega" not in model.gradient(state, data)
    state.alignment = model.ENERGY
    assert "Z" not in model.gradient(state, data)


def test_bisection_stationary_point():
    # Along a direction in S alone the objective is a convex quadratic, so the
    # stationary point found by bisection must also match its closed form.
    rng = np.random.default_rng(7)
    state, data = random_state(rng, 2, 5, 1)
    direction = rng.normal(size=state.S.shape)

    def at(t):
        s = state.copy()
        s.S = state.S + t * direction
        return s

    def dirderiv(t):
        return float(np.sum(model.gradient(at(t), data)["S"] * direction))

    lo, hi = -1.0, 1.0
    while dirderiv(lo) > 0:
        lo *= 2
    while dirderiv(hi) < 0:
        hi *= 2
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if dirderiv(mid) < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15:
            break
    t_star = 0.5 * (lo + hi)
    assert abs(dirderiv(t_star)) < 1e-6
    d0, d1 = dirderiv(0.0), dirderiv(1.0)
    assert t_star == pytest.approx(-d0 / (d1 - d0), rel=1e-8, abs=1e-12)


def test_sample_manifold():
    rng = np.random.default_rng(8)
    state, _ = random_state(rng, 4, 5, 2)
    state.log_gamma = np.log(1e10)
    mean, var = model.sample_manifold(state, state.Z[1])
    np.testing.assert_allclose(mean, state.S[1], atol=1e-3)
    mean, var = model.sample_manifold(state, state.Z[1] + 1e3)
    np.testing.assert_allclose(mean, 0.0, atol=1e-8)
    np.testing.assert_allclose(var, state.psi().variance + 1e-10, rtol=1e-6)
    # single training point: closed-form posterior
    state1, _ = random_state(rng, 1, 3, 1)
    psi, gamma = state1.psi(), np.exp(state1.log_gamma)
    v = psi.variance
    z = state1.Z[0] + np.array([0.3, -0.2])
    kz = kernels.eval(psi, 0.0, np.linalg.norm(z - state1.Z[0]))
    c = v * (1 + psi.jitter) + 1 / gamma
    mean, var = model.sample_manifold(state1, z)
    np.testing.assert_allclose(mean[:, 0], kz / c * state1.S[0, :, 0])
    np.testing.assert_allclose(var[:, 0], v - kz**2 / c + 1 / gamma)
    with pytest.raises(InvalidArgumentError):
        model.sample_manifold(state1, [0.0])


def test_permutation_invariance():
    rng = np.random.default_rng(9)
    state, data = random_state(rng, 3, 5, 1)
    perm = np.array([2, 0, 1])
    s2 = state.copy()
    s2.S, s2.Z = state.S[perm], state.Z[perm]
    s2.log_theta, s2.log_beta = state.log_theta[perm], state.log_beta[perm]
    s2.warp.U, s2.warp.log_omega = state.warp.U[perm], state.warp.log_omega[perm]
    d2 = model.Dataset(data.X, data.Y[perm])
    assert model.objective(s2, d2) == pytest.approx(model.objective(state, data), rel=1e-12)
    t1 = model.log_posterior_terms(state, data)["seq"]
    t2 = model.log_posterior_terms(s2, d2)["seq"]
    np.testing.assert_allclose(t2, np.asarray(t1)[perm], rtol=1e-12)


def test_worker_count_does_not_change_result(monkeypatch):
    rng = np.random.default_rng(10)
    state, data = random_state(rng, 4, 6, 1)
    monkeypatch.setenv(model.WORKERS_ENV, "1")
    f1, g1 = model.objective_and_gradient(state, data)
    monkeypatch.setenv(model.WORKERS_ENV, "3")
    f3, g3 = model.objective_and_gradient(state, data)
    assert f1 == f3
    for k in g1:
        assert np.array_equal(g1[k], g3[k])


def test_identical_sequences_recover_y():
    X = np.linspace(-1, 1, 12)
    Y = np.tile(np.sin(2 * X)[None, :, None], (3, 1, 1))
    data = model.Dataset(X, Y)
    # Zero shifts are the exact identity warp G = X.
    cfg = optimizer.FitConfig(iterations=400, learning_rate=0.02, warp_family=warps.SHIFT,
                              frozen=("shifts",))
    res = optimizer.fit(data, cfg)
    beta = np.exp(res.state.log_beta)
    tol = 2.0 / np.sqrt(beta)[:, None, None]
    assert np.all(np.abs(res.state.S - Y) < tol)
