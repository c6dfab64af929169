"""Joint MAP objective for alignment, warping and clustering.

For each sequence ``j`` a GP with kernel ``theta_j`` and noise precision
``beta_j`` jointly explains the pseudo-observations ``S_j`` at the uniform
grid ``X`` and the observations ``Y_j`` at the warped inputs ``G_j``.  A
GP-LVM with kernel ``psi`` and noise precision ``gamma`` maps latent points
``Z`` to the flattened ``S`` rows.  The objective is the negative of

    sum_j seq_term_j + lvm_weight * lvm_term + log N(Z | 0, I)
    + sum_j warp_log_prior_j + hyperpriors,

where every log-hyperparameter has a standard-normal prior.  With the
``EnergyToMean`` alignment the GP-LVM (and ``Z``, ``psi``, ``gamma``) is
replaced by ``-lvm_weight * energy_objective(S)``.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from gpalign import gp_core, kernels, warps
from gpalign.errors import InvalidArgumentError

GPLVM = "GPLVM"
ENERGY = "EnergyToMean"
ALIGNMENTS = (GPLVM, ENERGY)

WORKERS_ENV = "GPALIGN_WORKERS"


@dataclass
class Dataset:
    """Observed sequences on a shared uniform grid.

    Attributes
    ----------
    X : ndarray, shape (N,)
    Y : ndarray, shape (J, N, D)
    true_warps : ndarray, shape (J, N), optional
    groups : ndarray of int, shape (J,), optional
    """

    X: np.ndarray
    Y: np.ndarray
    true_warps: np.ndarray = None
    groups: np.ndarray = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        Y = np.asarray(self.Y, dtype=float)
        if Y.ndim == 2:
            Y = Y[:, :, None]
        self.Y = Y
        if Y.ndim != 3 or Y.shape[1] != self.X.shape[0]:
            raise InvalidArgumentError(f"Y must be (J, N, D) with N={self.X.shape[0]}, got {Y.shape}")
        if np.any(np.diff(self.X) <= 0):
            raise InvalidArgumentError("X must be strictly increasing")
        if not np.all(np.isfinite(Y)):
            raise InvalidArgumentError("Y contains NaN or Inf")
        if self.true_warps is not None:
            self.true_warps = np.asarray(self.true_warps, dtype=float)
            if self.true_warps.shape != Y.shape[:2]:
                raise InvalidArgumentError("true_warps must be (J, N)")
        if self.groups is not None:
            self.groups = np.asarray(self.groups, dtype=int)
            if self.groups.shape != (Y.shape[0],):
                raise InvalidArgumentError("groups must have one label per sequence")

    @property
    def J(self):
        return self.Y.shape[0]

    @property
    def N(self):
        return self.Y.shape[1]

    @property
    def D(self):
        return self.Y.shape[2]


@dataclass
class ModelState:
    """All free parameters plus the fixed structural choices that shape them.

    Kernel hyperparameters live on the log scale in ``log_theta`` (J x P),
    ``log_psi`` and ``warp.log_omega``; the ``*_kernel`` templates only fix
    the family structure.
    """

    S: np.ndarray
    warp: warps.WarpState
    Z: np.ndarray
    log_theta: np.ndarray
    log_beta: np.ndarray
    log_psi: np.ndarray
    log_gamma: float
    data_kernel: kernels.KernelSpec = field(default_factory=kernels.KernelSpec)
    lvm_kernel: kernels.KernelSpec = field(default_factory=kernels.KernelSpec)
    lvm_weight: float = 1.0
    alignment: str = GPLVM
    optimize_omega: bool = False
    inducing: np.ndarray = None

    def __post_init__(self):
        if self.alignment not in ALIGNMENTS:
            raise InvalidArgumentError(f"unknown alignment objective {self.alignment!r}")
        if self.lvm_weight < 0:
            raise InvalidArgumentError("lvm_weight must be non-negative")
        J = self.S.shape[0]
        if self.Z.shape[0] != J or self.log_theta.shape[0] != J or self.log_beta.shape != (J,):
            raise InvalidArgumentError("per-sequence parameter shapes disagree with S")

    @property
    def J(self):
        return self.S.shape[0]

    def theta(self, j):
        return self.data_kernel.with_log_params(self.log_theta[j])

    def psi(self):
        return self.lvm_kernel.with_log_params(self.log_psi)

    def warps(self, X):
        return self.warp.realize(X)

    def copy(self):
        return replace(self, S=self.S.copy(), warp=self.warp.copy(), Z=self.Z.copy(),
                       log_theta=self.log_theta.copy(), log_beta=self.log_beta.copy(),
                       log_psi=self.log_psi.copy(), log_gamma=float(self.log_gamma))


WARP_PARAM = {warps.NONPARAMETRIC: "U", warps.BASIS: "logits", warps.SHIFT: "shifts"}


def free_fields(state):
    """Names of the parameter arrays the objective depends on."""
    names = ["S", WARP_PARAM[state.warp.family], "log_theta", "log_beta"]
    if state.alignment == GPLVM:
        names += ["Z", "log_psi", "log_gamma"]
    if state.optimize_omega and state.warp.family == warps.NONPARAMETRIC:
        names.append("log_omega")
    return names


def get_field(state, name):
    if name in ("U", "logits", "shifts", "log_omega"):
        return getattr(state.warp, name)
    if name == "log_gamma":
        return np.array([state.log_gamma])
    return getattr(state, name)


def set_field(state, name, value):
    if name in ("U", "logits", "shifts", "log_omega"):
        setattr(state.warp, name, value)
    elif name == "log_gamma":
        state.log_gamma = float(np.asarray(value).reshape(-1)[0])
    else:
        setattr(state, name, value)


def seq_term(Y_j, S_j, G_j, X, theta_j, beta_j, inducing=None, return_grad=False, index=None):
    """Joint GP log-likelihood of ``[S_j; Y_j]`` at inputs ``[X; G_j]``.

    ``F`` is marginalized in closed form; the ``D`` output columns are
    independent and share ``theta_j``, ``beta_j`` and ``G_j``.  With
    ``inducing`` the collapsed sparse bound replaces the exact term.

    The gradient dict has keys ``S`` (N x D), ``G`` (N,), ``log_theta`` and
    ``log_beta``.
    """
    S_j = np.asarray(S_j, dtype=float)
    Y_j = np.asarray(Y_j, dtype=float)
    if S_j.ndim == 1:
        S_j, Y_j = S_j[:, None], Y_j[:, None]
    n = S_j.shape[0]
    inputs = np.concatenate([np.asarray(X, dtype=float), np.asarray(G_j, dtype=float)])
    targets = np.vstack([S_j, Y_j])
    if inducing is None:
        out = gp_core.log_marginal(theta_j, beta_j, inputs, targets,
                                   return_grad=return_grad, index=index)
    else:
        out = gp_core.sparse_lower_bound(theta_j, beta_j, inducing, inputs, targets,
                                         return_grad=return_grad, index=index)
    if not return_grad:
        return out
    value, g = out
    return value, {"S": g["targets"][:n], "G": g["inputs"][n:],
                   "log_theta": g["log_params"], "log_beta": g["log_noise"]}


def lvm_term(S, Z, psi, gamma, return_grad=False):
    """GP-LVM log-likelihood: every one of the N*D feature columns of ``S``
    is an independent draw from ``N(0, k_psi(Z, Z) + I / gamma)``.

    One J x J Cholesky serves all columns.  Gradient keys: ``S``, ``Z``,
    ``log_psi``, ``log_gamma``.
    """
    S = np.asarray(S, dtype=float)
    J = S.shape[0]
    flat = S.reshape(J, -1)
    out = gp_core.log_marginal(psi, gamma, np.asarray(Z, dtype=float), flat,
                               return_grad=return_grad)
    if not return_grad:
        return out
    value, g = out
    return value, {"S": g["targets"].reshape(S.shape), "Z": g["inputs"],
                   "log_psi": g["log_params"], "log_gamma": g["log_noise"]}


def energy_objective(S, return_grad=False):
    """``sum_j ||S_j - mean_j(S)||^2``."""
    S = np.asarray(S, dtype=float)
    dev = S - S.mean(axis=0, keepdims=True)
    value = float(np.sum(dev * dev))
    if return_grad:
        return value, 2.0 * dev
    return value


def _std_normal_logpdf(u):
    u = np.asarray(u, dtype=float)
    return float(-0.5 * np.sum(u * u) - 0.5 * u.size * gp_core.LOG_2PI)


def _n_workers():
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _map_ordered(fn, items):
    workers = _n_workers()
    if workers == 1 or len(items) == 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def log_posterior_terms(state, data, return_grad=False):
    """Additive log-posterior terms (a dict) and, optionally, the gradient.

    Term keys: ``seq`` (list, one per sequence), ``alignment``, ``latent``,
    ``warp_prior`` (list), ``hyper``.  ``alignment`` already carries the
    ``lvm_weight`` factor.
    """
    X = data.X
    G = state.warps(X)
    J = state.J
    fam = state.warp.family
    inducing = state.inducing

    def one(j):
        return seq_term(data.Y[j], state.S[j], G[j], X, state.theta(j),
                        float(np.exp(state.log_beta[j])), inducing=inducing,
                        return_grad=return_grad, index=j)

    seq = _map_ordered(one, range(J))
    terms = {}
    grad = {name: np.zeros_like(get_field(state, name), dtype=float)
            for name in free_fields(state)}
    dG = np.zeros_like(G)
    if return_grad:
        terms["seq"] = [v for v, _ in seq]
        for j, (_, g) in enumerate(seq):
            grad["S"][j] += g["S"]
            dG[j] += g["G"]
            grad["log_theta"][j] += g["log_theta"]
            grad["log_beta"][j] += g["log_beta"]
    else:
        terms["seq"] = list(seq)

    lam = state.lvm_weight
    if state.alignment == GPLVM:
        gamma = float(np.exp(state.log_gamma))
        out = lvm_term(state.S, state.Z, state.psi(), gamma, return_grad=return_grad)
        if return_grad:
            value, g = out
            grad["S"] += lam * g["S"]
            grad["Z"] += lam * g["Z"]
            grad["log_psi"] += lam * g["log_psi"]
            grad["log_gamma"] += lam * g["log_gamma"]
        else:
            value = out
        terms["alignment"] = lam * value
        terms["latent"] = _std_normal_logpdf(state.Z)
        if return_grad:
            grad["Z"] -= state.Z
    else:
        out = energy_objective(state.S, return_grad=return_grad)
        if return_grad:
            value, gS = out
            grad["S"] -= lam * gS
        else:
            value = out
        terms["alignment"] = -lam * value
        terms["latent"] = 0.0

    terms["warp_prior"] = []
    if fam == warps.NONPARAMETRIC:
        for j in range(J):
            out = warps.warp_log_prior(G[j], X, state.warp.omega_j(j), state.warp.U[j],
                                       return_grad=return_grad,
                                       omega_grad="log_omega" in grad)
            if return_grad:
                value, g = out
                dG[j] += g["G"]
                grad["U"][j] += g["U"]
                if "log_omega" in grad:
                    grad["log_omega"][j] += g["log_params"]
            else:
                value = out
            terms["warp_prior"].append(value)

    hyper = [state.log_theta, state.log_beta]
    if state.alignment == GPLVM:
        hyper += [state.log_psi, np.array([state.log_gamma])]
    if "log_omega" in grad:
        hyper.append(state.warp.log_omega)
    terms["hyper"] = sum(_std_normal_logpdf(h) for h in hyper)
    if return_grad:
        for name in ("log_theta", "log_beta", "log_psi", "log_gamma", "log_omega"):
            if name in grad:
                grad[name] -= get_field(state, name)
        grad[WARP_PARAM[fam]] += state.warp.realize_vjp(X, dG)
        return terms, grad
    return terms


def _total(terms):
    return (sum(terms["seq"]) + terms["alignment"] + terms["latent"]
            + sum(terms["warp_prior"]) + terms["hyper"])


def objective(state, data):
    """Negative log posterior (to be minimized)."""
    return -_total(log_posterior_terms(state, data))


def objective_and_gradient(state, data):
    """Objective and its gradient, a dict keyed by :func:`free_fields`."""
    terms, grad = log_posterior_terms(state, data, return_grad=True)
    return -_total(terms), {k: -v for k, v in grad.items()}


def gradient(state, data):
    """Exact gradient of :func:`objective` over the free fields."""
    return objective_and_gradient(state, data)[1]


def sample_manifold(state, z_new):
    """GP-LVM prediction of a whole aligned sequence at latent location ``z_new``.

    Returns the mean ``(N, D)`` and per-feature variance ``(N, D)``; the
    variance includes the LVM noise ``1 / gamma``.
    """
    if state.alignment != GPLVM:
        raise InvalidArgumentError("state has no latent variable model")
    z_new = np.atleast_2d(np.asarray(z_new, dtype=float))
    if z_new.shape != (1, state.Z.shape[1]):
        raise InvalidArgumentError(f"z_new must have {state.Z.shape[1]} coordinates")
    J, N, D = state.S.shape
    fit = gp_core.GPFit.build(state.psi(), float(np.exp(state.log_gamma)), state.Z,
                              state.S.reshape(J, -1))
    mean, var = fit.predict(z_new, include_noise=True)
    return mean.reshape(N, D), np.full((N, D), var[0])
