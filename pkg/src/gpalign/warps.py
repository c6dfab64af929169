"""Monotonic warp families.

``NonparametricGP``
    ``G = 2 * cumsum(softmax(U)) - 1`` per sequence, with a GP smoothness
    prior on ``G`` and a standard-normal prior on ``U``.
``BasisSimplex``
    Convex combination of fixed increasing basis functions on ``[-1, 1]``,
    weights given by a softmax of unconstrained logits.
``UniformShift``
    ``G = X + delta``.
"""

from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy.special import expit, softmax

from gpalign import gp_core, kernels
from gpalign.errors import InvalidArgumentError

NONPARAMETRIC = "NonparametricGP"
BASIS = "BasisSimplex"
SHIFT = "UniformShift"
WARP_FAMILIES = (NONPARAMETRIC, BASIS, SHIFT)

# Weight given to the identity basis function at initialization.
BASIS_INIT_IDENTITY_WEIGHT = 0.9


def warp_from_aux(U):
    """Monotone warp(s) in ``(-1, 1]`` from auxiliary values (rows of ``U``).

    Strict increase holds in floating point while every softmax weight stays
    above rounding resolution, i.e. for row spreads ``max(U) - min(U)`` up
    to about 30.
    """
    U = np.asarray(U, dtype=float)
    c = np.cumsum(np.exp(U - U.max(axis=-1, keepdims=True)), axis=-1)
    # Dividing by the running total (instead of normalizing first) makes the
    # last entry exactly 1 in floating point.
    return 2.0 * c / c[..., -1:] - 1.0


def warp_from_aux_vjp(U, dG):
    """Pull back ``dL/dG`` through :func:`warp_from_aux` to ``dL/dU``."""
    p = softmax(np.asarray(U, dtype=float), axis=-1)
    # dG_n/dp_k = 2 for k <= n, so dL/dp is twice the reverse cumulative sum.
    g = 2.0 * np.flip(np.cumsum(np.flip(dG, axis=-1), axis=-1), axis=-1)
    return p * (g - np.sum(p * g, axis=-1, keepdims=True))


@lru_cache(maxsize=64)
def _prior_factor(omega, x_bytes, n):
    X = np.frombuffer(x_bytes, dtype=float, count=n)
    L, _ = gp_core.factor_gram(omega, X, None)
    return L


def warp_log_prior(G_row, X, omega, U_row=None, return_grad=False, omega_grad=True):
    """``log N(G | 0, k_omega(X, X) + jitter) + log N(U | 0, I)``.

    ``U_row=None`` drops the auxiliary term (used by families without
    auxiliaries).  The gradient dict has keys ``G``, ``U`` and
    ``log_params`` (omega; ``None`` when ``omega_grad`` is false).
    """
    G_row = np.asarray(G_row, dtype=float)
    X = np.ascontiguousarray(X, dtype=float)
    n = X.shape[0]
    if G_row.shape != (n,) or (U_row is not None and np.shape(U_row) != (n,)):
        raise InvalidArgumentError("G, X and U rows must have equal length")
    if return_grad and omega_grad:
        L, dK = gp_core.factor_gram(omega, X, None, with_grads=True)
    else:
        L, dK = _prior_factor(omega, X.tobytes(), n), None
    value, alpha = gp_core.gaussian_logpdf_chol(L, G_row[:, None])
    if U_row is not None:
        U_row = np.asarray(U_row, dtype=float)
        value += -0.5 * np.dot(U_row, U_row) - 0.5 * n * gp_core.LOG_2PI
    if not return_grad:
        return value
    grad = {"G": -alpha[:, 0], "U": None if U_row is None else -U_row, "log_params": None}
    if omega_grad:
        W = 0.5 * (alpha @ alpha.T - gp_core.chol_inverse(L))
        grad["log_params"] = np.array([np.sum(W * g) for g in dK])
    return value, grad


def _rescaled_logistic(center, slope=6.0):
    lo, hi = expit(slope * (-1.0 - center)), expit(slope * (1.0 - center))
    return lambda t: -1.0 + 2.0 * (expit(slope * (t - center)) - lo) / (hi - lo)


DEFAULT_BASIS = (
    lambda t: np.asarray(t, dtype=float),
    lambda t: np.asarray(t, dtype=float) ** 3,
    lambda t: np.tanh(3.0 * np.asarray(t, dtype=float)) / np.tanh(3.0),
    _rescaled_logistic(-0.4),
    _rescaled_logistic(0.4),
)


def basis_matrix(X, basis=DEFAULT_BASIS):
    """Evaluate each basis function at ``X``; shape ``(K, N)``."""
    return np.stack([b(X) for b in basis])


def basis_warp(weights_row, X, basis=DEFAULT_BASIS):
    """Convex combination ``sum_k w_k basis_k(X)`` of increasing basis functions."""
    w = np.asarray(weights_row, dtype=float)
    if w.shape != (len(basis),):
        raise InvalidArgumentError(f"expected {len(basis)} weights, got shape {w.shape}")
    if np.any(w < -1e-8) or abs(w.sum() - 1.0) > 1e-8:
        raise InvalidArgumentError("basis weights must lie on the probability simplex")
    return w @ basis_matrix(X, basis)


def shift_warp(delta, X):
    """Uniform translation of the time axis; no clamping."""
    if not np.isfinite(delta):
        raise InvalidArgumentError("shift must be finite")
    return np.asarray(X, dtype=float) + delta


def initial_basis_logits(J, K):
    """Logits placing ``BASIS_INIT_IDENTITY_WEIGHT`` on the identity basis."""
    logits = np.zeros((J, K))
    if K > 1:
        w = BASIS_INIT_IDENTITY_WEIGHT
        logits[:, 0] = np.log(w * (K - 1) / (1.0 - w))
    return logits


@dataclass
class WarpState:
    """Free warp parameters for ``J`` sequences.

    Only the array matching ``family`` is used; ``log_omega`` holds the
    per-sequence smoothness-prior hyperparameters on the log scale.
    """

    family: str
    U: np.ndarray = None
    logits: np.ndarray = None
    shifts: np.ndarray = None
    omega: kernels.KernelSpec = field(default_factory=lambda: kernels.KernelSpec(
        kernels.SE, variance=1.0, lengthscale=1.0, jitter=1e-6))
    log_omega: np.ndarray = None
    basis: tuple = DEFAULT_BASIS

    def __post_init__(self):
        if self.family not in WARP_FAMILIES:
            raise InvalidArgumentError(f"unknown warp family {self.family!r}")

    @classmethod
    def initial(cls, family, J, N, omega=None, basis=DEFAULT_BASIS):
        """Near-identity warps: ``U = 0``, identity-heavy logits, or zero shifts."""
        st = cls(family=family, basis=basis)
        if omega is not None:
            st.omega = omega
        st.log_omega = np.tile(st.omega.log_params(), (J, 1))
        if family == NONPARAMETRIC:
            st.U = np.zeros((J, N))
        elif family == BASIS:
            st.logits = initial_basis_logits(J, len(basis))
        else:
            st.shifts = np.zeros(J)
        return st

    def copy(self):
        def c(a):
            return None if a is None else np.array(a, copy=True)
        return replace(self, U=c(self.U), logits=c(self.logits), shifts=c(self.shifts),
                       log_omega=c(self.log_omega))

    def omega_j(self, j):
        return self.omega.with_log_params(self.log_omega[j])

    def weights(self):
        return softmax(self.logits, axis=-1)

    def realize(self, X):
        """Warps ``G``, shape ``(J, N)``."""
        X = np.asarray(X, dtype=float)
        if self.family == NONPARAMETRIC:
            return warp_from_aux(self.U)
        if self.family == BASIS:
            return self.weights() @ basis_matrix(X, self.basis)
        return X[None, :] + self.shifts[:, None]

    def realize_vjp(self, X, dG):
        """Pull ``dL/dG`` (J x N) back to the family's free parameter array."""
        if self.family == NONPARAMETRIC:
            return warp_from_aux_vjp(self.U, dG)
        if self.family == BASIS:
            w = self.weights()
            dw = dG @ basis_matrix(np.asarray(X, dtype=float), self.basis).T
            return w * (dw - np.sum(w * dw, axis=-1, keepdims=True))
        return np.sum(dG, axis=-1)
