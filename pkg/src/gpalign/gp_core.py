"""Gaussian-process primitives with analytic gradients.

Targets may be a vector ``(N,)`` or a matrix ``(N, D)``; in the latter case
the columns are independent draws sharing one covariance and the
log-densities are summed over columns.

Gradients are returned as dicts with keys ``log_params`` (kernel
log-hyperparameters), ``log_noise`` (log noise precision), ``inputs`` and
``targets``.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.linalg.lapack import dpotri

from gpalign import kernels
from gpalign.errors import InvalidArgumentError, NumericalFailure

LOG_2PI = np.log(2.0 * np.pi)

# Multiples of the kernel's relative jitter tried in turn: 1e-6 -> 1e-4 -> 1e-2.
JITTER_LADDER = (1.0, 1e2, 1e4)


def _as_columns(targets):
    Y = np.asarray(targets, dtype=float)
    return (Y[:, None], True) if Y.ndim == 1 else (Y, False)


def chol_inverse(L):
    """``(L L^T)^-1`` from a lower Cholesky factor."""
    inv, info = dpotri(L, lower=1)
    if info != 0:
        raise NumericalFailure("inverse from Cholesky factor failed")
    return np.tril(inv) + np.tril(inv, -1).T


def factor_gram(kernel, inputs, noise_precision, with_grads=False, index=None):
    """Cholesky factor of ``k(X, X) + jitter + I / noise_precision`` with jitter escalation.

    ``noise_precision=None`` factors the noiseless (jittered) Gram.  Returns
    ``(L, dK)`` where ``dK`` holds the Gram derivatives at the jitter level
    that succeeded (``None`` unless ``with_grads``).  With
    ``with_grads="radial"`` the radial terms for input gradients are appended:
    ``(L, dK, radial)``.
    """
    n = np.shape(inputs)[0]
    for scale in JITTER_LADDER:
        extra = ()
        if with_grads == "radial":
            K, dK, radial = kernels.gram_and_grads(kernel, inputs, add_jitter=True,
                                                   jitter_scale=scale, return_radial=True)
            extra = (radial,)
        elif with_grads:
            K, dK = kernels.gram_and_grads(kernel, inputs, add_jitter=True, jitter_scale=scale)
        else:
            K, dK = kernels.gram(kernel, inputs, add_jitter=True, jitter_scale=scale), None
        if noise_precision is not None:
            K[np.diag_indices(n)] += 1.0 / noise_precision
        try:
            return (np.linalg.cholesky(K), dK) + extra
        except np.linalg.LinAlgError:
            continue
    raise NumericalFailure("covariance not positive definite after jitter escalation", index)


def gaussian_logpdf_chol(L, Y):
    """Sum over columns of ``log N(Y[:, d] | 0, L L^T)`` and ``alpha = C^-1 Y``."""
    alpha = cho_solve((L, True), Y)
    n, d = Y.shape
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    value = -0.5 * np.sum(Y * alpha) - 0.5 * d * logdet - 0.5 * n * d * LOG_2PI
    return value, alpha


def _check_noise(noise_precision):
    if not (np.isfinite(noise_precision) and noise_precision > 0):
        raise InvalidArgumentError(f"noise precision must be positive, got {noise_precision}")


def log_marginal(kernel, noise_precision, inputs, targets, return_grad=False, index=None):
    """Log marginal likelihood ``log N(y | 0, K + I / beta)``.

    Parameters
    ----------
    kernel : KernelSpec
    noise_precision : float
        Inverse noise variance ``beta``.
    inputs : array, shape (N,) or (N, q)
    targets : array, shape (N,) or (N, D)
    return_grad : bool
        Also return the gradient dict.
    index : int, optional
        Attached to :class:`NumericalFailure` for diagnostics.
    """
    _check_noise(noise_precision)
    Y, squeeze = _as_columns(targets)
    n, d = Y.shape
    if n < 1 or np.shape(inputs)[0] != n:
        raise InvalidArgumentError("inputs and targets must have the same, non-zero length")
    if not return_grad:
        L, _ = factor_gram(kernel, inputs, noise_precision, index=index)
        return gaussian_logpdf_chol(L, Y)[0]
    L, dK, radial = factor_gram(kernel, inputs, noise_precision, with_grads="radial", index=index)
    value, alpha = gaussian_logpdf_chol(L, Y)
    W = 0.5 * (alpha @ alpha.T - d * chol_inverse(L))
    grad = {
        "log_params": np.array([np.sum(W * g) for g in dK]),
        "log_noise": -np.trace(W) / noise_precision,
        "inputs": kernels.input_vjp_radial(radial, 2.0 * W),
        "targets": -alpha[:, 0] if squeeze else -alpha,
    }
    return value, grad


@dataclass(frozen=True)
class GPFit:
    """Conditioned GP: cached Cholesky of ``K + I / noise_precision``."""

    kernel: kernels.KernelSpec
    noise_precision: float
    train_inputs: np.ndarray
    train_targets: np.ndarray
    chol: np.ndarray
    alpha: np.ndarray

    @classmethod
    def build(cls, kernel, noise_precision, inputs, targets):
        _check_noise(noise_precision)
        inputs = np.asarray(inputs, dtype=float)
        targets = np.asarray(targets, dtype=float)
        if inputs.shape[0] != targets.shape[0] or inputs.shape[0] < 1:
            raise InvalidArgumentError("inputs and targets must have the same, non-zero length")
        L, _ = factor_gram(kernel, inputs, noise_precision)
        alpha = cho_solve((L, True), targets)
        return cls(kernel, float(noise_precision), inputs, targets, L, alpha)

    def covariance(self):
        """Reassemble ``L L^T`` (the jittered, noisy training covariance)."""
        return self.chol @ self.chol.T

    def predict(self, test_inputs, include_noise=False):
        """Posterior mean and marginal variance at ``test_inputs``.

        The variance is of the latent function unless ``include_noise``.
        """
        Ks = kernels.gram(self.kernel, self.train_inputs, test_inputs)
        mean = Ks.T @ self.alpha
        V = solve_triangular(self.chol, Ks, lower=True)
        var = self.kernel.total_variance - np.sum(V * V, axis=0)
        var = np.maximum(var, 0.0)
        if include_noise:
            var = var + 1.0 / self.noise_precision
        return mean, var


def posterior_predict(fit, test_inputs):
    """Latent posterior mean and variance of a :class:`GPFit`."""
    return fit.predict(test_inputs)


def _cross_with_jitter(kernel, A, B, scale, with_grads):
    """Cross-covariance treating the jitter as a white-noise kernel component.

    Coincident inputs receive the jitter, so inducing inputs placed on the
    training inputs reproduce the jittered self-Gram exactly.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if with_grads:
        K, dK = kernels.gram_and_grads(kernel, A, B)
    else:
        K, dK = kernels.gram(kernel, A, B), None
    same = A[:, None] == B[None, :] if A.ndim == 1 else np.all(A[:, None, :] == B[None, :, :], axis=-1)
    if np.any(same):
        K = K + scale * kernel.total_jitter * same
        if with_grads:
            i = 0
            for p in kernel.base_parts():
                dK[i] = dK[i] + scale * p.jitter * p.variance * same
                i += 3 if p.family == kernels.PERIODIC else 2
    return K, dK


def sparse_lower_bound(kernel, noise_precision, inducing_inputs, inputs, targets,
                       return_grad=False, index=None):
    """Collapsed variational lower bound with fixed inducing inputs.

    ``log N(y | 0, Q + I / beta) - (beta / 2) tr(K - Q)`` with
    ``Q = K_nm K_mm^-1 K_mn``; summed over target columns.  Costs
    ``O(N M^2)``.  Gradients are not taken with respect to the inducing
    inputs, which stay fixed.
    """
    _check_noise(noise_precision)
    Y, squeeze = _as_columns(targets)
    n, d = Y.shape
    Zu = np.asarray(inducing_inputs, dtype=float)
    m = Zu.shape[0]
    if not 1 <= m <= n:
        raise InvalidArgumentError(f"need 1 <= M <= N, got M={m}, N={n}")
    if np.shape(inputs)[0] != n:
        raise InvalidArgumentError("inputs and targets must have the same length")
    sig2 = 1.0 / noise_precision

    for scale in JITTER_LADDER:
        if return_grad:
            Kmm, dKmm = kernels.gram_and_grads(kernel, Zu, add_jitter=True, jitter_scale=scale)
        else:
            Kmm, dKmm = kernels.gram(kernel, Zu, add_jitter=True, jitter_scale=scale), None
        try:
            Lm = np.linalg.cholesky(Kmm)
            break
        except np.linalg.LinAlgError:
            continue
    else:
        raise NumericalFailure("K_mm not positive definite after jitter escalation", index)

    Knm, dKnm = _cross_with_jitter(kernel, inputs, Zu, scale, return_grad)
    kdiag, dkdiag = kernels.diag(kernel, inputs, add_jitter=True, jitter_scale=scale)

    V = solve_triangular(Lm, Knm.T, lower=True)               # M x N
    B = np.eye(m) + (V @ V.T) / sig2
    try:
        LB = np.linalg.cholesky(B)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure("sparse bound inner system not positive definite", index) from exc

    def cinv(R):
        # Woodbury: (V^T V + s I)^-1 R
        return (R - V.T @ cho_solve((LB, True), V @ R) / sig2) / sig2

    alpha = cinv(Y)
    trQ = np.sum(V * V)
    trK = np.sum(kdiag)
    logdet = n * np.log(sig2) + 2.0 * np.sum(np.log(np.diag(LB)))
    value = (-0.5 * np.sum(Y * alpha) - 0.5 * d * logdet - 0.5 * n * d * LOG_2PI
             - 0.5 * d * (trK - trQ) / sig2)
    if not return_grad:
        return value

    P = chol_inverse(Lm)
    # W_Q = 0.5 (alpha alpha^T - d C^-1) + d / (2 s) I, applied to K_nm
    WK = 0.5 * alpha @ (alpha.T @ Knm) - 0.5 * d * cinv(Knm) + 0.5 * d * Knm / sig2
    G_nm = 2.0 * WK @ P
    G_mm = -P @ (Knm.T @ WK) @ P
    g_diag = -0.5 * d / sig2

    trCinv = (n - np.trace(cho_solve((LB, True), V @ V.T)) / sig2) / sig2
    dF_dsig2 = 0.5 * np.sum(alpha * alpha) - 0.5 * d * trCinv + 0.5 * d * (trK - trQ) / sig2**2
    grad = {
        "log_params": np.array([np.sum(G_nm * a) + np.sum(G_mm * b) + g_diag * np.sum(c)
                                for a, b, c in zip(dKnm, dKmm, dkdiag)]),
        "log_noise": -sig2 * dF_dsig2,
        "inputs": kernels.input_vjp(kernel, inputs, Zu, G_nm),
        "targets": -alpha[:, 0] if squeeze else -alpha,
    }
    return value, grad
