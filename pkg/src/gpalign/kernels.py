"""Stationary covariance functions and Gram-matrix construction.

All hyperparameters are strictly positive and are exposed to optimizers on
the log scale (see :meth:`KernelSpec.log_params`).  Inputs are either 1-D
arrays (scalar inputs, e.g. time) or 2-D arrays of shape ``(n, q)`` (e.g.
latent points); the distance ``r`` is Euclidean in both cases.

The self-Gram jitter is relative: ``jitter * variance`` is added to the
diagonal, so it scales with the signal amplitude and its derivative with
respect to the log-variance is the jitter itself.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from gpalign import _accel
from gpalign.errors import InvalidArgumentError

SE = "SE"
MATERN12 = "Matern12"
MATERN32 = "Matern32"
PERIODIC = "Periodic"
SUM = "Sum"

FAMILIES = (SE, MATERN12, MATERN32, PERIODIC, SUM)
_FAMILY_CODES = {SE: 0, MATERN12: 1, MATERN32: 2, PERIODIC: 3}


@dataclass(frozen=True)
class KernelSpec:
    """Covariance family plus positive hyperparameters.

    Parameters
    ----------
    family : str
        One of ``SE``, ``Matern12``, ``Matern32``, ``Periodic`` or ``Sum``.
    variance, lengthscale, period : float
        Signal variance, lengthscale and (Periodic only) period.
    jitter : float
        Relative diagonal jitter for self-Gram matrices.
    parts : tuple of KernelSpec
        Summands of a ``Sum`` kernel; ignored otherwise.
    """

    family: str = SE
    variance: float = 1.0
    lengthscale: float = 1.0
    period: float = 1.0
    jitter: float = 1e-6
    parts: tuple = field(default=())

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidArgumentError(f"unknown kernel family {self.family!r}")
        if self.family == SUM:
            if not self.parts:
                raise InvalidArgumentError("Sum kernel needs at least one part")
            if any(not isinstance(p, KernelSpec) for p in self.parts):
                raise InvalidArgumentError("Sum parts must be KernelSpec instances")
            object.__setattr__(self, "parts", tuple(self.parts))
            return
        for name in ("variance", "lengthscale") + (("period",) if self.family == PERIODIC else ()):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise InvalidArgumentError(f"{name} must be positive, got {value}")
        if not (np.isfinite(self.jitter) and self.jitter >= 0):
            raise InvalidArgumentError(f"jitter must be non-negative, got {self.jitter}")

    def base_parts(self):
        """Flat list of non-Sum kernels whose sum is this kernel."""
        if self.family != SUM:
            return [self]
        out = []
        for p in self.parts:
            out.extend(p.base_parts())
        return out

    @property
    def n_params(self):
        return sum(3 if p.family == PERIODIC else 2 for p in self.base_parts())

    @property
    def total_variance(self):
        """Prior variance k(x, x) without jitter."""
        return float(sum(p.variance for p in self.base_parts()))

    @property
    def total_jitter(self):
        """Absolute jitter added to a self-Gram diagonal."""
        return float(sum(p.jitter * p.variance for p in self.base_parts()))

    def param_names(self):
        names = []
        for i, p in enumerate(self.base_parts()):
            prefix = f"{i}." if self.family == SUM else ""
            names += [prefix + "log_variance", prefix + "log_lengthscale"]
            if p.family == PERIODIC:
                names.append(prefix + "log_period")
        return names

    def log_params(self):
        """Log-hyperparameters in a fixed order (variance, lengthscale[, period]) per part."""
        vals = []
        for p in self.base_parts():
            vals += [p.variance, p.lengthscale]
            if p.family == PERIODIC:
                vals.append(p.period)
        return np.log(np.asarray(vals, dtype=float))

    def with_log_params(self, log_params):
        """Return a copy whose hyperparameters are ``exp(log_params)``."""
        theta = np.exp(np.asarray(log_params, dtype=float))
        if theta.shape != (self.n_params,):
            raise InvalidArgumentError(
                f"expected {self.n_params} log-parameters, got shape {theta.shape}")
        new_parts = []
        i = 0
        for p in self.base_parts():
            kw = dict(variance=float(theta[i]), lengthscale=float(theta[i + 1]))
            i += 2
            if p.family == PERIODIC:
                kw["period"] = float(theta[i])
                i += 1
            new_parts.append(replace(p, **kw))
        if self.family != SUM:
            return new_parts[0]
        return replace(self, parts=tuple(new_parts))

    def to_dict(self):
        if self.family == SUM:
            return {"family": SUM, "parts": [p.to_dict() for p in self.parts]}
        d = {"family": self.family, "variance": self.variance,
             "lengthscale": self.lengthscale, "jitter": self.jitter}
        if self.family == PERIODIC:
            d["period"] = self.period
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if d.get("family") == SUM:
            return cls(family=SUM, parts=tuple(cls.from_dict(p) for p in d["parts"]))
        return cls(**{k: d[k] for k in ("family", "variance", "lengthscale", "period", "jitter")
                      if k in d})


def _as_points(A):
    A = np.asarray(A, dtype=float)
    if A.ndim == 0:
        A = A[None]
    if A.ndim > 2:
        raise InvalidArgumentError(f"inputs must be 1-D or 2-D, got ndim={A.ndim}")
    if not np.all(np.isfinite(A)):
        raise InvalidArgumentError("kernel inputs contain NaN or Inf")
    return A


def _distances(A, B):
    """Distance matrix and differences, shaped (n, m) for scalar inputs, else (n, m, q)."""
    if A.ndim == 1 and B.ndim == 1:
        diff = A[:, None] - B[None, :]
        return np.abs(diff), diff
    A2 = A if A.ndim == 2 else A[:, None]
    B2 = B if B.ndim == 2 else B[:, None]
    if A2.shape[1] != B2.shape[1]:
        raise InvalidArgumentError("input dimensionality mismatch")
    diff = A2[:, None, :] - B2[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1)), diff


def _base_terms(p, r):
    """Value, log-hyperparameter derivatives and radial factor for one base kernel.

    The radial factor is ``(dk/dr) / r``, so the input gradient is
    ``rad * (a - b)``.
    """
    v, ell = p.variance, p.lengthscale
    if p.family == SE:
        k = v * np.exp(-0.5 * (r / ell) ** 2)
        return k, [k, k * (r / ell) ** 2], -k / ell**2
    if p.family == MATERN12:
        k = v * np.exp(-r / ell)
        with np.errstate(divide="ignore", invalid="ignore"):
            rad = np.where(r > 0, -k / (ell * r), 0.0)
        return k, [k, k * r / ell], rad
    if p.family == MATERN32:
        u = np.sqrt(3.0) * r / ell
        e = np.exp(-u)
        k = v * (1.0 + u) * e
        return k, [k, v * u * u * e], -3.0 * v * e / ell**2
    per = p.period
    s = np.sin(np.pi * r / per)
    k = v * np.exp(-2.0 * s * s / ell**2)
    c2 = np.sin(2.0 * np.pi * r / per)
    dlogl = k * 4.0 * s * s / ell**2
    dlogp = k * (2.0 * np.pi * r / (per * ell**2)) * c2
    rad = -k * (2.0 * np.pi / (per * ell**2)) * (2.0 * np.pi / per) * np.sinc(2.0 * r / per)
    return k, [k, dlogl, dlogp], rad


def _terms_1d(p, A, B):
    params = np.array([p.variance, p.lengthscale, p.period], dtype=float)
    k, dlogl, dlogp, rad = _accel.radial_terms_1d(
        _FAMILY_CODES[p.family], params, np.ascontiguousarray(A), np.ascontiguousarray(B))
    grads = [k, dlogl] + ([dlogp] if p.family == PERIODIC else [])
    return k, grads, rad


def _collect(kernel, A, B, need_grads, need_rad):
    r = diff = None
    K = 0.0
    grads, rad = [], 0.0
    for p in kernel.base_parts():
        if A.ndim == 1 and B.ndim == 1 and (need_grads or need_rad):
            terms = _terms_1d(p, A, B)
        else:
            if r is None:
                r, diff = _distances(A, B)
            terms = _base_terms(p, r)
        k, g, rd = terms
        K = K + k
        if need_grads:
            grads.extend(g)
        if need_rad:
            rad = rad + rd
    if diff is None and need_rad:
        _, diff = _distances(A, B)
    return K, grads, rad, diff


def _same(A, B):
    return B is None or B is A


def eval(kernel, x, x2):
    """Covariance between two single inputs."""
    return float(gram(kernel, np.atleast_1d(x), np.atleast_1d(x2))[0, 0])


def gram(kernel, A, B=None, add_jitter=False, jitter_scale=1.0):
    """Gram matrix ``k(A_i, B_j)``.

    With ``B`` omitted the self-Gram is returned, symmetrized, and
    ``add_jitter`` adds ``jitter_scale * total_jitter`` to its diagonal.
    """
    A = _as_points(A)
    same = _same(A, B)
    B = A if same else _as_points(B)
    K, _, _, _ = _collect(kernel, A, B, need_grads=False, need_rad=False)
    K = np.array(K, dtype=float)
    if same:
        K = 0.5 * (K + K.T)
        if add_jitter:
            K[np.diag_indices_from(K)] += jitter_scale * kernel.total_jitter
    return K


def gram_and_grads(kernel, A, B=None, add_jitter=False, jitter_scale=1.0, return_radial=False):
    """Gram matrix and its derivatives with respect to each log-hyperparameter.

    Returns
    -------
    K : ndarray
    dK : list of ndarray
        One matrix per entry of ``kernel.log_params()``.  Jitter derivatives
        are included for the log-variance entries when ``add_jitter``.
    radial : tuple, optional
        Only with ``return_radial``: opaque terms for :func:`input_vjp_radial`,
        saving a second pass over the inputs.
    """
    A = _as_points(A)
    same = _same(A, B)
    B = A if same else _as_points(B)
    K, grads, rad, diff = _collect(kernel, A, B, need_grads=True, need_rad=return_radial)
    K = np.array(K, dtype=float)
    grads = [np.array(g, dtype=float) for g in grads]
    if same and add_jitter:
        idx = np.diag_indices_from(K)
        K[idx] += jitter_scale * kernel.total_jitter
        i = 0
        for p in kernel.base_parts():
            grads[i][idx] += jitter_scale * p.jitter * p.variance
            i += 3 if p.family == PERIODIC else 2
    if return_radial:
        return K, grads, (rad, diff)
    return K, grads


def diag(kernel, A, add_jitter=False, jitter_scale=1.0):
    """Diagonal of the self-Gram and its log-hyperparameter derivatives."""
    A = _as_points(A)
    n = A.shape[0]
    jit = jitter_scale if add_jitter else 0.0
    d = np.full(n, kernel.total_variance + jit * kernel.total_jitter)
    grads = []
    for p in kernel.base_parts():
        grads.append(np.full(n, p.variance * (1.0 + jit * p.jitter)))
        grads.append(np.zeros(n))
        if p.family == PERIODIC:
            grads.append(np.zeros(n))
    return d, grads


def input_vjp(kernel, A, B, W):
    """Gradient with respect to ``A`` of ``sum(W * gram(kernel, A, B))``.

    Only the first argument is differentiated.  For a self-Gram pass
    ``W + W.T`` to account for both arguments.
    """
    A = _as_points(A)
    B = _as_points(B)
    _, _, rad, diff = _collect(kernel, A, B, need_grads=False, need_rad=True)
    return input_vjp_radial((rad, diff), W)


def input_vjp_radial(radial, W):
    """:func:`input_vjp` from the terms returned by ``gram_and_grads(..., return_radial=True)``."""
    rad, diff = radial
    M = np.asarray(W) * rad
    if diff.ndim == 2:
        return np.sum(M * diff, axis=1)
    return np.einsum("ij,ijq->iq", M, diff)
