"""Initialization, Adam and the MAP fitting loop."""

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from gpalign import kernels, model, warps
from gpalign.errors import InvalidArgumentError, NumericalFailure

log = logging.getLogger(__name__)


def default_omega():
    """Smoothness-prior kernel for nonparametric warps."""
    return kernels.KernelSpec(kernels.SE, variance=1.0, lengthscale=1.0, jitter=1e-6)


@dataclass
class FitConfig:
    """Everything that controls a fit besides the data.

    ``stage_schedule`` is a list of ``(start, stop, fields)``: the named
    fields stay frozen for iterations ``start <= t < stop``.  ``frozen``
    fields are never updated.  ``lr_final_fraction`` below 1 anneals the
    learning rate along a half cosine down to that fraction of
    ``learning_rate`` at the last iteration.
    """

    learning_rate: float = 0.01
    iterations: int = 2000
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    stage_schedule: list = None
    inducing_count: int = None
    latent_dim: int = 2
    warp_family: str = warps.NONPARAMETRIC
    alignment: str = model.GPLVM
    lvm_weight: float = 1.0
    data_kernel: kernels.KernelSpec = field(default_factory=kernels.KernelSpec)
    lvm_kernel: kernels.KernelSpec = field(default_factory=kernels.KernelSpec)
    warp_kernel: kernels.KernelSpec = field(default_factory=default_omega)
    optimize_omega: bool = False
    frozen: tuple = ()
    lr_final_fraction: float = 0.01

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise InvalidArgumentError("learning_rate must be positive")
        if int(self.iterations) < 1:
            raise InvalidArgumentError("iterations must be >= 1")
        if self.latent_dim < 1:
            raise InvalidArgumentError("latent_dim must be >= 1")
        if not 0 < self.lr_final_fraction <= 1:
            raise InvalidArgumentError("lr_final_fraction must lie in (0, 1]")
        if self.inducing_count is not None and self.inducing_count < 1:
            raise InvalidArgumentError("inducing_count must be >= 1")
        self.iterations = int(self.iterations)


def two_stage_schedule(split):
    """Freeze latent points and warps for the first ``split`` iterations."""
    return [(0, split, frozenset({"Z", "U", "logits", "shifts"}))]


@dataclass
class FitResult:
    state: model.ModelState
    G: np.ndarray
    loss_trace: np.ndarray
    wall_time: float
    failed: bool = False
    message: str = ""


class Adam:
    """Bias-corrected Adam over a dict of arrays, one step counter per entry."""

    def __init__(self, learning_rate=0.01, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = learning_rate, beta1, beta2, eps
        self.m, self.v, self.t = {}, {}, {}

    def step(self, params, grads):
        """Return updated copies of ``params`` for every key present in ``grads``."""
        out = {}
        for name, g in grads.items():
            g = np.asarray(g, dtype=float)
            if name not in self.m:
                self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
                self.t[name] = 0
            self.t[name] += 1
            t = self.t[name]
            self.m[name] = self.b1 * self.m[name] + (1.0 - self.b1) * g
            self.v[name] = self.b2 * self.v[name] + (1.0 - self.b2) * g * g
            mhat = self.m[name] / (1.0 - self.b1**t)
            vhat = self.v[name] / (1.0 - self.b2**t)
            out[name] = params[name] - self.lr * mhat / (np.sqrt(vhat) + self.eps)
        return out


def _pca_latents(S, Q, rng):
    J = S.shape[0]
    flat = S.reshape(J, -1)
    flat = flat - flat.mean(axis=0, keepdims=True)
    Z = np.empty((J, Q))
    if J > 1:
        u, s, _ = np.linalg.svd(flat, full_matrices=False)
        scores = u * s
    else:
        scores = np.zeros((J, 0))
    for q in range(Q):
        col = scores[:, q] if q < scores.shape[1] else np.zeros(J)
        sd = col.std()
        if sd > 1e-10 * max(1.0, np.abs(flat).max()):
            Z[:, q] = col / sd
        else:
            Z[:, q] = 1e-3 * rng.standard_normal(J)
    return Z


def initialize(data, config):
    """Starting state: ``S = Y``, near-identity warps, PCA latents, configured hyperparameters."""
    rng = np.random.default_rng(config.seed)
    J, N, _ = data.Y.shape
    S = np.array(data.Y, copy=True)
    warp = warps.WarpState.initial(config.warp_family, J, N, omega=config.warp_kernel)
    Z = _pca_latents(S, config.latent_dim, rng)
    inducing = None
    if config.inducing_count is not None:
        inducing = inducing_grid(data.X[0], data.X[-1], config.inducing_count)
    return model.ModelState(
        S=S, warp=warp, Z=Z,
        log_theta=np.tile(config.data_kernel.log_params(), (J, 1)),
        log_beta=np.zeros(J),
        log_psi=config.lvm_kernel.log_params(),
        log_gamma=0.0,
        data_kernel=config.data_kernel,
        lvm_kernel=config.lvm_kernel,
        lvm_weight=config.lvm_weight,
        alignment=config.alignment,
        optimize_omega=config.optimize_omega,
        inducing=inducing,
    )


def inducing_grid(lo, hi, m):
    """Cell midpoints of ``m`` equal cells on ``[lo, hi]``.

    Midpoints never hit the endpoint ``hi`` that every nonparametric warp
    reaches, which keeps the coincident-input jitter of the sparse bound
    from switching on and off during optimization.
    """
    edges = np.linspace(lo, hi, m + 1)
    return 0.5 * (edges[:-1] + edges[1:])


def learning_rate_at(config, t):
    """Step size for iteration ``t`` (0-based)."""
    if config.lr_final_fraction == 1.0 or config.iterations == 1:
        return config.learning_rate
    frac = t / (config.iterations - 1)
    scale = config.lr_final_fraction + (1.0 - config.lr_final_fraction) * 0.5 * (1.0 + np.cos(np.pi * frac))
    return config.learning_rate * scale


def _frozen_at(config, t):
    frozen = set(config.frozen)
    for start, stop, names in config.stage_schedule or ():
        if start <= t < stop:
            frozen |= set(names)
    return frozen


def _checked_step(state, data):
    """Objective and gradient, with non-finite values reported as :class:`NumericalFailure`."""
    for name in model.free_fields(state):
        if not np.all(np.isfinite(model.get_field(state, name))):
            raise NumericalFailure(f"non-finite parameter {name}")
    loss, grad = model.objective_and_gradient(state, data)
    if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grad.values()):
        raise NumericalFailure("non-finite objective or gradient")
    return loss, grad


def fit(data, config, state=None, callback=None):
    """Minimize the negative log posterior with Adam for ``config.iterations`` steps.

    On :class:`NumericalFailure` the lowest-loss state seen so far is
    returned with ``failed=True``.  For the energy alignment objective,
    which has no latent points, ``state.Z`` is set to the PCA embedding of
    the final aligned sequences.
    """
    t0 = time.perf_counter()
    state = initialize(data, config) if state is None else state.copy()
    opt = Adam(config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_eps)
    trace = []
    best_loss, best_state = np.inf, state.copy()
    failed, message = False, ""
    for t in range(config.iterations):
        try:
            loss, grad = _checked_step(state, data)
        except NumericalFailure as exc:
            failed = True
            where = "" if exc.index is None else f" (sequence {exc.index})"
            message = f"iteration {t}: {exc}{where}"
            log.warning("fit stopped early: %s", message)
            state = best_state
            break
        trace.append(loss)
        if loss < best_loss:
            best_loss, best_state = loss, state.copy()
        frozen = _frozen_at(config, t)
        active = {k: v for k, v in grad.items() if k not in frozen}
        params = {k: model.get_field(state, k) for k in active}
        opt.lr = learning_rate_at(config, t)
        for name, value in opt.step(params, active).items():
            model.set_field(state, name, value)
        if callback is not None:
            callback(t, loss, state)
    if state.alignment == model.ENERGY:
        # Z is not a parameter of the energy variants; report the PCA
        # embedding of the aligned sequences in its place.
        state.Z = _pca_latents(state.S, state.Z.shape[1], np.random.default_rng(config.seed))
    G = state.warps(data.X)
    return FitResult(state=state, G=G, loss_trace=np.asarray(trace), wall_time=time.perf_counter() - t0,
                     failed=failed, message=message)
