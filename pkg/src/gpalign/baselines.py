"""Comparison methods: DTW and the ablated variants of the joint model."""

from dataclasses import dataclass, replace

import numpy as np

from gpalign import _accel, model, optimizer, warps
from gpalign.errors import InvalidArgumentError


@dataclass(frozen=True)
class VariantSpec:
    warp_family: str
    alignment_objective: str

    def __post_init__(self):
        if self.warp_family not in (warps.NONPARAMETRIC, warps.BASIS):
            raise InvalidArgumentError(f"variants use NonparametricGP or BasisSimplex warps, "
                                       f"got {self.warp_family!r}")
        if self.alignment_objective not in model.ALIGNMENTS:
            raise InvalidArgumentError(f"unknown alignment objective {self.alignment_objective!r}")


VARIANTS = {
    "ours": VariantSpec(warps.NONPARAMETRIC, model.GPLVM),
    "energy+gplvm": VariantSpec(warps.NONPARAMETRIC, model.ENERGY),
    "gplvm+basis": VariantSpec(warps.BASIS, model.GPLVM),
    "energy+basis": VariantSpec(warps.BASIS, model.ENERGY),
}
METHODS = tuple(VARIANTS) + ("dtw",)


def fit_variant(data, spec, config):
    """Run :func:`optimizer.fit` with the warp family and alignment term swapped per ``spec``."""
    if isinstance(spec, str):
        try:
            spec = VARIANTS[spec]
        except KeyError:
            raise InvalidArgumentError(f"unknown variant {spec!r}") from None
    cfg = replace(config, warp_family=spec.warp_family, alignment=spec.alignment_objective)
    return optimizer.fit(data, cfg)


def energy_objective(S):
    """Squared Frobenius deviation of every sequence from the mean sequence."""
    return model.energy_objective(S)


def _frames(a):
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2 or a.shape[0] == 0:
        raise InvalidArgumentError("sequences must be non-empty (N,) or (N, D) arrays")
    return a


def dtw_align(a, b):
    """Optimal monotone alignment under squared Euclidean frame cost.

    Steps (1,0), (0,1), (1,1); ties prefer the diagonal.  Returns the path
    as an ``(L, 2)`` array of 0-based index pairs and the summed cost.
    """
    a, b = _frames(a), _frames(b)
    if a.shape[1] != b.shape[1]:
        raise InvalidArgumentError("sequences must have the same frame dimension")
    cost = np.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=-1)
    acc = _accel.dtw_accumulate(np.ascontiguousarray(cost))
    path = _accel.dtw_backtrack(acc)
    return path, float(acc[-1, -1])


def path_to_warp(path, na, nb):
    """Warp on ``[-1, 1]`` indexed by ``a``: mean matched ``b`` index per ``a`` index, rescaled."""
    sums = np.bincount(path[:, 0], weights=path[:, 1], minlength=na)
    counts = np.bincount(path[:, 0], minlength=na)
    return -1.0 + 2.0 * (sums / counts) / max(nb - 1, 1)


@dataclass
class DTWResult:
    G: np.ndarray
    S: np.ndarray
    reference: int
    costs: np.ndarray


def fit_dtw(data):
    """Align every sequence to the medoid sequence (lowest total DTW cost).

    ``G[j]`` maps sample ``n`` of sequence ``j`` to reference time, matching
    the convention ``Y_j[n] = f(G_j[n])`` of the joint model.  The aligned
    sequence averages the frames of ``Y_j`` matched to each reference index.
    """
    Y = data.Y
    J, N, D = Y.shape
    costs = np.zeros((J, J))
    for i in range(J):
        for k in range(i + 1, J):
            costs[i, k] = costs[k, i] = dtw_align(Y[i], Y[k])[1]
    ref = int(np.argmin(costs.sum(axis=1)))
    G = np.empty((J, N))
    S = np.empty_like(Y)
    for j in range(J):
        path, _ = dtw_align(Y[j], Y[ref])
        G[j] = path_to_warp(path, N, N)
        counts = np.bincount(path[:, 1], minlength=N)
        for d in range(D):
            S[j, :, d] = np.bincount(path[:, 1], weights=Y[j][path[:, 0], d], minlength=N) / counts
    return DTWResult(G=G, S=S, reference=ref, costs=costs)
