"""Synthetic datasets with known warps, and the evaluation metrics."""

from collections import Counter
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.ndimage import uniform_filter1d

from gpalign import kernels
from gpalign.errors import InvalidArgumentError
from gpalign.model import Dataset
from gpalign.warps import warp_from_aux

DENSE_GRID = 401


@dataclass
class GenConfig:
    """Generator settings.

    Each group is a ``latent_dim``-dimensional GP curve (SE kernel with
    ``curve_lengthscale``, unit variance) projected to ``D`` dimensions.
    """

    J: int = 5
    N: int = 50
    D: int = 1
    groups: int = 1
    warp_roughness: float = 1.0
    noise_sd: float = 0.05
    seed: int = 0
    latent_dim: int = 2
    curve_lengthscale: float = 0.3

    def __post_init__(self):
        if not 1 <= self.groups <= self.J:
            raise InvalidArgumentError(f"need 1 <= groups <= J, got groups={self.groups}, J={self.J}")
        if self.N < 4:
            raise InvalidArgumentError("N must be at least 4")
        if self.D < 1:
            raise InvalidArgumentError("D must be at least 1")
        if self.warp_roughness < 0 or self.noise_sd < 0:
            raise InvalidArgumentError("warp_roughness and noise_sd must be non-negative")


def _sample_curves(rng, n_curves, dim, lengthscale):
    """GP sample paths on a dense grid, returned as cubic-spline interpolants."""
    grid = np.linspace(-1.0, 1.0, DENSE_GRID)
    K = kernels.gram(kernels.KernelSpec(kernels.SE, 1.0, lengthscale), grid)
    lam, V = np.linalg.eigh(K)
    root = V * np.sqrt(np.clip(lam, 0.0, None))
    curves = []
    for _ in range(n_curves):
        paths = root @ rng.standard_normal((DENSE_GRID, dim))
        curves.append(CubicSpline(grid, paths, axis=0))
    return curves


def smooth_warp_aux(U, width=5):
    """Moving average along each row (edge values repeated)."""
    return uniform_filter1d(np.asarray(U, dtype=float), size=width, axis=-1, mode="nearest")


def generate(config):
    """Draw a :class:`Dataset` with ``true_warps`` and ``groups`` filled in."""
    rng = np.random.default_rng(config.seed)
    X = np.linspace(-1.0, 1.0, config.N)
    curves = _sample_curves(rng, config.groups, config.latent_dim, config.curve_lengthscale)
    proj = []
    for _ in range(config.groups):
        P = rng.standard_normal((config.D, config.latent_dim))
        proj.append(P / np.linalg.norm(P, axis=0, keepdims=True))
    groups = np.arange(config.J) % config.groups
    U = config.warp_roughness * rng.standard_normal((config.J, config.N))
    G = warp_from_aux(smooth_warp_aux(U))
    Y = np.empty((config.J, config.N, config.D))
    for j in range(config.J):
        g = groups[j]
        Y[j] = curves[g](G[j]) @ proj[g].T
    Y += config.noise_sd * rng.standard_normal(Y.shape)
    return Dataset(X=X, Y=Y, true_warps=G, groups=groups)


def warping_error(G_est, G_true):
    """Mean squared difference between estimated and true warps on ``[-1, 1]``."""
    G_est = np.asarray(G_est, dtype=float)
    G_true = np.asarray(G_true, dtype=float)
    if G_est.shape != G_true.shape:
        raise InvalidArgumentError(f"warp shapes differ: {G_est.shape} vs {G_true.shape}")
    return float(np.mean((G_est - G_true) ** 2))


def alignment_error(S, groups):
    """Mean, over unordered within-group pairs, of the per-entry squared difference."""
    S = np.asarray(S, dtype=float)
    S = S.reshape(S.shape[0], -1)
    groups = np.asarray(groups)
    if groups.shape != (S.shape[0],):
        raise InvalidArgumentError("one group label per sequence required")
    errs = [np.mean((S[a] - S[b]) ** 2)
            for a, b in combinations(range(S.shape[0]), 2) if groups[a] == groups[b]]
    if not errs:
        raise InvalidArgumentError("no group has two or more members")
    return float(np.mean(errs))


def purity(assign, groups):
    """Fraction of points whose cluster's majority label is their own label."""
    assign = np.asarray(assign)
    groups = np.asarray(groups)
    hits = 0
    for c in np.unique(assign):
        members = groups[assign == c]
        hits += Counter(members.tolist()).most_common(1)[0][1]
    return hits / len(groups)


def cluster_purity(Z, groups, k, seed=0):
    """k-means (10 seeded restarts, best inertia) on ``Z``, scored by :func:`purity`."""
    from sklearn.cluster import KMeans

    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    if k < 1 or k > Z.shape[0]:
        raise InvalidArgumentError(f"need 1 <= k <= J, got k={k}, J={Z.shape[0]}")
    if k == 1:
        return purity(np.zeros(Z.shape[0], dtype=int), groups)
    km = KMeans(n_clusters=k, n_init=10, random_state=seed).fit(Z)
    return purity(km.labels_, groups)
