"""Weighted graphs, vertex inner products, Laplacians and the fidelity
Ginzburg-Landau energy.

Weights are exposed through block accessors ``weight(rows, cols)`` so that
large graphs never need the full ``n x n`` matrix; the dense helpers below
materialise it and are meant for small problems and reference checks.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import cdist

from .exceptions import DegenerateGraphError, InputError

NORMALIZATIONS = ("random_walk", "symmetric", "combinatorial")


@dataclass(frozen=True)
class GaussianSimilarity:
    """Gaussian similarity ``exp(-||z - w||^2 / (ell * sigma^2))``."""

    sigma: float
    ell: int

    def __post_init__(self):
        if not self.sigma > 0:
            raise InputError(f"sigma must be positive, got {self.sigma}")
        if int(self.ell) < 1:
            raise InputError(f"ell must be >= 1, got {self.ell}")


def gaussian_similarity(z, w, sim):
    z = np.asarray(z, dtype=float).ravel()
    w = np.asarray(w, dtype=float).ravel()
    if z.shape != w.shape or z.size != sim.ell:
        raise InputError(
            f"feature length mismatch: {z.size}, {w.size}, ell={sim.ell}")
    d2 = float(np.sum((z - w) ** 2))
    return float(np.exp(-d2 / (sim.ell * sim.sigma ** 2)))


class DenseWeights:
    """Block accessor over an explicit symmetric weight matrix."""

    def __init__(self, W):
        W = np.asarray(W, dtype=float)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise InputError("weight matrix must be square")
        if np.any(W < 0) or not np.allclose(W, W.T, rtol=0, atol=1e-14):
            raise InputError("weight matrix must be symmetric and nonnegative")
        if np.any(np.diag(W) != 0):
            raise InputError("weight matrix must have a zero diagonal")
        self.W = W

    @property
    def n(self):
        return self.W.shape[0]

    def __call__(self, rows, cols):
        return self.W[np.ix_(np.asarray(rows), np.asarray(cols))]


class GaussianWeights:
    """Block accessor computing Gaussian similarities of feature rows on demand.

    Self-pairs are assigned weight 0 (no self-loops), even though the
    similarity of a vector with itself is 1.
    """

    def __init__(self, features, sim=None, sigma=None):
        features = np.asarray(features, dtype=float)
        if features.ndim != 2:
            raise InputError("features must be a 2-d array (n, ell)")
        if sim is None:
            sim = GaussianSimilarity(sigma=sigma, ell=features.shape[1])
        elif sim.ell != features.shape[1]:
            raise InputError(
                f"similarity ell={sim.ell} but features have "
                f"{features.shape[1]} columns")
        self.features = features
        self.sim = sim

    @property
    def n(self):
        return self.features.shape[0]

    def __call__(self, rows, cols):
        rows = np.asarray(rows)
        cols = np.asarray(cols)
        d2 = cdist(self.features[rows], self.features[cols], "sqeuclidean")
        block = np.exp(-d2 / (self.sim.ell * self.sim.sigma ** 2))
        block[rows[:, None] == cols[None, :]] = 0.0
        return block


@dataclass
class Graph:
    """A finite, simple, undirected weighted graph.

    ``normalization`` selects the Laplacian and with it the exponent ``r``
    of the vertex inner product: ``random_walk`` uses ``D^{-1}(D - W)`` and
    ``r = 1``; ``combinatorial`` uses ``D - W`` and ``r = 0``; ``symmetric``
    uses ``I - D^{-1/2} W D^{-1/2}`` paired with the plain Euclidean product.
    ``degree`` may be supplied externally (e.g. a Nystrom estimate).
    """

    weight: object
    normalization: str = "random_walk"
    degree: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.normalization not in NORMALIZATIONS:
            raise InputError(
                f"normalization must be one of {NORMALIZATIONS}, "
                f"got {self.normalization!r}")
        if self.degree is not None:
            self.degree = np.asarray(self.degree, dtype=float)
            if self.degree.shape != (self.n,):
                raise InputError("degree vector has the wrong length")

    @classmethod
    def from_dense(cls, W, normalization="random_walk", check=True):
        g = cls(DenseWeights(W), normalization=normalization)
        if check:
            check_connected(g.dense_weights())
        return g

    @property
    def n(self):
        return self.weight.n

    @property
    def r(self):
        return 1 if self.normalization == "random_walk" else 0

    def dense_weights(self):
        idx = np.arange(self.n)
        return self.weight(idx, idx)

    def degrees(self):
        if self.degree is None:
            self.degree = self.dense_weights().sum(axis=1)
        return self.degree

    def vertex_weights(self):
        """The vector ``d**r`` weighting the vertex inner product."""
        if self.r == 0:
            return np.ones(self.n)
        return self.degrees() ** self.r


def check_connected(W):
    W = np.asarray(W)
    ncomp, _ = connected_components(W > 0, directed=False)
    if ncomp != 1:
        raise DegenerateGraphError(f"graph has {ncomp} connected components")


def inner_product_V(u, v, g):
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != (g.n,) or v.shape != (g.n,):
        raise InputError(f"vectors must have length {g.n}")
    return float(np.sum(u * v * g.vertex_weights()))


def norm_V(u, g):
    return np.sqrt(inner_product_V(u, u, g))


def dense_laplacian(g, normalization=None):
    """Dense Laplacian of ``g`` in the requested (default: the graph's) form."""
    normalization = normalization or g.normalization
    W = g.dense_weights()
    d = W.sum(axis=1)
    if np.any(d <= 0):
        raise DegenerateGraphError(
            f"vertices with zero degree: {np.flatnonzero(d <= 0).tolist()}")
    if normalization == "combinatorial":
        return np.diag(d) - W
    if normalization == "random_walk":
        return np.eye(len(d)) - W / d[:, None]
    if normalization == "symmetric":
        s = 1.0 / np.sqrt(d)
        return np.eye(len(d)) - s[:, None] * W * s[None, :]
    raise InputError(f"unknown normalization {normalization!r}")


def dirichlet_energy(u, g):
    """``||grad u||_E^2 = 1/2 sum_ij w_ij (u_j - u_i)^2`` computed edgewise."""
    W = g.dense_weights()
    diff = u[None, :] - u[:, None]
    return 0.5 * float(np.sum(W * diff ** 2))


@dataclass(frozen=True)
class FidelityData:
    """Fidelity strengths ``mu`` and reference labels ``f_tilde``.

    ``f_tilde`` must vanish off the support of ``mu``; ``f = mu * f_tilde``.
    """

    mu: np.ndarray
    f_tilde: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        ft = np.asarray(self.f_tilde, dtype=float)
        if mu.ndim != 1 or ft.shape != mu.shape:
            raise InputError("mu and f_tilde must be vectors of equal length")
        if np.any(mu < 0) or not np.any(mu > 0):
            raise InputError("mu must be nonnegative and not identically zero")
        if np.any(ft < 0) or np.any(ft > 1):
            raise InputError("f_tilde must lie in [0, 1]")
        if np.any(ft[mu == 0] != 0):
            raise InputError("f_tilde must vanish outside supp(mu)")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "f_tilde", ft)

    @classmethod
    def from_labels(cls, n, support, labels, mu_hat):
        """``mu = mu_hat`` on ``support`` and 0 elsewhere; labels on support."""
        if not mu_hat > 0:
            raise InputError(f"mu_hat must be positive, got {mu_hat}")
        support = np.asarray(support)
        mu = np.zeros(n)
        mu[support] = mu_hat
        ft = np.zeros(n)
        ft[support] = labels
        return cls(mu, ft)

    @property
    def n(self):
        return self.mu.size

    @property
    def Z(self):
        return np.flatnonzero(self.mu > 0)

    @property
    def f(self):
        return self.mu * self.f_tilde


def ginzburg_landau_fidelity(u, g, fid, eps, laplacian=None):
    """Fidelity-forced Ginzburg-Landau energy with the double-obstacle well.

    Returns ``inf`` when ``u`` leaves ``[0, 1]``. A precomputed dense
    Laplacian may be passed to avoid rebuilding it.
    """
    u = np.asarray(u, dtype=float)
    if np.any(u < 0) or np.any(u > 1):
        return np.inf
    L = dense_laplacian(g) if laplacian is None else laplacian
    dr = g.vertex_weights()
    dirichlet = 0.5 * float(np.sum(u * (L @ u) * dr))
    well = float(np.sum(dr * 0.5 * u * (1 - u))) / eps
    fidelity = 0.5 * float(np.sum(dr * fid.mu * (u - fid.f_tilde) ** 2))
    return dirichlet + well + fidelity
