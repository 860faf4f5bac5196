"""Low-rank compression of the graph Laplacian.

The main entry point is :func:`nystrom_qr`, which builds an approximate
eigendecomposition of the symmetric normalised Laplacian from a Nystrom
extension without ever forming a square root of the (indefinite) landmark
kernel block. :func:`nystrom_classic` and :func:`truncated_svd_baseline` are
kept for benchmarking.
"""
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.linalg import lapack

from .exceptions import (DegenerateDegreeError, IllConditionedKernelError,
                         InputError)
from .graph import NORMALIZATIONS

RCOND_MIN = 1e-12


@dataclass
class LowRankLaplacian:
    """Rank-K factors with ``Delta_s ~ Us diag(Lambda) Us^T``.

    For the random walk Laplacian ``Delta ~ U1 diag(Lambda) U2^T`` with
    ``U1 = d_hat^{-1/2} * Us`` and ``U2 = d_hat^{1/2} * Us`` (row scaling).
    ``normalization`` says which of the two the propagators should use.
    """

    Lambda: np.ndarray
    Us: np.ndarray
    d_hat: np.ndarray
    normalization: str = "symmetric"
    landmarks: np.ndarray = None
    info: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.Lambda = np.asarray(self.Lambda, dtype=float)
        self.Us = np.asarray(self.Us, dtype=float)
        self.d_hat = np.asarray(self.d_hat, dtype=float)
        if self.normalization not in NORMALIZATIONS[:2]:
            raise InputError(
                "low-rank factors target 'random_walk' or 'symmetric', "
                f"got {self.normalization!r}")
        if self.Us.ndim != 2 or self.Us.shape[1] != self.Lambda.size:
            raise InputError("Us must be (n, K) with K = len(Lambda)")
        if self.d_hat.shape != (self.Us.shape[0],):
            raise InputError("d_hat must have one entry per vertex")
        if np.any(self.d_hat <= 0):
            raise DegenerateDegreeError("d_hat must be strictly positive")
        root = np.sqrt(self.d_hat)[:, None]
        self.U1 = self.Us / root
        self.U2 = self.Us * root

    @property
    def n(self):
        return self.Us.shape[0]

    @property
    def K(self):
        return self.Lambda.size

    def factors(self):
        """``(left, right)`` with ``Laplacian ~ left diag(Lambda) right^T``."""
        if self.normalization == "random_walk":
            return self.U1, self.U2
        return self.Us, self.Us

    def vertex_weights(self):
        if self.normalization == "random_walk":
            return self.d_hat
        return np.ones(self.n)

    def with_normalization(self, normalization):
        return LowRankLaplacian(self.Lambda, self.Us, self.d_hat,
                                normalization, self.landmarks, dict(self.info))

    def to_dense(self):
        left, right = self.factors()
        return (left * self.Lambda) @ right.T


@dataclass(frozen=True)
class InterpolationSets:
    X1: np.ndarray
    X2: np.ndarray
    seed: object = None

    @property
    def X(self):
        return np.sort(np.concatenate([self.X1, self.X2]))

    @property
    def K(self):
        return self.X1.size + self.X2.size


def sample_interpolation_sets(n, Z, K, seed=None):
    """Draw ``ceil(K/2)`` landmarks off ``Z`` and ``floor(K/2)`` inside ``Z``."""
    Z = np.unique(np.asarray(Z, dtype=int))
    if K < 2 or K > n:
        raise InputError(f"rank K must satisfy 2 <= K <= n={n}, got {K}")
    if Z.size and (Z[0] < 0 or Z[-1] >= n):
        raise InputError("Z contains out-of-range indices")
    outside = np.setdiff1d(np.arange(n), Z)
    k1, k2 = math.ceil(K / 2), K // 2
    if outside.size < k1:
        raise InputError(
            f"pool V\\Z has {outside.size} vertices, need {k1} landmarks")
    if Z.size < k2:
        raise InputError(f"pool Z has {Z.size} vertices, need {k2} landmarks")
    rng = np.random.default_rng(seed)
    X1 = np.sort(rng.choice(outside, size=k1, replace=False))
    X2 = np.sort(rng.choice(Z, size=k2, replace=False))
    return InterpolationSets(X1, X2, seed)


def _factor_landmark_block(W_XX):
    # singularity is reported through the condition estimate below
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", linalg.LinAlgWarning)
        lu = linalg.lu_factor(W_XX, check_finite=True)
    anorm = np.linalg.norm(W_XX, 1)
    rcond, info = lapack.dgecon(lu[0], anorm, norm="1")
    if info != 0 or not rcond >= RCOND_MIN:
        raise IllConditionedKernelError(
            f"landmark kernel block is ill-conditioned (rcond={rcond:.2e}); "
            "try a larger sigma or a different rank")
    return lu


def _estimate_degrees(W_VX, lu):
    d_hat = W_VX @ linalg.lu_solve(lu, W_VX.T @ np.ones(W_VX.shape[0]))
    if np.any(d_hat <= 0):
        bad = int(np.sum(d_hat <= 0))
        raise DegenerateDegreeError(
            f"{bad} estimated degrees are not positive; increase K or sigma")
    return d_hat


def nystrom_qr_parts(weight, X):
    """All intermediate quantities of the QR-based Nystrom factorisation.

    Returns a dict with ``Lambda, Us, d_hat, Q, R, Phi, lu`` and the landmark
    degree helper ``c = W_XX^{-1} W_VX^T 1`` used for out-of-sample rows.
    """
    n = weight.n
    X = np.asarray(X)
    W_XX = weight(X, X)
    W_VX = weight(np.arange(n), X)
    lu = _factor_landmark_block(W_XX)
    c = linalg.lu_solve(lu, W_VX.T @ np.ones(n))
    d_hat = W_VX @ c
    if np.any(d_hat <= 0):
        bad = int(np.sum(d_hat <= 0))
        raise DegenerateDegreeError(
            f"{bad} estimated degrees are not positive; increase K or sigma")
    Wt_VX = W_VX / np.sqrt(d_hat)[:, None]
    Q, R = np.linalg.qr(Wt_VX, mode="reduced")
    S = R @ linalg.lu_solve(lu, R.T)
    S = (S + S.T) / 2
    sigma, Phi = np.linalg.eigh(S)
    order = np.argsort(sigma)[::-1]
    sigma, Phi = sigma[order], Phi[:, order]
    return dict(Lambda=1.0 - sigma, Us=Q @ Phi, d_hat=d_hat, Q=Q, R=R,
                Phi=Phi, lu=lu, c=c)


def nystrom_qr(weight, Z, K, seed=None, normalization="symmetric"):
    """Approximate eigendecomposition of the Laplacian from a Nystrom extension.

    Parameters
    ----------
    weight : callable
        Block accessor ``weight(rows, cols) -> ndarray`` with attribute ``n``.
    Z : array of int
        Labelled vertices; half of the landmarks are drawn from them.
    K : int
        Target rank.
    seed : int or SeedSequence, optional
    normalization : {"symmetric", "random_walk"}
        Which Laplacian the returned factors are set up to propagate.

    Cost is O(K^2 n + K^3) time and O(K n) memory.
    """
    sets = sample_interpolation_sets(weight.n, Z, K, seed)
    parts = nystrom_qr_parts(weight, sets.X)
    return LowRankLaplacian(parts["Lambda"], parts["Us"], parts["d_hat"],
                            normalization, landmarks=sets.X)


def nystrom_classic(weight, Z, K, seed=None, normalization="symmetric"):
    """One-shot Nystrom with orthogonalisation through ``W_XX^{-1/2}``.

    The landmark block has zero trace and is therefore indefinite, so its
    inverse square root is generally complex. Imaginary parts are dropped
    and counted in ``info["complex_parts"]``.
    """
    n = weight.n
    sets = sample_interpolation_sets(n, Z, K, seed)
    X = sets.X
    Y = np.setdiff1d(np.arange(n), X)
    A = weight(X, X)
    B = weight(X, Y)
    lu = _factor_landmark_block(A)
    W_VX = np.vstack([A, B.T])
    d_hat = _estimate_degrees(W_VX, lu)
    sX = 1.0 / np.sqrt(d_hat[:K])
    sY = 1.0 / np.sqrt(d_hat[K:])
    A = sX[:, None] * A * sX[None, :]
    B = sX[:, None] * B * sY[None, :]

    complex_parts = 0
    # principal square root of A^{-1} through the symmetric eigensolve;
    # negative eigenvalues give purely imaginary parts, which are dropped
    a, P = np.linalg.eigh((A + A.T) / 2)
    if np.any(a < 0):
        complex_parts += 1
    Asi = (P * np.where(a > 0, 1.0 / np.sqrt(np.abs(a)), 0.0)) @ P.T
    Qm = A + Asi @ (B @ B.T) @ Asi
    Qm = (Qm + Qm.T) / 2
    L, U = np.linalg.eigh(Qm)
    order = np.argsort(L)[::-1]
    L, U = L[order], U[:, order]
    if np.any(L <= 0):
        complex_parts += 1
    scale = 1.0 / np.sqrt(np.maximum(np.abs(L), np.finfo(float).tiny))
    V = np.vstack([A, B.T]) @ Asi @ (U * scale)
    if complex_parts:
        warnings.warn(
            f"classic Nystrom discarded complex components "
            f"({complex_parts} occurrence(s))", RuntimeWarning, stacklevel=2)

    perm = np.concatenate([X, Y])
    Us = np.empty_like(V)
    Us[perm] = V
    d_full = np.empty(n)
    d_full[perm] = d_hat
    return LowRankLaplacian(1.0 - L, Us, d_full, normalization, landmarks=X,
                            info={"complex_parts": complex_parts})


def truncated_svd_baseline(Delta_s, K, degree=None, eig=None):
    """Best rank-K approximation of a dense symmetric Laplacian.

    The Laplacian is symmetric, so its singular triplets come from a
    symmetric eigensolve ordered by eigenvalue magnitude. A precomputed
    ``eig = (values, vectors)`` skips the eigensolve.
    """
    Delta_s = np.asarray(Delta_s, dtype=float)
    n = Delta_s.shape[0]
    if not 1 <= K <= n:
        raise InputError(f"rank K must satisfy 1 <= K <= n={n}, got {K}")
    if eig is None:
        eig = np.linalg.eigh((Delta_s + Delta_s.T) / 2)
    lam, vecs = eig
    order = np.argsort(np.abs(lam), kind="stable")[::-1][:K]
    d = np.ones(n) if degree is None else degree
    return LowRankLaplacian(lam[order], vecs[:, order], d, "symmetric")


def relative_frobenius_error(approx, Delta_s, norm=None, block=512):
    """``||Us Lambda Us^T - Delta_s||_F / ||Delta_s||_F``.

    Both matrices are symmetric, so the difference is formed block row by
    block row over the upper triangle only, with off-diagonal blocks counted
    twice. This needs about ``n^2 K`` flops and ``block * n`` memory and
    stays accurate when the error is tiny.
    """
    Delta_s = np.asarray(Delta_s)
    norm = np.linalg.norm(Delta_s) if norm is None else norm
    U, lam = approx.Us, approx.Lambda
    UL = U * lam
    total = 0.0
    for start in range(0, approx.n, block):
        stop = min(start + block, approx.n)
        diff = UL[start:stop] @ U[start:].T - Delta_s[start:stop, start:]
        total += float(np.sum(diff[:, :stop - start] ** 2))
        total += 2.0 * float(np.sum(diff[:, stop - start:] ** 2))
    return math.sqrt(total) / norm
