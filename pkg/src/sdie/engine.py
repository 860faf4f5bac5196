"""Semi-discrete implicit Euler (SDIE) iteration for the forced Allen-Cahn flow.

One step maps ``u_n`` to ``u_{n+1}`` by diffusing with ``S_tau`` and then
applying a piecewise-linear relaxation of thresholding at 1/2. With
``lam = tau / eps == 1`` the relaxation becomes hard thresholding and the
iteration is the MBO scheme.

Propagators are duck-typed: anything with ``tau``, ``b``, ``weights``,
``apply(u)`` and ``expm_apply(u)`` works (see ``expsolver.ForcedDiffusion``
and ``oracle.DenseOperator.propagator``).
"""
import csv
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.exceptions import ConvergenceWarning

from .exceptions import InputError


@dataclass(frozen=True)
class SdieParams:
    """``eps``, ``tau`` (with ``0 < tau <= eps``), stopping threshold and cap."""

    eps: float
    tau: float
    delta: float = 1e-10
    max_iter: int = 1000

    def __post_init__(self):
        if not self.eps > 0:
            raise InputError(f"eps must be positive, got {self.eps}")
        if not 0 < self.tau <= self.eps * (1 + 1e-12):
            raise InputError(
                f"tau must satisfy 0 < tau <= eps, got tau={self.tau}, "
                f"eps={self.eps}")
        if not self.delta > 0:
            raise InputError("delta must be positive")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise InputError("max_iter must be a positive integer")

    @property
    def lam(self):
        return min(self.tau / self.eps, 1.0)

    @property
    def is_mbo(self):
        return self.lam == 1.0


@dataclass
class LabelState:
    u: np.ndarray
    beta: np.ndarray = None
    iter: int = 0
    H: float = None


@dataclass
class SdieResult:
    state: LabelState
    converged: bool
    trace: list = field(default_factory=list)

    @property
    def u(self):
        return self.state.u

    @property
    def n_iter(self):
        return self.state.iter


def sdie_update(v, lam):
    """Relaxed thresholding for ``0 < lam <= 1``; returns ``(u, beta)``.

    ``u`` is 0 below ``lam/2``, 1 from ``1 - lam/2`` on and linear in between,
    and ``beta = ((1 - lam) u - v + lam/2) / lam`` is the matching
    subgradient of the obstacle constraint. At ``lam = 1`` the linear piece
    is empty and the update coincides with :func:`mbo_update`.
    """
    if not 0 < lam <= 1:
        raise InputError(f"sdie_update needs 0 < lam <= 1, got {lam}")
    v = np.asarray(v, dtype=float)
    lo, hi = v < lam / 2, v >= 1.0 - lam / 2
    u = np.empty_like(v)
    mid = ~(lo | hi)
    u[mid] = 0.5 + (v[mid] - 0.5) / (1.0 - lam) if lam < 1 else 0.0
    u[lo] = 0.0
    u[hi] = 1.0
    beta = ((1.0 - lam) * u - v + lam / 2) / lam
    beta[mid] = 0.0
    return u, beta


def mbo_update(v):
    """Hard thresholding at 1/2 (ties go to 1); ``beta = 1/2 - v``."""
    v = np.asarray(v, dtype=float)
    return (v >= 0.5).astype(float), 0.5 - v


def update_for(lam):
    if lam == 1.0:
        return lambda v: mbo_update(v)
    return lambda v: sdie_update(v, lam)


def lyapunov_H(u, lam, propagator):
    """``J(u) + (lam - 1) <u, 1 - u>`` with ``J(u) = <u, 1 - 2b - e^{-tau A} u>``.

    Inner products are weighted by ``propagator.weights``.
    """
    u = np.asarray(u, dtype=float)
    w = propagator.weights
    J = np.sum(w * u * (1.0 - 2.0 * propagator.b - propagator.expm_apply(u)))
    return float(J + (lam - 1.0) * np.sum(w * u * (1.0 - u)))


def iterate_sdie(u0, lam, propagator, n_steps, update=None):
    """Fixed number of steps; returns arrays ``us`` (n_steps+1, n) and
    ``betas`` (n_steps, n) where ``betas[k]`` goes with ``us[k+1]``."""
    update = update or update_for(lam)
    us = [np.asarray(u0, dtype=float)]
    betas = []
    for _ in range(n_steps):
        u, beta = update(propagator.apply(us[-1]))
        us.append(u)
        betas.append(beta)
    return np.array(us), np.array(betas).reshape(n_steps, us[0].size)


def _validate_u0(u0):
    u0 = np.asarray(u0, dtype=float)
    if u0.ndim != 1:
        raise InputError("u0 must be a vector")
    if np.any(~np.isfinite(u0)) or np.any(u0 < 0) or np.any(u0 > 1):
        raise InputError("u0 must take values in [0, 1]")
    return u0


def run_sdie(u0, params, propagator, trace=False, update=None):
    """Iterate until ``||u_n - u_{n-1}||^2 / ||u_n||^2 < delta`` (plain 2-norm).

    At least one update is always performed. If ``max_iter`` is reached the
    result carries ``converged=False`` and a ``ConvergenceWarning`` is issued.
    With ``trace=True`` each iteration records ``iter, H, step_norm, seconds``
    (``H`` costs one extra propagation per step).
    """
    u = _validate_u0(u0)
    if not np.isclose(propagator.tau, params.tau, rtol=1e-12, atol=0):
        raise InputError("propagator and parameters disagree on tau")
    lam = params.lam
    update = update or update_for(lam)
    records = []
    start = time.perf_counter()
    if trace:
        records.append(dict(iter=0, H=lyapunov_H(u, lam, propagator),
                            step_norm=float("nan"), seconds=0.0))
    beta = None
    converged = False
    n = 0
    while n < params.max_iter:
        u_new, beta = update(propagator.apply(u))
        n += 1
        diff = float(np.sum((u_new - u) ** 2))
        size = float(np.sum(u_new ** 2))
        u = u_new
        if trace:
            records.append(dict(iter=n, H=lyapunov_H(u, lam, propagator),
                                step_norm=float(np.sqrt(diff)),
                                seconds=time.perf_counter() - start))
        if diff == 0.0 or (size > 0 and diff / size < params.delta):
            converged = True
            break
    if not converged:
        warnings.warn(f"SDIE did not converge in {params.max_iter} iterations",
                      ConvergenceWarning, stacklevel=2)
    H = records[-1]["H"] if trace else None
    return SdieResult(LabelState(u, beta, n, H), converged, records)


def write_trace_csv(records, path):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, ["iter", "H", "step_norm", "seconds"])
        writer.writeheader()
        for row in records:
            writer.writerow({k: row[k] for k in writer.fieldnames})


def save_labels(u, path):
    """Write ``u`` as a flat little-endian float64 array."""
    np.asarray(u, dtype="<f8").tofile(path)


def load_labels(path):
    return np.fromfile(path, dtype="<f8")
