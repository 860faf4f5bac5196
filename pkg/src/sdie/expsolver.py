"""Fidelity-forced diffusion ``S_tau u = exp(-tau A) u + b`` on low-rank factors.

``A = Delta + diag(mu)`` where the Laplacian is only known through the rank-K
factors ``left diag(Lambda) right^T`` of a :class:`LowRankLaplacian`.
Three propagators are provided: the Strang splitting, its fourth-order
Yoshida composition, and a semi-implicit Euler iteration. The first two
approximate ``exp(-tau A) u`` only and need ``b`` added separately; the
Euler iteration integrates the forced equation and so already contains the
forcing. :class:`ForcedDiffusion` hides that difference.
"""
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .exceptions import InputError, MethodFailureError, SingularStepError

SCHEMES = ("strang", "yoshida", "euler")
B_METHODS = ("trapezium", "midpoint", "simpson", "composite_simpson",
             "ode_euler", "woodbury")

_CBRT2 = 2.0 ** (1.0 / 3.0)
YOSHIDA_ALPHA0 = -_CBRT2 / (2.0 - _CBRT2)
YOSHIDA_ALPHA1 = 1.0 / (2.0 - _CBRT2)

PINV_TOL = 1e-12


@dataclass(frozen=True)
class PropagatorConfig:
    """Time step and discretisation choices for ``S_tau``.

    ``b_scheme`` is the exponential step used inside the quadrature and
    Woodbury b-methods (``strang`` or ``yoshida``); by default it follows
    ``scheme`` and falls back to ``strang`` when ``scheme`` is ``euler``.
    ``m`` is the number of double intervals of composite Simpson.
    """

    tau: float
    scheme: str = "strang"
    k: int = 1
    k_b: int = 1
    b_method: str = "ode_euler"
    m: int = 1
    b_scheme: str = None

    def __post_init__(self):
        if not self.tau > 0 or not math.isfinite(self.tau):
            raise InputError(f"tau must be positive, got {self.tau}")
        if self.scheme not in SCHEMES:
            raise InputError(f"scheme must be one of {SCHEMES}")
        if self.b_method not in B_METHODS:
            raise InputError(f"b_method must be one of {B_METHODS}")
        for name in ("k", "k_b", "m"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise InputError(f"{name} must be a positive integer")
        if self.b_scheme not in (None, "strang", "yoshida"):
            raise InputError("b_scheme must be 'strang' or 'yoshida'")

    @property
    def dt(self):
        return self.tau / self.k

    @property
    def exp_scheme(self):
        if self.b_scheme is not None:
            return self.b_scheme
        return "strang" if self.scheme == "euler" else self.scheme


@dataclass(frozen=True)
class StrangCoefficients:
    a1: np.ndarray
    a2: np.ndarray
    a3: np.ndarray

    @classmethod
    def build(cls, dt, Lambda, mu):
        mu = np.asarray(mu, dtype=float)
        return cls(np.exp(-dt * mu), np.expm1(-dt * np.asarray(Lambda)),
                   np.exp(-0.5 * dt * mu))


def _check_shapes(v, lap, n_mu):
    if v.shape[0] != lap.n or n_mu != lap.n:
        raise InputError(
            f"dimension mismatch: vector {v.shape[0]}, mu {n_mu}, "
            f"factors {lap.n}")


def strang_step(v, coeffs, lap):
    """``a1*v + a3*(U1 (a2 * (U2^T (a3*v))))`` in O(nK)."""
    v = np.asarray(v, dtype=float)
    _check_shapes(v, lap, coeffs.a1.size)
    if coeffs.a2.size != lap.K:
        raise InputError("a2 must have one entry per retained eigenvalue")
    left, right = lap.factors()
    w = coeffs.a3 * v
    return coeffs.a1 * v + coeffs.a3 * (left @ (coeffs.a2 * (right.T @ w)))


def _yoshida_coeffs(dt, lap, mu):
    return (StrangCoefficients.build(YOSHIDA_ALPHA1 * dt, lap.Lambda, mu),
            StrangCoefficients.build(YOSHIDA_ALPHA0 * dt, lap.Lambda, mu))


def _yoshida_apply(v, pair, lap):
    c1, c0 = pair
    return strang_step(strang_step(strang_step(v, c1, lap), c0, lap), c1, lap)


def yoshida_step(v, dt, lap, mu):
    """Three Strang substeps of lengths ``a1*dt, a0*dt, a1*dt`` (``a0 < 0``)."""
    return _yoshida_apply(v, _yoshida_coeffs(dt, lap, mu), lap)


def _euler_factors(dt, lap, fid):
    denom = 1.0 + dt * lap.Lambda
    if np.any(denom == 0):
        raise SingularStepError(
            "1 + dt*Lambda vanishes; change the step or the rank")
    if dt * np.max(fid.mu) >= 1:
        warnings.warn("dt * max(mu) >= 1: the Euler step loses positivity",
                      RuntimeWarning, stacklevel=3)
    return 1.0 / denom, 1.0 - dt * fid.mu, dt * fid.f


def euler_step(v, dt, lap, fid):
    """Semi-implicit Euler step for ``du/dt = -Delta u - M(u - f_tilde)``.

    Returns ``U1 (a * (U2^T ((1 - dt mu) v + dt f)))`` with
    ``a = 1 / (1 + dt Lambda)``; the output lies in the span of ``U1``.
    """
    v = np.asarray(v, dtype=float)
    _check_shapes(v, lap, fid.n)
    return _euler_apply(v, _euler_factors(dt, lap, fid), lap)


def _euler_apply(v, factors, lap):
    a, damp, push = factors
    left, right = lap.factors()
    return left @ (a * (right.T @ (damp * v + push)))


class _Stepper:
    """Precomputed coefficients for repeated steps of one length."""

    def __init__(self, scheme, dt, lap, fid):
        self.scheme, self.lap = scheme, lap
        if scheme == "strang":
            self.coeffs = StrangCoefficients.build(dt, lap.Lambda, fid.mu)
        elif scheme == "yoshida":
            self.coeffs = _yoshida_coeffs(dt, lap, fid.mu)
        else:
            self.coeffs = _euler_factors(dt, lap, fid)

    def __call__(self, v):
        if self.scheme == "strang":
            return strang_step(v, self.coeffs, self.lap)
        if self.scheme == "yoshida":
            return _yoshida_apply(v, self.coeffs, self.lap)
        return _euler_apply(v, self.coeffs, self.lap)

    def repeat(self, v, times):
        for _ in range(times):
            v = self(v)
        return v


def _check_inputs(u, lap, fid):
    u = np.asarray(u, dtype=float)
    if u.ndim != 1:
        raise InputError("state must be a vector")
    _check_shapes(u, lap, fid.n)
    return u


def propagate(u, cfg, lap, fid):
    """``k`` steps of ``cfg.scheme`` with ``dt = tau / k``.

    For ``strang`` and ``yoshida`` this approximates ``exp(-tau A) u``. For
    ``euler`` the forcing is built into the step, so the result approximates
    the full ``S_tau u``.
    """
    u = _check_inputs(u, lap, fid)
    return _Stepper(cfg.scheme, cfg.dt, lap, fid).repeat(u, cfg.k)


def _expm(v, t, steps, scheme, lap, fid):
    return _Stepper(scheme, t / steps, lap, fid).repeat(v, steps)


def compute_b(cfg, lap, fid):
    """Approximate ``b = int_0^tau exp(-t A) f dt`` by ``cfg.b_method``."""
    f = fid.f
    _check_shapes(f, lap, fid.n)
    tau, kb, scheme = cfg.tau, cfg.k_b, cfg.exp_scheme
    method = cfg.b_method
    if method == "trapezium":
        return 0.5 * tau * (f + _expm(f, tau, kb, scheme, lap, fid))
    if method == "midpoint":
        return tau * _expm(f, tau / 2, kb, scheme, lap, fid)
    if method == "simpson":
        half = _expm(f, tau / 2, kb, scheme, lap, fid)
        full = _expm(half, tau / 2, kb, scheme, lap, fid)
        return tau / 6 * (f + 4 * half + full)
    if method == "composite_simpson":
        h = tau / (2 * cfg.m)
        step = _Stepper(scheme, h, lap, fid)
        total = f.copy()
        v = f
        for r in range(1, 2 * cfg.m + 1):
            v = step(v)
            weight = 1 if r == 2 * cfg.m else (4 if r % 2 else 2)
            total += weight * v
        return h / 3 * total
    if method == "ode_euler":
        step = _Stepper("euler", tau / kb, lap, fid)
        return step.repeat(np.zeros_like(f), kb)
    return _woodbury_b(f - _expm(f, tau, kb, scheme, lap, fid), lap, fid)


def _woodbury_b(g, lap, fid):
    """Solve ``(I + M - left Sigma right^T) b = g`` by the Woodbury identity.

    Columns with ``|Sigma| <= PINV_TOL`` do not contribute to the low-rank
    update and are dropped before forming the K x K system.
    """
    y = 1.0 / (1.0 + fid.mu)
    sigma = 1.0 - lap.Lambda
    keep = np.abs(sigma) > PINV_TOL
    left, right = lap.factors()
    L, R = left[:, keep], right[:, keep]
    if not np.any(keep):
        return y * g
    system = -np.diag(1.0 / sigma[keep]) + R.T @ (y[:, None] * L)
    rhs = R.T @ (y * g)
    if np.linalg.cond(system) > 1e13:
        raise MethodFailureError(
            "Woodbury system is singular; choose another b_method")
    h = np.linalg.solve(system, rhs)
    return y * (g - L @ h)


def apply_S_tau(u, cfg, lap, fid, cached_b=None):
    """``S_tau u``: propagated state plus ``b`` (or the full Euler iteration)."""
    if cfg.scheme == "euler":
        return propagate(u, cfg, lap, fid)
    b = compute_b(cfg, lap, fid) if cached_b is None else cached_b
    return propagate(u, cfg, lap, fid) + b


class ForcedDiffusion:
    """Reusable ``S_tau`` operator on low-rank factors with ``b`` cached.

    Exposes the small protocol the SDIE engine relies on: ``tau``, ``b``,
    ``weights`` (vertex weights of the inner product), ``apply(u)`` and
    ``expm_apply(u)``.
    """

    def __init__(self, cfg, lap, fid):
        _check_shapes(fid.f, lap, fid.n)
        self.cfg, self.lap, self.fid = cfg, lap, fid
        self._stepper = _Stepper(cfg.scheme, cfg.dt, lap, fid)
        self._b = None

    @property
    def tau(self):
        return self.cfg.tau

    @property
    def weights(self):
        return self.lap.vertex_weights()

    @property
    def b(self):
        if self._b is None:
            if self.cfg.scheme == "euler":
                self._b = self._stepper.repeat(np.zeros(self.lap.n),
                                               self.cfg.k)
            else:
                self._b = compute_b(self.cfg, self.lap, self.fid)
        return self._b

    def apply(self, u):
        out = self._stepper.repeat(np.asarray(u, dtype=float), self.cfg.k)
        if self.cfg.scheme == "euler":
            return out
        return out + self.b

    def expm_apply(self, u):
        """Linear part of ``apply``: ``S_tau u - S_tau 0``."""
        return self.apply(u) - self.b
