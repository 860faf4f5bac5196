"""Dense reference implementations for small graphs.

Everything here materialises ``A = Delta + diag(mu)`` and diagonalises it
once. ``A`` is self-adjoint for the vertex inner product, so
``S A S^{-1}`` with ``S = diag(d^{r/2})`` is symmetric and a single
symmetric eigensolve yields exact matrix functions. These routines are used
to check the fast low-rank paths and to test the theory numerically.
"""
import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .engine import iterate_sdie, lyapunov_H, sdie_update, update_for
from .exceptions import InputError, PreconditionError
from .graph import (FidelityData, Graph, check_connected, dense_laplacian,
                    ginzburg_landau_fidelity)

ACE_GAP = 1e-8


def random_connected_graph(n, rng, p=0.5, normalization="random_walk",
                           max_tries=1000):
    """Erdos-Renyi graph with weights uniform on (0.1, 1], resampled until
    connected."""
    for _ in range(max_tries):
        mask = np.triu(rng.random((n, n)) < p, 1)
        weights = 1.0 - 0.9 * rng.random((n, n))
        W = np.where(mask, weights, 0.0)
        W = W + W.T
        try:
            check_connected(W)
        except InputError:
            continue
        return Graph.from_dense(W, normalization, check=False)
    raise RuntimeError("could not draw a connected graph")


def random_fidelity(n, rng, mu_range=(0.5, 2.0), fraction=0.4,
                    fractional_labels=False):
    size = max(1, int(round(fraction * n)))
    Z = rng.choice(n, size=size, replace=False)
    mu = np.zeros(n)
    mu[Z] = rng.uniform(*mu_range, size=size)
    ft = np.zeros(n)
    if fractional_labels:
        ft[Z] = rng.random(size)
    else:
        ft[Z] = rng.integers(0, 2, size=size)
    return FidelityData(mu, ft)


def _phi_Q(x, tau):
    """``(1 - x - e^{-x}) / tau^2`` with a series for small ``x``."""
    x = np.asarray(x, dtype=float)
    out = -(np.expm1(-x) + x)
    small = np.abs(x) < 1e-3
    xs = x[small]
    out[small] = -(xs ** 2 / 2 - xs ** 3 / 6 + xs ** 4 / 24 - xs ** 5 / 120)
    return out / tau ** 2


class DenseOperator:
    """Exact ``exp(-tA)``, ``A^{-1}`` and ``S_t`` for a small dense graph."""

    def __init__(self, g, fid):
        if fid.n != g.n:
            raise InputError("fidelity data and graph sizes differ")
        self.g, self.fid = g, fid
        self.Delta = dense_laplacian(g)
        self.A = self.Delta + np.diag(fid.mu)
        self.weights = g.vertex_weights()
        s = np.sqrt(self.weights)
        self._s = s
        A_hat = s[:, None] * self.A / s[None, :]
        self.theta, self.Q = np.linalg.eigh((A_hat + A_hat.T) / 2)
        L_hat = s[:, None] * self.Delta / s[None, :]
        delta_eigs = np.linalg.eigvalsh((L_hat + L_hat.T) / 2)
        self.norm_Delta = float(np.max(np.abs(delta_eigs)))
        self.expm_cache = {}

    @property
    def n(self):
        return self.g.n

    @property
    def xi1(self):
        return float(self.theta[0])

    @property
    def norm_A(self):
        return float(self.theta[-1])

    def matrix_function(self, values):
        """``phi(A)`` given ``phi`` evaluated on the spectrum."""
        s = self._s
        return (self.Q * values) @ self.Q.T / s[:, None] * s[None, :]

    def expm(self, t):
        if t not in self.expm_cache:
            self.expm_cache[t] = self.matrix_function(np.exp(-t * self.theta))
        return self.expm_cache[t]

    def expm_apply(self, t, u):
        return self.expm(t) @ np.asarray(u, dtype=float)

    def solve(self, v):
        return self.matrix_function(1.0 / self.theta) @ v

    def b(self, t):
        """``A^{-1}(I - e^{-tA}) f`` evaluated spectrally."""
        return self.matrix_function(-np.expm1(-t * self.theta) / self.theta) \
            @ self.fid.f

    def exact_S_tau(self, u, t):
        return self.expm_apply(t, u) + self.b(t)

    def Q_tau(self, tau):
        return self.matrix_function(_phi_Q(tau * self.theta, tau))

    def inner(self, u, v):
        return float(np.sum(self.weights * u * v))

    def norm(self, u):
        return math.sqrt(self.inner(u, u))

    def gl(self, u, eps):
        return ginzburg_landau_fidelity(u, self.g, self.fid, eps, self.Delta)

    def propagator(self, tau):
        return DensePropagator(self, tau)


class DensePropagator:
    """Exact ``S_tau`` in the protocol expected by the SDIE engine."""

    def __init__(self, op, tau):
        self.op, self.tau = op, tau
        self.E = op.expm(tau)
        self.b = op.b(tau)
        self.weights = op.weights

    def apply(self, u):
        return self.E @ u + self.b

    def expm_apply(self, u):
        return self.E @ u


def check_ace_gap(op, eps):
    gap = float(np.min(np.abs(op.theta - 1.0 / eps)))
    if gap < ACE_GAP:
        raise PreconditionError(
            f"1/eps lies within {gap:.1e} of the spectrum of A")
    return gap


def ace_reference(u0, t, eps, op, tau_ref):
    """Fine-step SDIE iterate at ``ceil(t / tau_ref)`` with exact diffusion."""
    if not 0 < tau_ref < eps:
        raise InputError("tau_ref must lie in (0, eps)")
    check_ace_gap(op, eps)
    u0 = np.asarray(u0, dtype=float)
    steps = int(math.ceil(t / tau_ref - 1e-9))
    if steps <= 0:
        return u0.copy()
    prop = op.propagator(tau_ref)
    lam = tau_ref / eps
    u = u0
    for _ in range(steps):
        u, _ = sdie_update(prop.apply(u), lam)
    return u


def nth_term(op, u0, lam, tau, betas):
    """Closed-form ``u_n`` from ``u_0`` and the recorded ``beta_1..beta_n``."""
    n = len(betas)
    c = 1.0 / (1.0 - lam)
    w = op.b(tau) - 0.5 * lam
    u = c ** n * op.expm_apply(n * tau, u0)
    for k in range(1, n + 1):
        u = u + c ** k * op.expm_apply((k - 1) * tau, w)
        u = u + lam * c * c ** (n - k) * op.expm_apply((n - k) * tau,
                                                       betas[k - 1])
    return u


def beta_formula(op, u, eps):
    """Continuum characterisation of ``beta`` at the bounds of ``[0, 1]``."""
    Du = op.Delta @ u
    f, mu = op.fid.f, op.fid.mu
    beta = np.zeros_like(u)
    lo, hi = u == 0, u == 1
    beta[lo] = 0.5 + eps * Du[lo] - eps * f[lo]
    beta[hi] = -0.5 + eps * Du[hi] + eps * (mu[hi] - f[hi])
    return beta


def q_tau(op, u, tau):
    """``<u, Q_tau (u - 2 A^{-1} f)>`` in the vertex inner product."""
    return op.inner(u, op.Q_tau(tau) @ (u - 2.0 * op.solve(op.fid.f)))


@dataclass
class PropertyResult:
    name: str
    trials: int = 0
    worst_margin: float = math.inf

    def record(self, margin):
        self.trials += 1
        self.worst_margin = min(self.worst_margin, float(margin))

    @property
    def passed(self):
        return self.trials > 0 and self.worst_margin >= 0


@dataclass
class VerificationReport:
    results: dict = field(default_factory=dict)

    def __getitem__(self, name):
        if name not in self.results:
            self.results[name] = PropertyResult(name)
        return self.results[name]

    @property
    def passed(self):
        return all(r.passed for r in self.results.values())

    def rows(self):
        return [(r.name, r.trials, r.worst_margin, r.passed)
                for r in self.results.values()]

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["property", "trials", "worst_margin", "pass"])
        for name, trials, margin, ok in self.rows():
            writer.writerow([name, trials, f"{margin:.6e}", int(ok)])
        return buf.getvalue()

    def to_text(self):
        lines = []
        for name, trials, margin, ok in self.rows():
            status = "PASS" if ok else "FAIL"
            lines.append(f"{status}  {name:<24} trials={trials:<4d} "
                         f"worst_margin={margin:.3e}")
        return "\n".join(lines)


def random_instance(rng, n_range=(6, 12), mu_range=(0.5, 2.0),
                    normalization="random_walk"):
    n = int(rng.integers(n_range[0], n_range[1] + 1))
    g = random_connected_graph(n, rng, normalization=normalization)
    fid = random_fidelity(n, rng, mu_range=mu_range,
                          fractional_labels=bool(rng.integers(0, 2)))
    return DenseOperator(g, fid)


def _pick_eps(op, rng, low=0.2, high=1.0):
    for _ in range(100):
        eps = float(rng.uniform(low, high))
        if np.min(np.abs(op.theta - 1.0 / eps)) >= 1e-3:
            return eps
    raise RuntimeError("could not pick eps away from the spectrum")


def verify_theorems(seed=0, n_range=(6, 12), trials=50, update=None,
                    fine_steps=200):
    """Run the numerical property battery on ``trials`` random graphs.

    ``update`` replaces the SDIE/MBO update (``update(v, lam) -> (u, beta)``)
    in all trajectory-based checks; it exists so that the battery itself can
    be tested against a deliberately broken scheme.

    Every property reports the smallest margin ``allowed - observed`` over
    its trials; a property passes when that margin is nonnegative.
    """
    rng = np.random.default_rng(seed)
    rep = VerificationReport()
    tol = 1e-8

    def stepper(lam):
        if update is None:
            return update_for(lam)
        return lambda v: update(v, lam)

    for _ in range(trials):
        op = random_instance(rng, n_range)
        n = op.n
        eps = _pick_eps(op, rng)
        lam = float(rng.uniform(0.1, 0.7))
        tau = lam * eps
        prop = op.propagator(tau)
        upd = stepper(lam)

        # spectrum of A and positivity of exp(-tA)
        rep["spectrum_of_A"].record(min(
            op.xi1, op.norm_Delta + np.max(op.fid.mu) - op.norm_A + tol))
        rep["expm_nonnegative"].record(np.min(op.expm(tau)) + tol)

        # comparison principle and range preservation of exact diffusion
        u = rng.random(n)
        v = np.minimum(1.0, u + rng.random(n) * rng.random())
        Su, Sv = op.exact_S_tau(u, tau), op.exact_S_tau(v, tau)
        rep["comparison_principle"].record(np.min(Sv - Su) + tol)
        rep["diffusion_range"].record(
            min(np.min(Su), np.min(1 - Su)) + 1e-10)

        # coarse SDIE trajectory
        u0 = rng.random(n)
        n_steps = int(rng.integers(3, 9))
        us, betas = iterate_sdie(u0, lam, prop, n_steps, update=upd)
        rep["iterate_range"].record(min(np.min(us), np.min(1 - us)))
        margin = math.inf
        for uk, bk in zip(us[1:], betas):
            sign_lo = np.min(bk[uk == 0], initial=math.inf)
            sign_hi = -np.max(bk[uk == 1], initial=-math.inf)
            interior = -np.max(np.abs(bk[(uk > 0) & (uk < 1)]), initial=0)
            bound = 0.5 - np.max(np.abs(bk))
            margin = min(margin, sign_lo + 1e-12, sign_hi + 1e-12,
                         interior + 1e-12, bound + 1e-12)
        rep["beta_membership"].record(margin)

        H = [lyapunov_H(uk, lam, prop) for uk in us]
        lower = -2 * tau * op.norm(op.fid.f) * op.norm(np.ones(n))
        rep["lyapunov_lower_bound"].record(min(H) - lower + 1e-10)
        gaps = [H[k] - H[k + 1] - (1 - lam) * op.norm(us[k + 1] - us[k]) ** 2
                for k in range(n_steps)]
        rep["lyapunov_decrease"].record(min(gaps) + 1e-10)

        closed = nth_term(op, u0, lam, tau, betas)
        rep["nth_term_identity"].record(tol - np.max(np.abs(closed - us[-1])))

        # stability of SDIE in the initial data
        w0 = rng.random(n)
        ws, _ = iterate_sdie(w0, lam, prop, n_steps, update=upd)
        margin = math.inf
        d0 = op.norm(u0 - w0)
        for k in range(n_steps + 1):
            bound = math.exp(-k * op.xi1 * tau) * (1 - lam) ** (-k) * d0
            margin = min(margin, bound - op.norm(us[k] - ws[k]) + tol)
        rep["sdie_stability"].record(margin)

        # H_tau identity and its O(tau) distance to GL_f
        uu = rng.random(n)
        offset = 0.5 * op.inner(op.fid.f_tilde, op.fid.mu * op.fid.f_tilde)
        h_tau = lyapunov_H(uu, lam, prop) / (2 * tau)
        identity = op.gl(uu, eps) - offset + 0.5 * tau * q_tau(op, uu, tau)
        scale = max(1.0, abs(h_tau))
        rep["htau_identity"].record(tol * scale - abs(h_tau - identity))
        margin = math.inf
        r = uu - 2.0 * op.solve(op.fid.f)
        for t_small in tau / 2.0 ** np.arange(6):
            p_small = op.propagator(t_small)
            lam_small = t_small / eps
            gap = (lyapunov_H(uu, lam_small, p_small) / (2 * t_small)
                   + offset - op.gl(uu, eps))
            bound = 0.25 * t_small * op.norm_A ** 2 * op.norm(uu) * op.norm(r)
            margin = min(margin, bound - abs(gap) + tol * scale)
        rep["htau_to_gl"].record(margin)

        # fine-step trajectories: discrete analogues of the continuum bounds
        lam_f = lam / fine_steps * 10
        tau_f = lam_f * eps
        prop_f = op.propagator(tau_f)
        fs, fb = iterate_sdie(u0, lam_f, prop_f, fine_steps,
                              update=stepper(lam_f))
        q = np.array([q_tau(op, x, tau_f) for x in fs])
        gl = np.array([op.gl(x, eps) for x in fs])
        idx = np.unique(np.linspace(0, fine_steps, 9).astype(int))
        m_gl, m_c0 = math.inf, math.inf
        for a_i, a in enumerate(idx):
            for c in idx[a_i + 1:]:
                span = (c - a) * tau_f
                dist2 = op.norm(fs[c] - fs[a]) ** 2
                slack = (lam_f * dist2 / (2 * span)
                         + 0.5 * tau_f * (q[a] - q[c]))
                m_gl = min(m_gl, gl[a] - gl[c] - dist2 / (2 * span)
                           + slack + tol)
                bound = math.sqrt(max(0.0, 2 * span / (1 - lam_f) * (
                    gl[0] + 0.5 * tau_f * abs(q[0] - q[c]))))
                m_c0 = min(m_c0, bound - math.sqrt(dist2) + tol)
        rep["gl_decrease"].record(m_gl)
        rep["holder_half"].record(m_c0)

        # beta at the bounds against its continuum characterisation
        a_inf = float(np.max(np.sum(np.abs(op.A), axis=1)))
        x = tau_f * a_inf
        f_inf = float(np.max(np.abs(op.fid.f)))
        margin = math.inf
        for k in range(fine_steps):
            cur, nxt, bk = fs[k], fs[k + 1], fb[k]
            allowed = (eps / tau_f) * (
                x * x / 2 * math.exp(x) * np.max(np.abs(cur))
                + tau_f * x / 2 * math.exp(x) * f_inf) + tol
            pred = beta_formula(op, cur, eps)
            same = ((cur == 0) & (nxt == 0)) | ((cur == 1) & (nxt == 1))
            if np.any(same):
                margin = min(margin,
                             allowed - np.max(np.abs(bk[same] - pred[same])))
        if math.isfinite(margin):
            rep["beta_characterization"].record(margin)

        # continuum stability, with the gap between two reference step
        # sizes as an estimate of the distance to the limit
        t_end = eps
        refs = []
        for x0 in (u0, w0):
            coarse = ace_reference(x0, t_end, eps, op, eps / 256)
            fine = ace_reference(x0, t_end, eps, op, eps / 512)
            refs.append((fine, op.norm(fine - coarse)))
        (ua, ea), (wa, ewa) = refs
        bound = math.exp((1.0 / eps - op.xi1) * t_end) * d0
        rep["ace_stability"].record(bound - op.norm(ua - wa) + ea + ewa + tol)

        # MBO: eventually constant
        mprop = op.propagator(eps)
        mupd = stepper(1.0)
        u = rng.random(n)
        settled = -1.0
        for _k in range(500):
            nxt, _ = mupd(mprop.apply(u))
            if np.array_equal(nxt, u):
                settled = 0.0
                break
            u = nxt
        rep["mbo_termination"].record(settled)
    return rep
