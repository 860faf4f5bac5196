import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar
from sklearn.exceptions import ConvergenceWarning

from sdie.engine import (SdieParams, iterate_sdie, load_labels, lyapunov_H,
                         mbo_update, run_sdie, save_labels, sdie_update,
                         write_trace_csv)
from sdie.exceptions import InputError
from sdie.oracle import DenseOperator, random_connected_graph, random_fidelity


def test_update_examples():
    u, _ = sdie_update(np.array([0.1, 0.5, 0.65, 0.8]), 0.6)
    assert np.allclose(u, [0.0, 0.5, 0.875, 1.0], atol=1e-15)
    for lam in (0.01, 0.3, 0.99):
        u, beta = sdie_update(np.full(4, 0.5), lam)
        assert np.array_equal(u, np.full(4, 0.5))
        assert np.array_equal(beta, np.zeros(4))


def test_mbo_examples():
    u, beta = mbo_update(np.array([0.5, 0.49, 0.51]))
    assert np.array_equal(u, [1.0, 0.0, 1.0])
    assert np.allclose(beta, [0.0, 0.01, -0.01])
    assert np.array_equal(mbo_update(np.full(3, 0.2))[0], np.zeros(3))


def test_update_rejects_bad_lambda():
    for lam in (0.0, 1.5, -0.5):
        with pytest.raises(InputError):
            sdie_update(np.zeros(2), lam)


def test_lambda_one_is_mbo():
    v = np.random.default_rng(0).uniform(-0.5, 1.5, (50, 7))
    v[0, :3] = 0.5
    for a, b in zip(sdie_update(v, 1.0), mbo_update(v)):
        assert np.array_equal(a, b)


def test_lambda_to_one_limit_matches_mbo():
    v = np.linspace(-0.5, 1.5, 2001)
    v = v[np.abs(v - 0.5) > 1e-3]
    u_mbo, _ = mbo_update(v)
    u_sd, _ = sdie_update(v, 1 - 1e-6)
    assert np.array_equal(u_sd, u_mbo)


@settings(max_examples=60, deadline=None)
@given(v=st.floats(-1.0, 2.0), lam=st.floats(0.01, 0.99))
def test_update_solves_obstacle_problem(v, lam):
    # brute force: minimise (1-lam)/2 x^2 - (v - lam/2) x over [0, 1]
    res = minimize_scalar(lambda x: 0.5 * (1 - lam) * x * x - (v - lam / 2) * x,
                          bounds=(0.0, 1.0), method="bounded",
                          options={"xatol": 1e-12})
    u, beta = sdie_update(np.array([v]), lam)
    assert u[0] == pytest.approx(res.x, abs=1e-6)
    # beta is the multiplier: positive only at 0, negative only at 1
    assert beta[0] >= 0 or u[0] == 1.0
    assert beta[0] <= 0 or u[0] == 0.0
    assert (1 - lam) * u[0] == pytest.approx(v - lam / 2 + lam * beta[0],
                                             abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 31), lam=st.floats(0.01, 0.99))
def test_update_is_monotone_and_lipschitz(seed, lam):
    rng = np.random.default_rng(seed)
    v = rng.uniform(-0.5, 1.5, 50)
    w = v + rng.uniform(0, 0.2, 50)
    u, _ = sdie_update(v, lam)
    uw, _ = sdie_update(w, lam)
    assert np.all(u <= uw)
    assert np.all(uw - u <= (w - v) / (1 - lam) + 1e-12)
    assert u.min() >= 0 and u.max() <= 1


def test_params_validation():
    with pytest.raises(InputError):
        SdieParams(eps=0.1, tau=0.2)
    with pytest.raises(InputError):
        SdieParams(eps=-1, tau=0.1)
    with pytest.raises(InputError):
        SdieParams(eps=0.1, tau=0.1, max_iter=0)
    assert SdieParams(0.1, 0.1).is_mbo
    assert SdieParams(0.1, 0.05).lam == pytest.approx(0.5)


def test_lyapunov_zero_state(small_problem):
    prop = small_problem.propagator(0.1)
    assert lyapunov_H(np.zeros(small_problem.n), 0.5, prop) == 0.0


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2 ** 31), lam=st.floats(0.05, 0.95))
def test_lyapunov_decrease_and_lower_bound(seed, lam):
    rng = np.random.default_rng(seed)
    g = random_connected_graph(8, rng)
    op = DenseOperator(g, random_fidelity(8, rng))
    tau = 0.3
    prop = op.propagator(tau)
    bound = -2 * tau * op.norm(op.fid.f) * op.norm(np.ones(8))
    us, _ = iterate_sdie(rng.random(8), lam, prop, 15)
    H = [lyapunov_H(u, lam, prop) for u in us]
    for k in range(15):
        gap = (1 - lam) * op.norm(us[k + 1] - us[k]) ** 2
        assert H[k] - H[k + 1] >= gap - 1e-10
        assert H[k] >= bound


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2 ** 31), lam=st.floats(0.05, 0.9))
def test_iterates_contract_at_the_stated_rate(seed, lam):
    rng = np.random.default_rng(seed)
    g = random_connected_graph(7, rng)
    op = DenseOperator(g, random_fidelity(7, rng))
    tau = 0.2
    prop = op.propagator(tau)
    u0, v0 = rng.random(7), rng.random(7)
    us, _ = iterate_sdie(u0, lam, prop, 10)
    vs, _ = iterate_sdie(v0, lam, prop, 10)
    for n in range(11):
        bound = np.exp(-n * op.xi1 * tau) * (1 - lam) ** (-n) * \
            op.norm(u0 - v0)
        assert op.norm(us[n] - vs[n]) <= bound + 1e-8


def test_mbo_fixed_point_needs_one_more_iteration(small_problem):
    prop = small_problem.propagator(0.5)
    params = SdieParams(eps=0.5, tau=0.5, max_iter=500)
    first = run_sdie(np.full(small_problem.n, 0.49), params, prop)
    assert first.converged
    again = run_sdie(first.u, params, prop)
    assert again.n_iter == 1
    assert np.array_equal(again.u, first.u)


def test_run_sdie_trace_and_warning(small_problem, tmp_path):
    prop = small_problem.propagator(0.05)
    params = SdieParams(eps=0.1, tau=0.05, delta=1e-30, max_iter=3)
    with pytest.warns(ConvergenceWarning):
        res = run_sdie(np.linspace(0, 1, small_problem.n), params, prop,
                       trace=True)
    assert not res.converged and res.n_iter == 3
    assert [r["iter"] for r in res.trace] == [0, 1, 2, 3]
    H = [r["H"] for r in res.trace]
    assert all(a >= b for a, b in zip(H, H[1:]))
    write_trace_csv(res.trace, tmp_path / "trace.csv")
    assert (tmp_path / "trace.csv").read_text().startswith("iter,H,")


def test_run_sdie_input_checks(small_problem):
    prop = small_problem.propagator(0.05)
    with pytest.raises(InputError):
        run_sdie(np.full(small_problem.n, 1.5), SdieParams(0.1, 0.05), prop)
    with pytest.raises(InputError):
        run_sdie(np.zeros(small_problem.n), SdieParams(0.1, 0.02), prop)


def test_zero_state_guard():
    # a propagator that always returns zero: ||u_n|| = 0 with zero change
    class Zero:
        tau, b, weights = 0.1, np.zeros(3), np.ones(3)

        def apply(self, u):
            return np.zeros(3)

    res = run_sdie(np.zeros(3), SdieParams(0.1, 0.1), Zero())
    assert res.converged and res.n_iter == 1


def test_label_file_round_trip(tmp_path):
    u = np.random.default_rng(0).random(17)
    save_labels(u, tmp_path / "u.bin")
    assert (tmp_path / "u.bin").stat().st_size == 17 * 8
    assert np.array_equal(load_labels(tmp_path / "u.bin"), u)
