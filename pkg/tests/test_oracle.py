import numpy as np
import pytest

from sdie.engine import sdie_update, update_for
from sdie.exceptions import InputError, PreconditionError
from sdie.graph import FidelityData
from sdie.oracle import (DenseOperator, ace_reference, check_ace_gap,
                         random_connected_graph, random_fidelity,
                         verify_theorems)

from conftest import two_node


def test_two_node_spectrum():
    fid = FidelityData(np.array([1.0, 0.0]), np.array([1.0, 0.0]))
    op = DenseOperator(two_node(), fid)
    assert np.allclose(op.A, [[2, -1], [-1, 1]])
    assert np.allclose(op.theta, [(3 - np.sqrt(5)) / 2, (3 + np.sqrt(5)) / 2],
                       atol=1e-14)
    assert np.allclose(op.expm(0.0), np.eye(2), atol=1e-15)


@pytest.mark.parametrize("tau", [0.01, 0.1, 1.0])
def test_heat_kernel_is_nonnegative(tau):
    rng = np.random.default_rng(int(tau * 100))
    for _ in range(10):
        g = random_connected_graph(int(rng.integers(4, 12)), rng)
        op = DenseOperator(g, random_fidelity(g.n, rng))
        assert op.expm(tau).min() >= -1e-14


def test_expm_matches_scipy(small_problem):
    from scipy.linalg import expm
    assert np.allclose(small_problem.expm(0.7), expm(-0.7 * small_problem.A),
                       atol=1e-12)


def test_stationary_state(small_problem):
    op = small_problem
    star = np.linalg.solve(op.A, op.fid.f)
    for t in (0.1, 1.0, 10.0):
        assert np.allclose(op.exact_S_tau(star, t), star, atol=1e-12)


def test_ace_gap_precondition(small_problem):
    op = small_problem
    with pytest.raises(PreconditionError):
        ace_reference(np.zeros(op.n), 1.0, 1.0 / op.theta[2], op, 1e-3)
    assert check_ace_gap(op, 0.1) > 0


def test_ace_reference_basics(small_problem):
    op = small_problem
    u0 = np.linspace(0, 1, op.n)
    assert np.array_equal(ace_reference(u0, 0.0, 0.1, op, 1e-3), u0)
    with pytest.raises(InputError):
        ace_reference(u0, 1.0, 0.1, op, 0.2)
    # manual iteration with the same step agrees exactly
    u = u0
    for _ in range(10):
        u, _ = sdie_update(op.exact_S_tau(u, 0.01), 0.1)
    assert np.allclose(ace_reference(u0, 0.1, 0.1, op, 0.01), u, atol=1e-14)


def test_ace_reference_self_convergence(small_problem):
    op = small_problem
    # interior start and a soft well keep the trajectory off the bounds
    u0 = 0.3 + 0.4 * np.linspace(0, 1, op.n)
    refs = [ace_reference(u0, 0.5, 0.5, op, 0.5 / 2 ** j)
            for j in range(4, 9)]
    gaps = [op.norm(a - b) for a, b in zip(refs, refs[1:])]
    assert all(g2 < g1 for g1, g2 in zip(gaps, gaps[1:]))
    # first order: each gap roughly halves
    ratios = np.array(gaps[:-1]) / np.array(gaps[1:])
    assert np.all((ratios > 1.5) & (ratios < 2.6))


def test_battery_passes_small():
    report = verify_theorems(seed=3, trials=8)
    assert report.passed, report.to_text()
    assert "worst" in report.to_text().lower() or report.rows()
    csv = report.to_csv().splitlines()
    assert len(csv) == len(report.rows()) + 1


def _tampered(v, lam):
    # thresholds swapped relative to the true update
    u, beta = update_for(lam)(v)
    return 1.0 - u, beta


def test_battery_detects_tampered_update():
    report = verify_theorems(seed=0, trials=5, update=_tampered)
    assert not report.passed
    failed = {name for name, _, _, ok in report.rows() if not ok}
    assert {"lyapunov_decrease", "mbo_termination"} <= failed
