import numpy as np
import pytest
import scipy.sparse as sp

from tetlap.errors import NumericalError
from tetlap.pcg import (
    LinearOperator,
    check_linearity,
    estimate_rel_condition,
    pcg,
)


def path_graph_laplacian(n):
    return sp.diags([-np.ones(n - 1), np.r_[1, 2 * np.ones(n - 2), 1],
                     -np.ones(n - 1)], [-1, 0, 1]).toarray()


def test_perfect_preconditioner_one_iteration(rng):
    a = np.diag([1.0, 3.0, 7.0])
    op = LinearOperator.from_matrix(a)
    m = LinearOperator(dim=3, apply=lambda v: np.linalg.solve(a, v))
    x, rep = pcg(op, m, np.array([1.0, 2.0, 3.0]), tol=1e-12)
    assert rep.iterations == 1
    assert np.allclose(a @ x, [1, 2, 3], atol=1e-10)


def test_cg_finite_termination_diag():
    a = np.diag([1.0, 4.0])
    x, rep = pcg(LinearOperator.from_matrix(a), None, np.array([1.0, 2.0]),
                 tol=1e-12)
    assert rep.iterations <= 2
    assert np.allclose(x, [1.0, 0.5], atol=1e-10)


def test_path_laplacian_singular_system(rng):
    n = 16
    lap = path_graph_laplacian(n)
    b = rng.standard_normal(n)
    b -= b.mean()  # orthogonal to the all-ones kernel
    x, rep = pcg(LinearOperator.from_matrix(lap), None, b, tol=1e-8,
                 max_iters=64)
    assert rep.iterations <= 16
    assert np.linalg.norm(lap @ x - b) <= 1e-8 * np.linalg.norm(b)


def test_pcg_zero_rhs():
    a = np.eye(4)
    x, rep = pcg(LinearOperator.from_matrix(a), None, np.zeros(4), tol=1e-10)
    assert np.array_equal(x, np.zeros(4))
    assert rep.iterations == 0


def test_pcg_detects_asymmetry():
    a = np.array([[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(NumericalError, match="asymmetry"):
        pcg(LinearOperator.from_matrix(a), None, np.array([1.0, 1.0]),
            tol=1e-14, max_iters=50)


def test_pcg_detects_indefiniteness():
    a = np.diag([1.0, -1.0])
    with pytest.raises(NumericalError, match="not PSD"):
        pcg(LinearOperator.from_matrix(a), None, np.array([1.0, 1.0]),
            tol=1e-12)


def test_pcg_reports_nonconvergence(rng):
    n = 40
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    a = q @ np.diag(np.geomspace(1, 1e8, n)) @ q.T
    a = 0.5 * (a + a.T)
    b = a @ rng.standard_normal(n)
    x, rep = pcg(LinearOperator.from_matrix(a), None, b, tol=1e-12, max_iters=3)
    assert not rep.converged
    assert rep.final_residual > 1e-12 * np.linalg.norm(b)


def test_final_residual_is_recomputed(rng):
    a = np.diag(np.arange(1.0, 9.0))
    b = rng.standard_normal(8)
    x, rep = pcg(LinearOperator.from_matrix(a), None, b, tol=1e-10)
    assert rep.final_residual == pytest.approx(np.linalg.norm(a @ x - b), rel=1e-12)


def test_a_norm_error_monotone(rng):
    # the CG descent property, checked against the exact solution
    n = 24
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    a = q @ np.diag(np.geomspace(1, 1e4, n)) @ q.T
    a = 0.5 * (a + a.T)
    x_star = rng.standard_normal(n)
    b = a @ x_star
    op = LinearOperator.from_matrix(a)

    errors = []
    for iters in range(1, 12):
        x, _ = pcg(op, None, b, tol=0.0, max_iters=iters)
        e = x - x_star
        errors.append(e @ a @ e)
    assert all(e2 <= e1 * (1 + 1e-9) for e1, e2 in zip(errors, errors[1:]))


def test_preconditioned_residual_trace_monotone_on_small_instances(rng):
    n = 16
    lap = path_graph_laplacian(n)
    b = rng.standard_normal(n)
    b -= b.mean()
    x, rep = pcg(LinearOperator.from_matrix(lap), None, b, tol=1e-10)
    trace = rep.residual_trace
    assert all(t2 <= t1 * (1 + 1e-9) for t1, t2 in zip(trace, trace[1:]))


def test_linearity_check(rng):
    op = LinearOperator.from_matrix(np.diag([1.0, 2.0]))
    assert check_linearity(op, rng)
    bad = LinearOperator(dim=2, apply=lambda v: v + 1.0)
    assert not check_linearity(bad, rng)


def test_rel_condition_identity_pair(rng):
    a = np.diag([2.0, 5.0, 9.0, 11.0])
    op = LinearOperator.from_matrix(a)
    m = LinearOperator(dim=4, apply=lambda v: np.linalg.solve(a, v))
    k = estimate_rel_condition(op, m, iters=10)
    assert k == pytest.approx(1.0, rel=0.05)


def test_rel_condition_scaled_pair():
    a = np.diag([2.0, 5.0, 9.0, 11.0])
    op = LinearOperator.from_matrix(2.0 * a)
    m = LinearOperator(dim=4, apply=lambda v: np.linalg.solve(a, v))
    k = estimate_rel_condition(op, m, iters=10)
    assert k == pytest.approx(1.0, rel=0.05)


def test_rel_condition_diag_vs_identity():
    a = np.diag([1.0, 10.0])
    k = estimate_rel_condition(LinearOperator.from_matrix(a),
                               LinearOperator.identity(2), iters=5)
    assert k == pytest.approx(10.0, rel=0.05)
