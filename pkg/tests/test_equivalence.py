import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmlqg import equivalence, nce, prob
from mmlqg.equivalence import InterchangeOperator, conjugate
from mmlqg.model import TimeGrid, random_model, scalar_baseline, zero_cost_model

COARSE = TimeGrid(1.0, 200)


def test_conjugate_identity_and_scalar_swap():
    J = InterchangeOperator(2)
    np.testing.assert_array_equal(conjugate(J, np.eye(4)), np.eye(4))
    M = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(conjugate(InterchangeOperator(1), M), [[4.0, 3.0], [2.0, 1.0]])


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2 ** 32 - 1))
def test_interchange_properties(n, seed):
    J = InterchangeOperator(n)
    Jm = J.matrix
    assert np.array_equal(Jm, Jm.T)
    assert np.array_equal(Jm @ Jm, np.eye(2 * n))
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((2 * n, 2 * n))
    assert np.array_equal(J.conjugate(J.conjugate(M)), M)
    np.testing.assert_allclose(J.conjugate(M), Jm.T @ M @ Jm, atol=0)
    R = rng.standard_normal((n, 2 * n))
    np.testing.assert_allclose(J.right(R), R @ Jm, atol=0)
    v = rng.standard_normal(2 * n)
    np.testing.assert_allclose(J.left(v), Jm @ v, atol=0)
    # block view: (11, 12, 21, 22) -> (22, 21, 12, 11)
    C = J.conjugate(M)
    assert np.array_equal(C[:n, :n], M[n:, n:]) and np.array_equal(C[:n, n:], M[n:, :n])


def test_dimension_mismatch():
    J = InterchangeOperator(2)
    with pytest.raises(ValueError):
        J.conjugate(np.eye(3))
    with pytest.raises(ValueError):
        J.left(np.ones(3))
    with pytest.raises(ValueError):
        J.right(np.ones((2, 3)))


def test_zero_cost_exact_zero():
    rep = equivalence.compare(zero_cost_model(2, 1, 1), COARSE)
    assert rep.passed
    assert all(v == 0.0 for v in rep.discrepancies.values())


def test_m1_passes(grid, m1_nce, m1_prob):
    rep = equivalence.check_theorem2(scalar_baseline(), m1_nce, m1_prob, tol=1e-6)
    assert rep.passed and rep.dS <= 1e-12
    assert all(v >= 0 for v in rep.discrepancies.values())


def test_random_coupled_passes():
    rep = equivalence.compare(random_model(11, n=2, m=1), TimeGrid(1.0, 2000), tol=1e-6)
    assert rep.passed, rep.discrepancies


def test_report_fails_on_perturbed_solution():
    m = random_model(2, n=2)
    a, b = nce.solve(m, COARSE), prob.solve(m, COARSE)
    bad = prob.ProbSolution(b.grid, b.K, b.S, b.Sbb, b.k + 1e-3, b.sbar)
    rep = equivalence.check_theorem2(m, a, bad, tol=1e-6)
    assert not rep.passed and rep.dk == pytest.approx(1e-3, rel=1e-6)


def test_grid_mismatch_rejected(m1_nce):
    with pytest.raises(ValueError):
        equivalence.check_theorem2(scalar_baseline(), m1_nce,
                                   prob.solve(scalar_baseline(), COARSE))


def test_discrepancies_shrink_with_refinement():
    m = random_model(3, n=2, m=2)
    coarse = equivalence.compare(m, TimeGrid(1.0, 20))
    fine = equivalence.compare(m, TimeGrid(1.0, 40))
    worst_c = max(coarse.dK, coarse.dSbb, coarse.dk, coarse.dsbar)
    worst_f = max(fine.dK, fine.dSbb, fine.dk, fine.dsbar)
    # both are pure round-off or an order >= 4 integration error
    assert worst_f <= max(worst_c / 16 * 1.5, 1e-13)


def test_theorem1_decoupled(grid):
    rep = equivalence.check_theorem1(scalar_baseline(eta=[1.0], eta0=[0.5]), grid)
    assert rep.d_row <= 1e-12 and rep.d_s <= 1e-12 and rep.passed


def test_theorem1_random():
    rep = equivalence.check_theorem1(random_model(9, n=2, m=1), TimeGrid(1.0, 2000))
    assert rep.passed
    assert len(rep.sampled_nodes) == 10


def test_block_identities_exact():
    m = random_model(5, n=3, m=2)
    full = nce.solve_full(m, COARSE)
    for node in (0, 77, 200):
        res = equivalence.block_identity_residuals(m, full, node)
        assert max(res.values()) <= 1e-12, res
