from __future__ import annotations

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from slowfast import linalg
from slowfast.linalg import LinAlgError, RankError, SingularMatrixError


def test_eigenvalue_examples():
    assert linalg.eigenvalues([[2.0]]) == pytest.approx([2.0])
    ev = linalg.eigenvalues([[0.0, 1.0], [-1.0, 0.0]])
    assert ev == pytest.approx([-1j, 1j])
    assert linalg.eigenvalues(np.diag([3.0, 1.0, 2.0])) == pytest.approx([1.0, 2.0, 3.0])


def test_eigenvalues_sorted_and_conjugate():
    rng = np.random.default_rng(3)
    for n in range(1, 8):
        ev = linalg.eigenvalues(rng.normal(size=(n, n)))
        assert len(ev) == n
        keys = [(e.real, e.imag) for e in ev]
        assert keys == sorted(keys)
        assert np.sort_complex(ev) == pytest.approx(np.sort_complex(ev.conj()))


def test_two_by_two_closed_form_resists_cancellation():
    ev = linalg.eigenvalues([[1e8, 1.0], [0.0, 1e-8]])
    assert ev[0].real == pytest.approx(1e-8, rel=1e-10)


def test_solve_examples():
    b = np.array([1.0, -2.0, 3.0])
    assert np.array_equal(linalg.solve(np.eye(3), b), b)
    assert linalg.solve([[2.0, 0.0], [0.0, 4.0]], [2.0, 8.0]) == pytest.approx([1.0, 2.0])


def test_solve_spd_against_inverse():
    rng = np.random.default_rng(5)
    M = rng.normal(size=(5, 5))
    A = M @ M.T + 5 * np.eye(5)
    b = rng.normal(size=5)
    assert linalg.solve(A, b) == pytest.approx(np.linalg.inv(A) @ b, abs=1e-8)


def test_singular_and_shape_errors():
    with pytest.raises(SingularMatrixError):
        linalg.solve([[1.0, 2.0], [2.0, 4.0]], [1.0, 1.0])
    with pytest.raises(LinAlgError):
        linalg.eigenvalues([[1.0, 2.0, 3.0]])
    with pytest.raises(LinAlgError):
        linalg.eigenvalues(np.eye(17))
    with pytest.raises(LinAlgError):
        linalg.solve([[np.nan]], [1.0])


def test_null_vector_examples():
    v, w = linalg.null_vectors([[0.0]])
    assert v == pytest.approx([1.0]) and w == pytest.approx([1.0])
    v, w = linalg.null_vectors([[0.0, 0.0], [0.0, 1.0]])
    assert v == pytest.approx([1.0, 0.0]) and w == pytest.approx([1.0, 0.0])


def test_null_vectors_of_rank_one_deficient_matrix():
    A = np.array([[1.0, 2.0], [3.0, 6.0]])
    v, w = linalg.null_vectors(A)
    assert np.linalg.norm(A @ v) < 1e-12 and np.linalg.norm(w @ A) < 1e-12
    assert abs(np.linalg.norm(v) - 1) < 1e-14
    assert v[np.flatnonzero(np.abs(v) > 1e-14)[0]] > 0


def test_null_vectors_rank_checks():
    with pytest.raises(RankError):
        linalg.null_vectors(np.eye(2))
    with pytest.raises(RankError):
        linalg.null_vectors(np.zeros((2, 2)))


def test_rank_and_det():
    assert linalg.rank([[1.0, 2.0], [2.0, 4.0]]) == 1
    assert linalg.det([[1.0, 2.0], [3.0, 4.0]]) == pytest.approx(-2.0)


well_conditioned = arrays(np.float64, (4, 4), elements=st.floats(-1, 1)).map(lambda M: M + 5 * np.eye(4))  # strictly diagonally dominant


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, (4, 4), elements=st.floats(-3, 3)), st.permutations(range(4)))
def test_eigenvalues_invariant_under_permutation_similarity(A, perm):
    P = np.eye(4)[list(perm)]
    a = linalg.eigenvalues(A)
    # a repeated defective eigenvalue is only determined to sqrt(machine eps);
    # that case has its own test below
    gaps = np.where(np.eye(4, dtype=bool), np.inf, np.abs(a[:, None] - a[None, :]))
    assume(np.min(gaps) > 1e-4 * (1 + np.max(np.abs(A))))
    b = linalg.eigenvalues(P @ A @ P.T)
    scale = 1 + np.max(np.abs(A))
    # match each eigenvalue to its nearest partner; ordering can differ at ties
    for e in a:
        assert np.min(np.abs(b - e)) < 1e-8 * scale


@pytest.mark.parametrize("perm", [[1, 2, 0, 3], [3, 2, 1, 0], [0, 1, 2, 3]])
def test_defective_eigenvalue_under_permutation_similarity(perm):
    # eigenvalue 0 with a 2x2 Jordan block: roundoff of size u moves it by about sqrt(u)
    A = np.array([[1.0, 1, 0, 1], [1, 1, 1, 1], [1, 1, 1, 1], [1, 0, 1, 1]])
    P = np.eye(4)[perm]
    for M in (A, P @ A @ P.T):
        ev = linalg.eigenvalues(M)
        assert np.sort(np.abs(ev))[:2] == pytest.approx([0, 0], abs=1e-7)
        assert np.sort(ev.real)[2:] == pytest.approx([2 - np.sqrt(2), 2 + np.sqrt(2)], abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, (4, 4), elements=st.floats(-3, 3)))
def test_det_is_product_of_eigenvalues(A):
    d = linalg.det(A)
    p = np.prod(linalg.eigenvalues(A))
    assert abs(p.imag) <= 1e-8 * (1 + abs(d))
    assert p.real == pytest.approx(d, rel=1e-8, abs=1e-8 * (1 + np.max(np.abs(A))) ** 4)


@settings(max_examples=100, deadline=None)
@given(well_conditioned, arrays(np.float64, (4,), elements=st.floats(-10, 10)))
def test_solve_residual_bound(A, b):
    x = linalg.solve(A, b)
    bound = 1e-10 * (np.linalg.norm(A, np.inf) * np.linalg.norm(x, np.inf) + np.linalg.norm(b, np.inf))
    assert np.linalg.norm(A @ x - b, np.inf) <= bound + 1e-300
