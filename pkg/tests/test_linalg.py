import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from numpy.testing import assert_allclose, assert_array_equal

from normalforge.core import InvalidInputError
from normalforge.linalg import jacobi_eigh, smallest_eigenvector_sym


def test_diagonal_example():
    assert_array_equal(smallest_eigenvector_sym(np.diag([1.0, 2.0, 3.0])), [1, 0, 0])


def test_identity_tie_break():
    assert_array_equal(smallest_eigenvector_sym(np.eye(3)), [1, 0, 0])
    assert_array_equal(smallest_eigenvector_sym(np.eye(4)), [1, 0, 0, 0])


def test_sign_canonical():
    v = smallest_eigenvector_sym(np.diag([5.0, -2.0, 3.0]))
    assert_array_equal(v, [0, 1, 0])


@pytest.mark.parametrize("seed", range(10))
def test_recovers_known_nullspace(seed):
    rng = np.random.default_rng(seed)
    n = rng.normal(size=3)
    n /= np.linalg.norm(n)
    M = np.zeros((3, 3))
    for _ in range(20):
        v = rng.normal(size=3)
        v -= v.dot(n) * n
        v /= np.linalg.norm(v)
        M += np.outer(v, v)
    got = smallest_eigenvector_sym(M)
    assert min(np.linalg.norm(got - n), np.linalg.norm(got + n)) < 1e-8


def test_rejects_bad_input():
    with pytest.raises(InvalidInputError):
        smallest_eigenvector_sym(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(InvalidInputError):
        smallest_eigenvector_sym(np.ones((2, 3)))
    with pytest.raises(InvalidInputError):
        smallest_eigenvector_sym(np.array([[np.nan, 0], [0, 1.0]]))


sym = arrays(np.float64, st.sampled_from([(3, 3), (4, 4)]), elements=st.floats(-10, 10)).map(
    lambda a: (a + a.T) / 2)


@settings(max_examples=200, deadline=None)
@given(M=sym)
def test_decomposition_matches_numpy(M):
    n = M.shape[0]
    a = M.copy()
    w = np.empty(n)
    V = np.empty((n, n))
    sweeps = jacobi_eigh(a, w, V)
    assert sweeps <= 50
    assert_allclose(V.T @ V, np.eye(n), atol=1e-12)
    scale = max(1.0, np.abs(M).max())
    assert_allclose(V @ np.diag(w) @ V.T, M, atol=1e-12 * scale)
    assert_allclose(np.sort(w), np.linalg.eigvalsh(M), atol=1e-12 * scale)


@settings(max_examples=200, deadline=None)
@given(M=sym)
def test_smallest_is_an_eigenvector_of_the_smallest_eigenvalue(M):
    v = smallest_eigenvector_sym(M)
    lo = np.linalg.eigvalsh(M)[0]
    scale = max(1.0, np.abs(M).max())
    assert np.linalg.norm(v) == pytest.approx(1.0)
    assert_allclose(M @ v, lo * v, atol=1e-9 * scale)
    first = v[np.abs(v) > 1e-12][0]
    assert first > 0
