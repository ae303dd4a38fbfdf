import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from xover.errors import ValidationError
from xover.linalg import (
    Tolerances,
    centering_matrix,
    cholesky,
    det,
    direct_sum,
    kron,
    pseudo_inverse,
    reflexive_ginverse,
    residual_projector,
    sym_eigen,
)


def ar1(p, r):
    i = np.arange(p)
    return r ** np.abs(i[:, None] - i[None, :]).astype(float)


def bisection_roots(f, lo, hi, grid=4001, iters=200):
    """Roots of a scalar function by sign changes on a grid, refined by bisection."""
    xs = np.linspace(lo, hi, grid)
    fs = [f(x) for x in xs]
    roots = []
    for a, b, fa, fb in zip(xs[:-1], xs[1:], fs[:-1], fs[1:]):
        if fa == 0:
            roots.append(a)
            continue
        if fa * fb < 0:
            for _ in range(iters):
                m = 0.5 * (a + b)
                fm = f(m)
                if fa * fm <= 0:
                    b = m
                else:
                    a, fa = m, fm
            roots.append(0.5 * (a + b))
    return np.array(roots)


def det3(m):
    return (
        m[0, 0] * (m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1])
        - m[0, 1] * (m[1, 0] * m[2, 2] - m[1, 2] * m[2, 0])
        + m[0, 2] * (m[1, 0] * m[2, 1] - m[1, 1] * m[2, 0])
    )


# sym_eigen

def test_eigen_centering_and_identity():
    np.testing.assert_allclose(sym_eigen(centering_matrix(3)).values, [0, 1, 1], atol=1e-14)
    np.testing.assert_allclose(sym_eigen(np.eye(2)).values, [1, 1])


def test_eigen_ar1_matches_characteristic_cubic():
    v = ar1(3, 0.5)
    oracle = bisection_roots(lambda x: det3(v - x * np.eye(3)), 0.0, 3.0)
    got = sym_eigen(v).values
    assert len(oracle) == 3 and np.all(got > 0)
    np.testing.assert_allclose(got, oracle, rtol=1e-12)


def test_eigen_rejects_bad_input():
    with pytest.raises(ValidationError):
        sym_eigen(np.ones((2, 3)))
    with pytest.raises(ValidationError):
        sym_eigen([[1.0, 2.0], [0.0, 1.0]])


symmetric = st.integers(1, 12).flatmap(
    lambda n: hnp.arrays(np.float64, (n, n), elements=st.floats(-10, 10, allow_subnormal=False))
).map(lambda a: a + a.T)


@settings(max_examples=60, deadline=None)
@given(symmetric)
def test_eigen_reconstruction_property(m):
    eig = sym_eigen(m)
    scale = max(1.0, float(np.max(np.abs(m))))
    assert np.all(np.diff(eig.values) >= 0)
    np.testing.assert_allclose(eig.reconstruct(), m, atol=1e-9 * scale)
    np.testing.assert_allclose(eig.vectors.T @ eig.vectors, np.eye(len(m)), atol=1e-10)


def test_eigen_deterministic(rng):
    a = rng.normal(size=(9, 9))
    a = a + a.T
    e1, e2 = sym_eigen(a), sym_eigen(a.copy())
    assert np.array_equal(e1.values, e2.values) and np.array_equal(e1.vectors, e2.vectors)


# pseudo_inverse

def test_pinv_examples():
    h = centering_matrix(3)
    np.testing.assert_allclose(pseudo_inverse(h), h, atol=1e-12)
    assert np.array_equal(pseudo_inverse(np.zeros((3, 3))), np.zeros((3, 3)))
    np.testing.assert_allclose(pseudo_inverse(np.diag([2.0, 0.0])), np.diag([0.5, 0.0]), atol=1e-15)


def test_pinv_absolute_scale():
    noise = np.array([[1e-16, 3e-17], [3e-17, -2e-16]])
    with pytest.raises(ValidationError):
        pseudo_inverse(noise)
    assert not pseudo_inverse(noise, scale=1.0).any()
    np.testing.assert_allclose(pseudo_inverse(np.diag([2.0, 1e-12]), scale=1.0), np.diag([0.5, 0.0]))


def test_pinv_rejects_indefinite():
    with pytest.raises(ValidationError):
        pseudo_inverse(np.diag([1.0, -1.0]))


nnd = st.tuples(st.integers(1, 8), st.integers(0, 8), st.integers(0, 2**32 - 1)).map(
    lambda a: (lambda g: g @ g.T)(np.random.default_rng(a[2]).normal(size=(a[0], min(a[1], a[0]))))
)


@settings(max_examples=60, deadline=None)
@given(nnd)
def test_pinv_penrose_identities(m):
    x = pseudo_inverse(m)
    s = max(1.0, float(np.max(np.abs(m))))
    sx = max(1.0, float(np.max(np.abs(x))))
    tol = 1e-9 * s * sx * s
    np.testing.assert_allclose(m @ x @ m, m, atol=tol)
    np.testing.assert_allclose(x @ m @ x, x, atol=1e-9 * sx * s * sx)
    np.testing.assert_allclose(m @ x, (m @ x).T, atol=1e-9 * s * sx)
    np.testing.assert_allclose(x @ m, (x @ m).T, atol=1e-9 * s * sx)
    np.testing.assert_allclose(x, np.linalg.pinv(m, rcond=1e-9, hermitian=True), atol=1e-7 * sx)


def test_reflexive_ginverse_is_reflexive(rng):
    b = rng.normal(size=(6, 3))
    m = b @ b.T
    g = reflexive_ginverse(m, rng.normal(size=(6, 6)), rng.normal(size=(6, 6)))
    np.testing.assert_allclose(m @ g @ m, m, atol=1e-9)
    np.testing.assert_allclose(g @ m @ g, g, atol=1e-7 * np.abs(g).max() ** 2)
    assert not np.allclose(g, pseudo_inverse(m))


# small helpers

def test_centering_matrix():
    assert np.array_equal(centering_matrix(1), [[0.0]])
    np.testing.assert_allclose(centering_matrix(2), [[0.5, -0.5], [-0.5, 0.5]])
    h = centering_matrix(3)
    np.testing.assert_allclose(np.diag(h), 2 / 3)
    np.testing.assert_allclose(h[0, 1], -1 / 3)
    np.testing.assert_allclose(h @ h, h, atol=1e-15)
    with pytest.raises(ValidationError):
        centering_matrix(0)


def test_kron_examples():
    r = 0.3
    b = np.array([[1, r], [r, 1]])
    k = kron(np.eye(2), b)
    assert np.array_equal(k[:2, :2], b) and np.array_equal(k[2:, 2:], b) and not k[:2, 2:].any()
    assert np.array_equal(kron([[2.5]], b), 2.5 * b)
    assert np.array_equal(kron(np.ones((2, 1)), np.eye(2)), np.vstack([np.eye(2), np.eye(2)]))


def test_direct_sum_examples():
    assert np.array_equal(direct_sum([[[1.0]], [[2.0]]]), np.diag([1.0, 2.0]))
    assert np.array_equal(direct_sum([np.eye(2)]), np.eye(2))
    h = centering_matrix(3)
    m = direct_sum([h, 2 * h])
    assert m.shape == (6, 6) and not m[:3, 3:].any() and not m[3:, :3].any()
    assert np.array_equal(m[3:, 3:], 2 * h)
    with pytest.raises(ValidationError):
        direct_sum([])


def test_residual_projector_examples():
    np.testing.assert_allclose(residual_projector(np.ones((3, 1))), centering_matrix(3), atol=1e-14)
    np.testing.assert_allclose(residual_projector(np.eye(2)), np.zeros((2, 2)), atol=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 9), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_residual_projector_properties(rows, cols, seed):
    g = np.random.default_rng(seed)
    m = g.normal(size=(rows, cols))
    if cols > 1:
        m[:, -1] = m[:, 0]  # force a rank deficiency
    pr = residual_projector(m)
    np.testing.assert_allclose(pr @ m, 0, atol=1e-9)
    np.testing.assert_allclose(pr @ pr, pr, atol=1e-9)
    # trace of an idempotent matrix is its rank
    assert round(float(np.trace(pr))) == rows - np.linalg.matrix_rank(m)


def test_cholesky_examples():
    np.testing.assert_array_equal(cholesky(np.eye(3)), np.eye(3))
    np.testing.assert_allclose(cholesky(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))
    v = ar1(3, 0.3)
    lo = cholesky(v)
    assert np.allclose(np.triu(lo, 1), 0)
    np.testing.assert_allclose(lo @ lo.T, v, atol=1e-12)
    with pytest.raises(ValidationError):
        cholesky(np.diag([1.0, 0.0]))


def test_det_examples(rng):
    assert det(np.eye(3)) == pytest.approx(1.0)
    assert det(np.diag([2.0, 3.0])) == pytest.approx(6.0)
    a = rng.normal(size=(4, 4))
    assert det(a) == pytest.approx(np.linalg.det(a))
    s = a @ a.T
    assert det(s) == pytest.approx(np.linalg.det(s), rel=1e-10)


def test_tolerances_validated():
    with pytest.raises(ValidationError):
        Tolerances(eig_tol=-1.0)
