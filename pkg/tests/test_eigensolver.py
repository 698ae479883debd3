import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from eigshape import _dense
from eigshape.assembly import mass
from eigshape.coeff import make_checkerboard, make_identity, make_random_piecewise
from eigshape.eigensolver import (EigenSolverError, dense_oracle, inflate_to_volume, lambda1,
                                  monotonicity_check, restricted_matrices)
from eigshape.mesh import Box, DomainMask, ball_indicator, build_mesh


def _full(mesh):
    return DomainMask(mesh, np.ones(mesh.vertex_shape, dtype=bool))


def _ball(mesh, radius, center=None):
    c = mesh.box.center if center is None else center
    return DomainMask.from_field(ball_indicator(mesh, c, radius), 0.5)


def test_unit_square_converges_to_two_pi_squared():
    exact = 2 * math.pi ** 2
    errs = []
    for n in (32, 128):
        m = build_mesh(Box((1.0, 1.0)), n)
        errs.append(abs(lambda1(_full(m), make_identity(m)).lambda1 - exact) / exact)
    assert errs[1] <= 5e-3
    assert errs[1] < errs[0] / 10


def test_unit_square_matches_dense_at_16():
    m = build_mesh(Box((1.0, 1.0)), 16)
    a = lambda1(_full(m), make_identity(m)).lambda1
    b = dense_oracle(_full(m), make_identity(m)).lambda1
    assert a == pytest.approx(b, rel=1e-10)


def test_scaling_by_constant():
    m = build_mesh(Box((1.0, 1.0)), 16)
    mask = _ball(m, 0.4)
    a = lambda1(mask, make_identity(m)).lambda1
    b = lambda1(mask, make_identity(m, 3.5)).lambda1
    assert b == pytest.approx(3.5 * a, rel=1e-9)


def test_eigenresult_invariants():
    m = build_mesh(Box((1.0, 1.0)), 20)
    A = make_random_piecewise(m, 4, 1.0, 4.0, 3)
    mask = _ball(m, 0.4)
    res = lambda1(mask, A, tol=1e-10)
    u = res.eigenfunction
    assert np.all(u.values >= -1e-12)
    assert not u.values[~mask.dofs].any()
    assert mass(u) == pytest.approx(1.0, rel=1e-10)
    K, M, index = restricted_matrices(mask, A)
    x = u.values[index >= 0]
    assert abs(x @ K @ x / (x @ M @ x) - res.lambda1) <= 10 * 1e-10 * res.lambda1
    assert res.residual < 1e-10


def test_single_vertex_pencil():
    m = build_mesh(Box((1.0, 1.0)), 3)
    act = np.zeros(m.vertex_shape, dtype=bool)
    act[1, 1] = True
    A = make_random_piecewise(m, 0, 1.0, 4.0, 1)
    K, M, _ = restricted_matrices(DomainMask(m, act), A)
    assert K.shape == (1, 1)
    assert dense_oracle(DomainMask(m, act), A).lambda1 == pytest.approx(K[0, 0] / M[0, 0], rel=1e-15)


def test_dense_oracle_against_scipy():
    m = build_mesh(Box((1.0, 1.0)), 12)
    A = make_random_piecewise(m, 9, 1.0, 4.0, 2)
    mask = _ball(m, 0.45)
    K, M, _ = restricted_matrices(mask, A)
    ref = scipy.linalg.eigh(K, M, eigvals_only=True)[0]
    assert dense_oracle(mask, A).lambda1 == pytest.approx(ref, rel=1e-12)


def test_symmetric_mask_gives_symmetric_eigenfunction():
    m = build_mesh(Box((1.0, 1.0)), 14)
    A = make_checkerboard(m, 7, np.eye(2), 4 * np.eye(2))
    assert np.array_equal(A.matrices[:, :, 0, 0], A.matrices[:, :, 0, 0].T)
    mask = _ball(m, 0.42)
    for res in (dense_oracle(mask, A), lambda1(mask, A, tol=1e-12)):
        u = res.eigenfunction.values
        assert np.max(np.abs(u - u.T)) <= 1e-8 * np.max(np.abs(u))


def _blob(mesh, rng):
    c = rng.uniform(0.3, 0.7, size=2)
    return DomainMask(mesh, np.linalg.norm(mesh.coordinates - c, axis=-1) < rng.uniform(0.15, 0.35))


def test_agrees_with_dense_on_random_masks():
    rng = np.random.default_rng(5)
    for k in range(20):
        m = build_mesh(Box((1.0, 1.0)), int(rng.integers(6, 17)))
        A = make_random_piecewise(m, k, 1.0, 4.0, 2)
        mask = _blob(m, rng)
        if not mask.dofs.any():
            continue
        assert lambda1(mask, A, tol=1e-12).lambda1 == pytest.approx(dense_oracle(mask, A).lambda1, rel=1e-8)


def test_empty_mask_rejected():
    m = build_mesh(Box((1.0, 1.0)), 8)
    with pytest.raises(ValueError, match="no active"):
        lambda1(DomainMask(m, np.zeros(m.vertex_shape, dtype=bool)), make_identity(m))


def test_iteration_cap_reported():
    m = build_mesh(Box((1.0, 1.0)), 16)
    with pytest.raises(EigenSolverError, match="did not converge"):
        lambda1(_full(m), make_identity(m), tol=1e-14, max_iter=2)


def test_dense_limit():
    m = build_mesh(Box((1.0, 1.0)), 70)
    with pytest.raises(ValueError, match="limited"):
        dense_oracle(_full(m), make_identity(m))


def test_monotonicity_examples():
    m = build_mesh(Box((3.0, 3.0)), 48)
    A = make_identity(m)
    small, big = _ball(m, 0.3), _ball(m, 0.5)
    assert monotonicity_check(big, big, A)
    assert monotonicity_check(small, big, A)
    ls, lb = lambda1(small, A).lambda1, lambda1(big, A).lambda1
    assert ls > lb
    # first-order scaling with the radius
    assert ls / lb == pytest.approx((0.5 / 0.3) ** 2, rel=0.15)
    with pytest.raises(ValueError, match="contained"):
        monotonicity_check(big, small, A)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_monotonicity_random_nested(seed):
    rng = np.random.default_rng(seed)
    m = build_mesh(Box((1.0, 1.0)), 14)
    A = make_random_piecewise(m, seed, 1.0, 4.0, 2)
    outer = DomainMask(m, np.linalg.norm(m.coordinates - 0.5, axis=-1) < 0.4)
    inner = DomainMask(m, outer.active & (rng.random(m.vertex_shape) < 0.8))
    if not inner.dofs.any():
        return
    assert monotonicity_check(inner, outer, A)


def test_inflate_identity_at_target():
    m = build_mesh(Box((1.0, 1.0)), 8)
    mask = _ball(m, 0.3)
    out = inflate_to_volume(mask, mask.measure)
    assert np.array_equal(out.active, mask.active)


def test_inflate_single_cell_to_block():
    m = build_mesh(Box((1.0, 1.0)), 10)
    act = np.zeros(m.vertex_shape, dtype=bool)
    act[4:6, 4:6] = True
    mask = DomainMask(m, act)
    out = inflate_to_volume(mask, 9 * m.cell_volume)
    # brute-force: smallest dilation radius over all vertex distances reaching 9 cells
    pts = m.coordinates[act]
    dist = np.min(np.linalg.norm(m.coordinates[..., None, :] - pts, axis=-1), axis=-1)
    for r in np.unique(dist):
        cand = DomainMask(m, dist <= r + 1e-12)
        if cand.measure >= 9 * m.cell_volume - 1e-12:
            break
    assert np.array_equal(out.active, cand.active)
    expected = np.zeros_like(act)
    expected[3:7, 3:7] = True
    assert np.array_equal(out.active, expected)


def test_inflate_lowers_eigenvalue_and_hits_target():
    m = build_mesh(Box((3.0, 3.0)), 48)
    A = make_identity(m)
    mask = _ball(m, 0.5)
    out = inflate_to_volume(mask, 1.0)
    assert mask <= out
    assert 1.0 <= out.measure <= 1.0 + 2 * math.pi * 0.6 * 2 * m.h[0]
    assert lambda1(out, A).lambda1 <= lambda1(mask, A).lambda1


def test_inflate_errors():
    m = build_mesh(Box((1.0, 1.0)), 8)
    mask = _ball(m, 0.3)
    with pytest.raises(ValueError, match="exceeds"):
        inflate_to_volume(mask, 0.0)
    with pytest.raises(ValueError, match="unreachable"):
        inflate_to_volume(mask, 2.0)
    with pytest.raises(ValueError, match="empty"):
        inflate_to_volume(DomainMask(m, np.zeros(m.vertex_shape, dtype=bool)), 0.5)


# -- dense kernels ------------------------------------------------------

def _spd(rng, n):
    a = rng.normal(size=(n, n))
    return a @ a.T + n * np.eye(n)


def test_cholesky_and_substitution():
    rng = np.random.default_rng(0)
    a = _spd(rng, 9)
    L = _dense.cholesky(a)
    np.testing.assert_allclose(L @ L.T, a, rtol=1e-13, atol=1e-12)
    b = rng.normal(size=9)
    np.testing.assert_allclose(_dense.forward_substitute(L, b), np.linalg.solve(L, b), rtol=1e-12)
    np.testing.assert_allclose(_dense.back_substitute(L.T, b), np.linalg.solve(L.T, b), rtol=1e-12)
    with pytest.raises(_dense.DenseEigenError):
        _dense.cholesky(-np.eye(3))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(2, 30))
def test_tridiagonal_eigenvalues_match_numpy(seed, n):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, n))
    a = a + a.T
    diag, off, refl = _dense.tridiagonalize(a)
    ev = np.sort(_dense.tridiagonal_eigenvalues(diag, off))
    np.testing.assert_allclose(ev, np.linalg.eigvalsh(a), atol=1e-10 * max(1.0, np.abs(ev).max()))


def test_tridiagonal_solve():
    rng = np.random.default_rng(1)
    n = 12
    diag, off = rng.normal(size=n), rng.normal(size=n - 1)
    T = np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)
    b = rng.normal(size=n)
    x = _dense.tridiagonal_solve(diag, off, 0.3, b)
    np.testing.assert_allclose((T - 0.3 * np.eye(n)) @ x, b, atol=1e-10)


def test_generalized_pair_normalized():
    rng = np.random.default_rng(2)
    K, M = _spd(rng, 15), _spd(rng, 15)
    lam, x = _dense.smallest_generalized_eigenpair(K, M)
    assert lam == pytest.approx(scipy.linalg.eigh(K, M, eigvals_only=True)[0], rel=1e-12)
    assert x @ M @ x == pytest.approx(1.0, rel=1e-12)
    np.testing.assert_allclose(K @ x, lam * M @ x, atol=1e-9 * np.abs(K @ x).max())
