import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eigshape.assembly import (apply_operator, assemble_dense, dirichlet_energy, energy_breakdown,
                               local_stiffness, mass, reference_mass)
from eigshape.coeff import make_identity, make_random_piecewise
from eigshape.mesh import Box, ScalarField, build_mesh


def _quadrature_dirichlet(u, A):
    """Independent oracle: 3-point Gauss rule per axis on the bilinear interpolant (2D)."""
    mesh = u.mesh
    hx, hy = mesh.h
    x, w = np.polynomial.legendre.leggauss(3)
    x, w = 0.5 * (x + 1), 0.5 * w
    v = u.values
    total = 0.0
    for i in range(mesh.cell_shape[0]):
        for j in range(mesh.cell_shape[1]):
            u00, u10, u01, u11 = v[i, j], v[i + 1, j], v[i, j + 1], v[i + 1, j + 1]
            for a, wa in zip(x, w):
                for b, wb in zip(x, w):
                    gx = ((u10 - u00) * (1 - b) + (u11 - u01) * b) / hx
                    gy = ((u01 - u00) * (1 - a) + (u11 - u10) * a) / hy
                    g = np.array([gx, gy])
                    total += wa * wb * hx * hy * g @ A.matrices[i, j] @ g
    return total


def _random_field(mesh, rng):
    vals = rng.normal(size=mesh.vertex_shape)
    vals[mesh.boundary] = 0.0
    return ScalarField(mesh, vals)


def test_zero_field():
    m = build_mesh(Box((1.0, 1.0)), 4)
    u = ScalarField.zeros(m)
    assert dirichlet_energy(u, make_identity(m)) == 0.0
    assert mass(u) == 0.0
    assert not apply_operator(u, make_identity(m)).values.any()


def test_hat_function_energy():
    for h in (0.25, 0.1):
        m = build_mesh(Box((1.0, 1.0)), round(1 / h))
        u = ScalarField.zeros(m)
        u.values[2, 2] = 1.0
        A = make_identity(m)
        assert _quadrature_dirichlet(u, A) == pytest.approx(8 / 3, rel=1e-14)
        assert dirichlet_energy(u, A) == pytest.approx(8 / 3, rel=1e-14)


def test_matches_quadrature_oracle_with_full_matrices():
    m = build_mesh(Box((1.0, 2.0)), (5, 7))
    A = make_random_piecewise(m, 3, 0.5, 3.0, 2)
    u = _random_field(m, np.random.default_rng(0))
    assert dirichlet_energy(u, A) == pytest.approx(_quadrature_dirichlet(u, A), rel=1e-12)


def test_linear_in_coefficient():
    m = build_mesh(Box((1.0, 1.0)), 6)
    u = _random_field(m, np.random.default_rng(1))
    assert dirichlet_energy(u, make_identity(m, 2.0)) == 2 * dirichlet_energy(u, make_identity(m))


def test_mass_of_constant_on_unit_box():
    m = build_mesh(Box((1.0, 1.0)), 5)
    assert mass(ScalarField(m, np.ones(m.vertex_shape))) == pytest.approx(1.0, rel=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6), st.floats(-5, 5))
def test_mass_homogeneous(seed, c):
    m = build_mesh(Box((1.0, 1.0)), 5)
    u = _random_field(m, np.random.default_rng(seed))
    assert mass(ScalarField(m, c * u.values)) == pytest.approx(c * c * mass(u), rel=1e-12, abs=1e-300)


def test_operator_symmetry_and_consistency():
    rng = np.random.default_rng(2)
    m = build_mesh(Box((1.0, 1.0)), 7)
    A = make_random_piecewise(m, 5, 1.0, 4.0, 2)
    for _ in range(20):
        u, v = _random_field(m, rng), _random_field(m, rng)
        Lu, Lv = apply_operator(u, A).values, apply_operator(v, A).values
        scale = np.abs(Lu).sum() * np.abs(v.values).sum()
        assert abs(np.sum(Lu * v.values) - np.sum(u.values * Lv)) <= 1e-12 * scale
        e = dirichlet_energy(u, A)
        assert np.sum(Lu * u.values) == pytest.approx(e, rel=1e-12)


def test_operator_is_gradient_of_half_energy():
    rng = np.random.default_rng(3)
    m = build_mesh(Box((1.0, 1.0)), 6)
    A = make_random_piecewise(m, 6, 1.0, 4.0, 2)
    u = _random_field(m, rng)
    g = apply_operator(u, A).values
    step = 1e-6
    for idx in [tuple(x) for x in np.argwhere(m.interior)[:10]]:
        up, um = u.values.copy(), u.values.copy()
        up[idx] += step
        um[idx] -= step
        fd = (dirichlet_energy(ScalarField(m, up), A) - dirichlet_energy(ScalarField(m, um), A)) / (4 * step)
        assert fd == pytest.approx(g[idx], rel=1e-6)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_coercivity_sandwich(seed):
    m = build_mesh(Box((1.0, 1.0)), 6)
    A = make_random_piecewise(m, seed, 0.5, 6.0, 2)
    u = _random_field(m, np.random.default_rng(seed))
    e, e0 = dirichlet_energy(u, A), dirichlet_energy(u, make_identity(m))
    assert 0.5 * e0 * (1 - 1e-12) <= e <= 6.0 * e0 * (1 + 1e-12)


def test_dense_assembly_matches_matrix_free():
    m = build_mesh(Box((1.0, 1.0, 1.0)), 3)
    A = make_random_piecewise(m, 1, 1.0, 4.0, 1)
    K = assemble_dense(m, local_stiffness(A))
    M = assemble_dense(m, reference_mass(m.h))
    u = _random_field(m, np.random.default_rng(4))
    assert np.allclose(K, K.T, atol=1e-14)
    assert u.flat @ K @ u.flat == pytest.approx(dirichlet_energy(u, A), rel=1e-12)
    b = energy_breakdown(u, A)
    assert u.flat @ M @ u.flat == pytest.approx(b.mass, rel=1e-12)
