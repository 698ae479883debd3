import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eigshape.assembly import apply_operator, mass
from eigshape.coeff import make_checkerboard, make_identity, make_random_piecewise
from eigshape.functional import (FunctionalValue, PenaltyParams, descent_direction, evaluate,
                                 exact_volume, smeared_volume, support_volume)
from eigshape.mesh import Box, ScalarField, ball_indicator, build_mesh


@pytest.fixture
def mesh():
    return build_mesh(Box((3.0, 3.0)), 24)


def _nonneg_field(mesh, rng, scale=1.0):
    vals = np.maximum(rng.normal(size=mesh.vertex_shape), 0.0) * scale
    vals[mesh.boundary] = 0.0
    return ScalarField(mesh, vals)


def test_params_validated():
    with pytest.raises(ValueError):
        PenaltyParams(delta=0.0)
    with pytest.raises(ValueError):
        PenaltyParams(smear_s=float("nan"))


def test_zero_field(mesh):
    u = ScalarField.zeros(mesh)
    p = PenaltyParams(1e-3, 1e-2, 0.05)
    val = evaluate(u, make_identity(mesh), p)
    assert smeared_volume(u, 0.5) == 0.0
    assert val.total == pytest.approx(1e3, rel=1e-15)
    assert val.dirichlet == 0.0 and val.volume_penalty == 0.0


def test_indicator_smeared_volume_is_lumped_support(mesh):
    u = ball_indicator(mesh, mesh.box.center, 0.5)
    expected = mesh.vertex_weights[u.values > 0].sum()
    assert smeared_volume(u, 0.5) == pytest.approx(expected, rel=1e-15)


def test_saturation_matches_exact_volume(mesh):
    rng = np.random.default_rng(0)
    u = _nonneg_field(mesh, rng)
    u.values[u.values > 0] += 0.1
    assert smeared_volume(u, 0.1) == pytest.approx(exact_volume(u, 0.0), rel=1e-14)
    assert support_volume(u) == pytest.approx(exact_volume(u, 0.0), rel=1e-14)


def test_negative_values_rejected(mesh):
    u = ScalarField.zeros(mesh)
    u.values[3, 3] = -1e-3
    with pytest.raises(ValueError, match="nonnegative"):
        smeared_volume(u, 0.1)
    with pytest.raises(ValueError):
        descent_direction(u, make_identity(mesh), PenaltyParams())


def test_unit_mass_within_volume_gives_pure_dirichlet(mesh):
    u = ball_indicator(mesh, mesh.box.center, 0.4)
    u = ScalarField(mesh, u.values / np.sqrt(mass(u)))
    A = make_identity(mesh)
    val = evaluate(u, A, PenaltyParams(1e-3, 1e-2, 0.05))
    assert val.smeared_volume <= 1.0
    assert val.mass_penalty == pytest.approx(0.0, abs=1e-9)
    assert val.total == pytest.approx(val.dirichlet, rel=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6), st.floats(0.01, 1.0))
def test_breakdown_sums(seed, s):
    m = build_mesh(Box((3.0, 3.0)), 12)
    u = _nonneg_field(m, np.random.default_rng(seed))
    val = evaluate(u, make_random_piecewise(m, seed, 1.0, 4.0, 3), PenaltyParams(smear_s=s))
    assert val.total == pytest.approx(val.dirichlet + val.mass_penalty + val.volume_penalty, rel=1e-15)
    assert val.mass_penalty >= 0 and val.volume_penalty >= 0
    assert 0.0 <= val.smeared_volume <= m.box.volume * (1 + 1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6), st.floats(0.01, 2.0))
def test_smeared_volume_monotone(seed, s):
    m = build_mesh(Box((3.0, 3.0)), 12)
    rng = np.random.default_rng(seed)
    u1 = _nonneg_field(m, rng)
    u2 = ScalarField(m, u1.values + np.abs(rng.normal(size=m.vertex_shape)))
    assert smeared_volume(u1, s) <= smeared_volume(u2, s)


def test_smeared_volume_converges_to_support():
    m = build_mesh(Box((3.0, 3.0)), 12)
    u = _nonneg_field(m, np.random.default_rng(1))
    u.values[u.values > 0] += 0.2
    for s in (0.2, 0.1, 0.01):
        assert smeared_volume(u, s) == pytest.approx(support_volume(u), rel=1e-14)
    assert smeared_volume(u, 10.0) < support_volume(u)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_absolute_value_lowers_energy_and_keeps_support(seed):
    m = build_mesh(Box((3.0, 3.0)), 12)
    rng = np.random.default_rng(seed)
    vals = rng.normal(size=m.vertex_shape)
    vals[m.boundary] = 0.0
    u, a = ScalarField(m, vals), ScalarField(m, np.abs(vals))
    A = make_identity(m)
    p = PenaltyParams()
    fu, fa = evaluate(u, A, p, volume_mode="exact"), evaluate(a, A, p, volume_mode="exact")
    assert fa.dirichlet <= fu.dirichlet * (1 + 1e-12)
    assert fa.volume_penalty == fu.volume_penalty


def test_directional_derivative():
    rng = np.random.default_rng(2)
    m = build_mesh(Box((1.0, 1.0)), 10)
    A = make_random_piecewise(m, 2, 1.0, 4.0, 2)
    s = 0.3
    for target in (0.2, 5.0):
        vals = rng.uniform(0.35, 1.0, size=m.vertex_shape)
        vals[m.boundary] = 0.0
        vals[3:5, 3:5] = 0.1
        p = PenaltyParams(1e-3, 1e-2, s, target_volume=target)
        g = descent_direction(ScalarField(m, vals), A, p).values
        w = rng.normal(size=m.vertex_shape)
        w[m.boundary] = 0.0
        step = 1e-6
        fd = (evaluate(ScalarField(m, vals + step * w), A, p).total
              - evaluate(ScalarField(m, vals - step * w), A, p).total) / (2 * step)
        assert np.sum(g * w) == pytest.approx(fd, rel=1e-5)


def test_volume_gradient_on_thin_layer(mesh):
    u = ball_indicator(mesh, mesh.box.center, 1.2)
    u.values[u.values == 0] = 0.0
    u.values[(u.values == 0) & mesh.interior] = 0.01
    p = PenaltyParams(1e-3, 1e-2, 0.05)
    A = make_identity(mesh)
    assert smeared_volume(u, p.smear_s) > 1.0
    g = descent_direction(u, A, p).values
    base = descent_direction(u, A, PenaltyParams(1e-3, 1e-2, 0.05, target_volume=100.0)).values
    layer = (u.values > 0) & (u.values < p.smear_s) & mesh.interior
    np.testing.assert_allclose((g - base)[layer], mesh.vertex_weights[layer] / (p.epsilon * p.smear_s),
                               rtol=1e-12)
    assert not (g - base)[~layer].any()


def test_coefficient_scaling_changes_only_stiffness(mesh):
    rng = np.random.default_rng(3)
    u = _nonneg_field(mesh, rng, 0.2)
    p = PenaltyParams()
    A1, A2 = make_identity(mesh), make_identity(mesh, 2.0)
    diff = descent_direction(u, A2, p).values - descent_direction(u, A1, p).values
    np.testing.assert_allclose(diff, 2 * apply_operator(u, A1).values, atol=1e-9)


def test_translation_invariance():
    m = build_mesh(Box((3.0, 3.0)), 48)
    A = make_checkerboard(m, 4, np.eye(2), 10 * np.eye(2))
    p = PenaltyParams(1e-3, 1e-2, 0.05)
    r = np.linalg.norm(m.coordinates - [1.0, 1.0], axis=-1)
    bump = np.maximum(0.5 - r, 0.0)
    shifted = np.roll(bump, (8, 16), axis=(0, 1))
    a = evaluate(ScalarField(m, bump), A, p)
    b = evaluate(ScalarField(m, shifted), A, p)
    assert b.total == pytest.approx(a.total, rel=1e-12)


def test_value_dict():
    v = FunctionalValue(1.0, 0.5, 0.25, 0.25, 1.0, 1.0)
    assert set(v.to_dict()) >= {"total", "dirichlet", "mass_penalty", "volume_penalty"}
