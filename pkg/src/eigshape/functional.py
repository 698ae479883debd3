"""Penalized eigenvalue functional and its smoothed first variation.

``F(u) = int grad u . A grad u + |int u^2 - 1| / delta + (|{u != 0}| - 1)_+ / epsilon``

The support measure has zero derivative almost everywhere, so the optimizer
works with a smeared measure ``sum_v w_v * min(u_v / s, 1)`` whose width
``s`` is driven to zero by continuation. Vertex weights ``w_v`` are the
lumped cell volumes of :attr:`Mesh.vertex_weights`.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .assembly import _check_same_mesh, cell_dirichlet, cell_mass, mass_action, stiffness_action
from .coeff import CoeffField
from .mesh import ScalarField


@dataclass(frozen=True)
class PenaltyParams:
    delta: float = 1e-3
    epsilon: float = 1e-2
    smear_s: float = 0.05
    target_volume: float = 1.0
    target_mass: float = 1.0

    def __post_init__(self):
        for name in ("delta", "epsilon", "smear_s", "target_volume", "target_mass"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val > 0):
                raise ValueError(f"{name} must be positive and finite, got {val}")

    def replace(self, **changes) -> "PenaltyParams":
        return PenaltyParams(**{**asdict(self), **changes})


@dataclass(frozen=True)
class FunctionalValue:
    """Breakdown of one functional evaluation.

    ``smeared_volume`` is NaN when the field has negative values;
    ``exact_volume`` counts vertices above the smearing width and
    ``support_volume`` those with a nonzero value.
    """

    total: float
    dirichlet: float
    mass_penalty: float
    volume_penalty: float
    smeared_volume: float
    exact_volume: float
    support_volume: float = float("nan")
    mass: float = float("nan")

    def to_dict(self) -> dict:
        return asdict(self)


def _check_nonnegative(u: ScalarField):
    if np.any(u.values < 0):
        i = int(np.argmin(u.values))
        raise ValueError(
            f"field must be nonnegative; vertex {i} has value {u.values.flat[i]!r}")


def smeared_volume(u: ScalarField, s: float) -> float:
    if not s > 0:
        raise ValueError(f"smearing width must be positive, got {s}")
    _check_nonnegative(u)
    w = u.mesh.vertex_weights
    return float(np.sum(w * np.minimum(u.values / s, 1.0)))


def exact_volume(u: ScalarField, threshold: float = 0.0) -> float:
    """Lumped measure of ``{u > threshold}``."""
    return float(np.sum(u.mesh.vertex_weights[u.values > threshold]))


def support_volume(u: ScalarField) -> float:
    """Lumped measure of ``{u != 0}``."""
    return float(np.sum(u.mesh.vertex_weights[u.values != 0.0]))


def evaluate(u: ScalarField, A: CoeffField, p: PenaltyParams,
             volume_mode: str = "smeared") -> FunctionalValue:
    """Evaluate the penalized functional.

    With ``volume_mode="exact"`` the volume penalty uses the support measure
    ``|{u != 0}|`` and signed fields are allowed; the default smeared mode
    requires ``u >= 0``.
    """
    _check_same_mesh(u, A)
    dirichlet = float(cell_dirichlet(u, A).sum())
    m = float(cell_mass(u).sum())
    supp = support_volume(u)
    if volume_mode == "smeared":
        vol_s = smeared_volume(u, p.smear_s)
        vol = vol_s
    elif volume_mode == "exact":
        vol_s = smeared_volume(u, p.smear_s) if np.all(u.values >= 0) else float("nan")
        vol = supp
    else:
        raise ValueError(f"volume_mode must be 'smeared' or 'exact', got {volume_mode!r}")
    mass_pen = abs(m - p.target_mass) / p.delta
    vol_pen = max(vol - p.target_volume, 0.0) / p.epsilon
    return FunctionalValue(
        total=dirichlet + mass_pen + vol_pen,
        dirichlet=dirichlet,
        mass_penalty=mass_pen,
        volume_penalty=vol_pen,
        smeared_volume=vol_s,
        exact_volume=exact_volume(u, p.smear_s),
        support_volume=supp,
        mass=m,
    )


def gradient_parts(u: ScalarField, A: CoeffField, p: PenaltyParams, mass_tol: float = 0.0):
    """Split gradient ``(g_smooth, g_volume)`` as raw vertex arrays.

    ``g_smooth`` holds the Dirichlet and mass terms; ``g_volume`` is the
    derivative of the smeared volume alone (no ``1/epsilon`` factor and no
    activity test). Both vanish on the box boundary.
    """
    _check_same_mesh(u, A)
    mesh = u.mesh
    g = 2.0 * stiffness_action(A, u.values)
    m = float(cell_mass(u).sum())
    sgn = 0.0 if abs(m - p.target_mass) <= mass_tol else np.sign(m - p.target_mass)
    if sgn != 0.0:
        g += (sgn * 2.0 / p.delta) * mass_action(mesh, u.values)
    gv = np.where(u.values < p.smear_s, mesh.vertex_weights / p.smear_s, 0.0)
    g[mesh.boundary] = 0.0
    gv[mesh.boundary] = 0.0
    return g, gv


def descent_direction(u: ScalarField, A: CoeffField, p: PenaltyParams,
                      mass_tol: float = 0.0) -> ScalarField:
    """Gradient of the smeared functional with respect to vertex values.

    The mass term contributes its sign-subgradient, taken as zero when
    ``|mass - target| <= mass_tol``; the volume term uses the right
    derivative of ``min(t / s, 1)``, i.e. ``1/s`` on ``0 <= u < s``.
    """
    _check_nonnegative(u)
    g, gv = gradient_parts(u, A, p, mass_tol)
    if smeared_volume(u, p.smear_s) > p.target_volume:
        g += gv / p.epsilon
    return ScalarField(u.mesh, g)
