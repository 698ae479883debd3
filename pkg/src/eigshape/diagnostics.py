"""Numerical checks on computed minimizers.

Rescaling
    ``v(x) = kappa * u(x0 + r x) - xi`` sampled on a grid of ``[-1, 1]^d``.
    The rescaled functional on ``B_1`` is compared with the algebraic
    transform of the original functional localized to ``B_r(x0)``.
Regularity
    Oscillation-decay fits over dyadic radii (interior Holder exponent,
    boundary growth exponent) and a Caccioppoli-type energy ratio.
Equivalence
    The minimizer's functional value against that of the first eigenfunction
    of its own support.

Ball restrictions are taken cellwise: a cell belongs to ``B_r(x0)`` when its
center does. Support measures count ``cell_volume / 2^d`` per cell corner
where the field is nonzero.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .assembly import _cell_quadratic, local_stiffness, reference_mass
from .coeff import CoeffField, make_identity
from .eigensolver import lambda1
from .functional import PenaltyParams, evaluate
from .mesh import Box, DomainMask, Mesh, ScalarField, build_mesh

FIT_R2_GATE = 0.9


@dataclass(frozen=True)
class RescaleParams:
    """Blow-up ``v(x) = kappa * u(x0 + r x) - xi`` around ``x0``."""

    x0: tuple
    kappa: float
    r: float
    xi: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x0", tuple(float(c) for c in np.ravel(self.x0)))
        if not (self.kappa > 0 and math.isfinite(self.kappa)):
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if not (self.r > 0 and math.isfinite(self.r)):
            raise ValueError(f"degenerate radius r={self.r}")
        if not math.isfinite(self.xi):
            raise ValueError("xi must be finite")

    def check_inside(self, mesh: Mesh):
        if len(self.x0) != mesh.dim:
            raise ValueError(f"x0 must have {mesh.dim} coordinates")
        if not self.r < mesh.box.distance_to_boundary(self.x0):
            raise ValueError(f"ball of radius {self.r} at {list(self.x0)} escapes the box")


@dataclass
class RegularityFit:
    """Power-law fit ``modulus ~ prefactor * r^exponent``.

    ``degenerate`` fits (some modulus is zero) carry ``exponent = nan``.
    ``l2_moduli``/``l2_exponent`` hold the mean-square oscillation variant
    when computed.
    """

    center: tuple
    radii: list
    moduli: list
    exponent: float
    prefactor: float
    r2: float
    degenerate: bool = False
    l2_moduli: list = field(default=None, repr=False)
    l2_exponent: float = float("nan")

    @property
    def reliable(self) -> bool:
        return not self.degenerate and self.r2 >= FIT_R2_GATE


@dataclass
class FreeBoundary:
    """Vertices at or below the threshold with an edge neighbor above it."""

    points: np.ndarray
    indices: np.ndarray = field(default=None, repr=False)
    threshold: float = 0.0

    def __len__(self):
        return len(self.points)


class EquivalenceResult(NamedTuple):
    f_min: float
    f_eig: float
    gap: float


# -- rescaling ----------------------------------------------------------

def _unit_mesh(dim: int, resolution: int) -> Mesh:
    return build_mesh(Box((2.0,) * dim, origin=(-1.0,) * dim), resolution)


def aligned_resolution(mesh: Mesh, p: RescaleParams):
    """Cells per axis making the rescaled grid coincide with the original one, or ``None``."""
    ratio = 2.0 * p.r / mesh.h
    n = np.rint(ratio)
    if not np.allclose(ratio, n, rtol=0, atol=1e-9) or np.any(n != n[0]) or n[0] < 2:
        return None
    offs = (np.asarray(p.x0) - np.asarray(mesh.box.origin)) / mesh.h
    if not np.allclose(offs, np.rint(offs), rtol=0, atol=1e-9):
        return None
    return int(n[0])


def rescale_field(u: ScalarField, p: RescaleParams, resolution: int = None) -> ScalarField:
    """Sample ``v = kappa * u(x0 + r x) - xi`` on ``[-1, 1]^d`` by multilinear interpolation.

    ``resolution=None`` picks the grid-aligned resolution and fails if the
    ball is not aligned with the mesh.
    """
    fine, vals = _sample(u, p, resolution)
    return ScalarField(fine, p.kappa * vals - p.xi)


def _sample(u: ScalarField, p: RescaleParams, resolution):
    """``u(x0 + r x)`` on the unit-ball grid, before the affine map."""
    mesh = u.mesh
    p.check_inside(mesh)
    aligned = aligned_resolution(mesh, p)
    if resolution is None:
        resolution = aligned
        if resolution is None:
            raise ValueError("ball is not grid-aligned; pass an explicit resolution")
    fine = _unit_mesh(mesh.dim, resolution)
    if resolution == aligned:
        # exact vertex values; interpolating at nodes leaks roundoff into zeros
        lo = np.rint((np.asarray(p.x0) - p.r - np.asarray(mesh.box.origin)) / mesh.h).astype(int)
        return fine, u.values[tuple(slice(a, a + resolution + 1) for a in lo)].copy()
    pts = np.asarray(p.x0) + p.r * fine.coordinates
    interp = RegularGridInterpolator(mesh.axes, u.values, method="linear")
    return fine, interp(pts.reshape(-1, mesh.dim)).reshape(fine.vertex_shape)


def rescale_coeff(A: CoeffField, p: RescaleParams, fine: Mesh) -> CoeffField:
    """``A(x0 + r x)`` on the cells of the rescaled grid."""
    pts = np.asarray(p.x0) + p.r * fine.cell_centers
    return CoeffField(fine, A.at_points(pts), A.theta, A.Theta)


def _ball_cells(mesh: Mesh, center, radius) -> np.ndarray:
    dist = np.linalg.norm(mesh.cell_centers - np.asarray(center, dtype=float), axis=-1)
    return dist < radius


def _corner_support_measure(mesh: Mesh, nonzero: np.ndarray, cells: np.ndarray) -> float:
    """Measure of ``{field != 0}`` over the given cells, ``cell_volume / 2^d`` per corner."""
    count = 0
    for sl in mesh.corner_slices():
        count += int(np.count_nonzero(nonzero[sl] & cells))
    return count * mesh.cell_volume / 2 ** mesh.dim


def rescaled_functional(v: ScalarField, Av: CoeffField, params: PenaltyParams,
                        p: RescaleParams, nu: float, gamma: float, support=None) -> float:
    """``F_{kappa,xi,r}(v)`` over ``B_1`` with the given ``nu`` and ``gamma``.

    ``support`` is the vertex mask of ``{v != -xi}``; pass it when ``v`` was
    built from a field whose tiny values may round onto ``-xi``.
    """
    mesh = v.mesh
    cells = _ball_cells(mesh, np.zeros(mesh.dim), 1.0)
    dirichlet = float(_cell_quadratic(mesh, local_stiffness(Av), v.values)[cells].sum())
    shifted = v.values + p.xi
    mass = float(_cell_quadratic(mesh, reference_mass(mesh.h), shifted)[cells].sum())
    if support is None:
        support = v.values != -p.xi
    vol = _corner_support_measure(mesh, support, cells)
    return (dirichlet
            + p.r ** 2 / params.delta * abs(mass - nu)
            + p.r ** 2 * p.kappa ** 2 / params.epsilon * max(vol - gamma, 0.0))


def rescaling_constants(u: ScalarField, params: PenaltyParams, p: RescaleParams):
    """``(nu, gamma)`` from the part of ``u`` outside ``B_r(x0)``.

    ``gamma = r^-d (1 - |{u != 0} \\ B_r|)`` is the value that makes the
    volume term transform exactly.
    """
    mesh = u.mesh
    d = mesh.dim
    outside = ~_ball_cells(mesh, p.x0, p.r)
    mass_out = float(_cell_quadratic(mesh, reference_mass(mesh.h), u.values)[outside].sum())
    supp_out = _corner_support_measure(mesh, u.values != 0, outside)
    nu = p.kappa ** 2 * p.r ** -d * (params.target_mass - mass_out)
    gamma = p.r ** -d * (params.target_volume - supp_out)
    return nu, gamma


def localized_functional(u: ScalarField, A: CoeffField, params: PenaltyParams,
                         p: RescaleParams) -> float:
    """``kappa^2 r^(2-d)`` times the functional of ``u`` with its energy restricted to ``B_r(x0)``."""
    mesh = u.mesh
    cells = _ball_cells(mesh, p.x0, p.r)
    dirichlet = float(_cell_quadratic(mesh, local_stiffness(A), u.values)[cells].sum())
    mass = float(_cell_quadratic(mesh, reference_mass(mesh.h), u.values).sum())
    all_cells = np.ones(mesh.cell_shape, dtype=bool)
    supp = _corner_support_measure(mesh, u.values != 0, all_cells)
    total = (dirichlet + abs(mass - params.target_mass) / params.delta
             + max(supp - params.target_volume, 0.0) / params.epsilon)
    return p.kappa ** 2 * p.r ** (2 - mesh.dim) * total


def verify_rescaling_identity(u: ScalarField, A: CoeffField, params: PenaltyParams,
                              p: RescaleParams, resolution: int = None):
    """Compare the rescaled functional of ``v`` with the transformed functional of ``u``.

    Returns ``(lhs, rhs, gap)`` with ``gap = |lhs - rhs| / max(|rhs|, tiny)``.
    On grid-aligned balls both sides agree to roundoff; otherwise the gap
    measures interpolation error.
    """
    fine, sampled = _sample(u, p, resolution)
    v = ScalarField(fine, p.kappa * sampled - p.xi)
    Av = rescale_coeff(A, p, fine)
    nu, gamma = rescaling_constants(u, params, p)
    lhs = rescaled_functional(v, Av, params, p, nu, gamma, support=sampled != 0)
    rhs = localized_functional(u, A, params, p)
    gap = abs(lhs - rhs) / max(abs(rhs), np.finfo(float).tiny)
    return lhs, rhs, gap


# -- Caccioppoli ----------------------------------------------------------

def holder_kappa(u: ScalarField, x0, r: float) -> float:
    """``min(1, sqrt(r^d / int_{B_r(x0)} u^2))``, the normalization keeping ``int_{B_1} v^2 <= 1``."""
    mesh = u.mesh
    cells = _ball_cells(mesh, x0, r)
    local = float(_cell_quadratic(mesh, reference_mass(mesh.h), u.values)[cells].sum())
    if local <= 0:
        return 1.0
    return min(1.0, math.sqrt(r ** mesh.dim / local))


def caccioppoli_ratio(u: ScalarField, A: CoeffField, p: RescaleParams,
                      resolution: int = None) -> float:
    """``int_{B_1/2} |grad v|^2 / ((kappa^2 + xi^2) r^2 + (1 + r^2) int_{B_1} v^2)``."""
    v = rescale_field(u, p, resolution)
    mesh = v.mesh
    origin = np.zeros(mesh.dim)
    inner = _ball_cells(mesh, origin, 0.5)
    outer = _ball_cells(mesh, origin, 1.0)
    # the gradient term ignores constants; removing one keeps v = const exactly zero
    centred = v.values - v.values.flat[v.values.size // 2]
    grad = float(_cell_quadratic(mesh, local_stiffness(make_identity(mesh)), centred)[inner].sum())
    l2 = float(_cell_quadratic(mesh, reference_mass(mesh.h), v.values)[outer].sum())
    denom = (p.kappa ** 2 + p.xi ** 2) * p.r ** 2 + (1 + p.r ** 2) * l2
    if not denom > 0:
        raise ValueError("Caccioppoli denominator vanishes")
    return grad / denom


def caccioppoli_scan(u: ScalarField, A: CoeffField, centers, r0: float, halvings: int = 2):
    """Ratios at ``r0, r0/2, ...`` for each center, ``kappa`` per :func:`holder_kappa`, ``xi = 0``.

    Balls not aligned with the mesh are resampled at the nearest matching
    resolution. Returns an array of shape ``(len(centers), halvings + 1)``.
    """
    out = np.empty((len(centers), halvings + 1))
    h = float(np.max(u.mesh.h))
    for i, c in enumerate(centers):
        for k in range(halvings + 1):
            r = r0 / 2 ** k
            p = RescaleParams(tuple(c), holder_kappa(u, c, r), r, 0.0)
            res = aligned_resolution(u.mesh, p) or max(4, int(round(2 * r / h)))
            out[i, k] = caccioppoli_ratio(u, A, p, res)
    return out


# -- oscillation fits -------------------------------------------------------

def _dyadic_radii(mesh: Mesh, r_max: float, levels: int) -> np.ndarray:
    if levels < 3:
        raise ValueError("need at least 3 levels")
    radii = r_max * 0.5 ** np.arange(levels)
    if radii[-1] < 3 * float(np.max(mesh.h)) * (1 - 1e-12):
        raise ValueError(
            f"insufficient resolution: smallest radius {radii[-1]:.4g} spans fewer than 3 cells "
            f"(h = {float(np.max(mesh.h)):.4g})")
    return radii


def _neighborhood(u: ScalarField, center, radius):
    """Vertex values and distances inside the closed ball (with roundoff slack)."""
    mesh = u.mesh
    c = np.asarray(center, dtype=float)
    lo = np.floor((c - radius - np.asarray(mesh.box.origin)) / mesh.h).astype(int)
    hi = np.ceil((c + radius - np.asarray(mesh.box.origin)) / mesh.h).astype(int) + 1
    lo = np.maximum(lo, 0)
    hi = np.minimum(hi, mesh.vertex_shape)
    sl = tuple(slice(a, b) for a, b in zip(lo, hi))
    dist = np.linalg.norm(mesh.coordinates[sl] - c, axis=-1)
    inside = dist <= radius * (1 + 1e-12)
    return u.values[sl][inside], dist[inside]


def _power_fit(radii, moduli):
    """Least squares in log-log; returns ``(exponent, prefactor, r2, degenerate)``."""
    moduli = np.asarray(moduli, dtype=float)
    if np.any(moduli <= 0):
        return float("nan"), float("nan"), float("nan"), True
    x, y = np.log(radii), np.log(moduli)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(np.sum(resid ** 2)) / ss_tot
    return float(slope), float(math.exp(intercept)), r2, False


def _value_at(u: ScalarField, point) -> float:
    interp = RegularGridInterpolator(u.mesh.axes, u.values, method="linear")
    return float(interp(np.asarray(point, dtype=float)[None, :])[0])


def holder_fit(u: ScalarField, center, r_max: float, levels: int = 3) -> RegularityFit:
    """Fit ``sup_{B_r(center)} |u - u(center)| ~ C r^alpha`` over dyadic radii.

    The mean-square variant ``sqrt(mean (u - mean u)^2)`` over the same
    vertex sets is fitted alongside and stored in ``l2_exponent``.
    """
    radii = _dyadic_radii(u.mesh, r_max, levels)
    u0 = _value_at(u, center)
    moduli, l2 = [], []
    for r in radii:
        vals, _ = _neighborhood(u, center, r)
        moduli.append(float(np.max(np.abs(vals - u0))))
        l2.append(float(np.sqrt(np.mean((vals - vals.mean()) ** 2))))
    expo, pref, r2, degenerate = _power_fit(radii, moduli)
    l2_expo = _power_fit(radii, l2)[0]
    return RegularityFit(tuple(float(c) for c in center), radii.tolist(), moduli,
                         expo, pref, r2, degenerate, l2, l2_expo)


def extract_free_boundary(u: ScalarField, threshold: float) -> FreeBoundary:
    """Vertices with ``u <= threshold`` next to (along a mesh edge) a vertex with ``u > threshold``."""
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    above = u.values > threshold
    near = np.zeros_like(above)
    for ax in range(u.mesh.dim):
        fwd = [slice(None)] * u.mesh.dim
        bwd = [slice(None)] * u.mesh.dim
        fwd[ax], bwd[ax] = slice(1, None), slice(None, -1)
        near[tuple(bwd)] |= above[tuple(fwd)]
        near[tuple(fwd)] |= above[tuple(bwd)]
    flag = near & ~above
    idx = np.argwhere(flag)
    return FreeBoundary(u.mesh.coordinates[flag], idx, float(threshold))


def boundary_growth_fit(u: ScalarField, fb: FreeBoundary, r_max: float, levels: int = 3) -> list:
    """Per free-boundary point, fit ``sup_{B_r(x0)} u ~ C r^beta`` over dyadic radii."""
    radii = _dyadic_radii(u.mesh, r_max, levels)
    fits = []
    for x0 in fb.points:
        moduli = [float(np.max(_neighborhood(u, x0, r)[0], initial=0.0)) for r in radii]
        expo, pref, r2, degenerate = _power_fit(radii, moduli)
        fits.append(RegularityFit(tuple(float(c) for c in x0), radii.tolist(), moduli,
                                  expo, pref, r2, degenerate))
    return fits


def interior_points(u: ScalarField, threshold: float, r_max: float, count: int, seed: int = 0):
    """Up to ``count`` vertices in ``{u > threshold}`` whose ``r_max``-ball stays in the box.

    Drawn without replacement by a seeded generator; sorted by flat index.
    """
    mesh = u.mesh
    inside = np.ones(mesh.vertex_shape, dtype=bool)
    coords = mesh.coordinates
    origin = np.asarray(mesh.box.origin)
    far = np.asarray(mesh.box.side_lengths) + origin
    inside &= np.all(coords - origin > r_max, axis=-1) & np.all(far - coords > r_max, axis=-1)
    flat = np.flatnonzero((u.values > threshold) & inside)
    if flat.size > count:
        flat = np.sort(np.random.default_rng(seed).choice(flat, size=count, replace=False))
    return coords.reshape(-1, mesh.dim)[flat]


# -- equivalence ----------------------------------------------------------

def equivalence_check(u_min, A: CoeffField, params: PenaltyParams = None,
                      tol: float = 1e-10) -> EquivalenceResult:
    """Functional at the minimizer versus at the first eigenfunction of ``{u_min > 0}``.

    Both values use the support measure for the volume term. The
    eigenfunction vanishes off the same mask and minimizes the Rayleigh
    quotient there, so ``f_eig <= f_min`` up to solver tolerance.
    ``gap = (f_min - f_eig) / f_min``.
    """
    u = getattr(u_min, "u_star", u_min)
    if params is None:
        params = getattr(u_min, "final_params", None) or PenaltyParams()
    mask = DomainMask.from_field(u, 0.0)
    eig = lambda1(mask, A, tol=tol)
    f_min = evaluate(u, A, params, volume_mode="exact").total
    f_eig = evaluate(eig.eigenfunction, A, params, volume_mode="exact").total
    return EquivalenceResult(f_min, f_eig, (f_min - f_eig) / f_min)


def summarize_exponents(fits) -> dict:
    """Median/min/max over fits passing the quality gate, plus counts."""
    good = np.array([f.exponent for f in fits if f.reliable])
    out = {"count": len(fits), "reliable": int(good.size)}
    if good.size:
        out.update(median=float(np.median(good)), min=float(good.min()), max=float(good.max()))
    else:
        out.update(median=None, min=None, max=None)
    return out


__all__ = [
    "RescaleParams", "RegularityFit", "FreeBoundary", "EquivalenceResult",
    "rescale_field", "rescale_coeff", "verify_rescaling_identity", "rescaled_functional",
    "rescaling_constants", "localized_functional", "holder_kappa", "caccioppoli_ratio",
    "caccioppoli_scan", "holder_fit", "extract_free_boundary", "boundary_growth_fit",
    "interior_points", "equivalence_check", "summarize_exponents",
]
