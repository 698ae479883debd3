"""Matrix-free multilinear (Q1) energies on structured meshes.

Cell integrals are exact for multilinear fields and cell-constant
coefficients: every cell matrix is a tensor product of the 1D element
matrices, contracted against the cell's coefficient matrix.
"""
from __future__ import annotations

import functools
import itertools
import weakref
from dataclasses import dataclass

import numpy as np

from .coeff import CoeffField
from .mesh import Mesh, ScalarField


@dataclass(frozen=True)
class EnergyBreakdown:
    dirichlet: float
    mass: float


def _corner_offsets(dim):
    return list(itertools.product((0, 1), repeat=dim))


def reference_stiffness(h) -> np.ndarray:
    """``K[i, j, a, b] = int_cell d_i phi_a d_j phi_b`` for a cell of widths ``h``."""
    h = np.asarray(h, dtype=float)
    d = h.size
    corners = _corner_offsets(d)
    nc = len(corners)
    out = np.empty((d, d, nc, nc))
    for i, j in itertools.product(range(d), repeat=2):
        for a, ca in enumerate(corners):
            for b, cb in enumerate(corners):
                val = 1.0
                for k in range(d):
                    sa, sb = (1.0 if ca[k] else -1.0), (1.0 if cb[k] else -1.0)
                    if k == i == j:
                        val *= sa * sb / h[k]
                    elif k == i:
                        val *= 0.5 * sa
                    elif k == j:
                        val *= 0.5 * sb
                    else:
                        val *= h[k] * (2.0 if ca[k] == cb[k] else 1.0) / 6.0
                out[i, j, a, b] = val
    return out


def reference_mass(h) -> np.ndarray:
    return _reference_mass(tuple(float(x) for x in np.ravel(h)))


@functools.lru_cache(maxsize=32)
def _reference_mass(h) -> np.ndarray:
    corners = _corner_offsets(len(h))
    out = np.empty((len(corners), len(corners)))
    for a, ca in enumerate(corners):
        for b, cb in enumerate(corners):
            out[a, b] = np.prod([hk * (2.0 if x == y else 1.0) / 6.0
                                 for hk, x, y in zip(h, ca, cb)])
    out.setflags(write=False)
    return out


_LOCAL_STIFFNESS = weakref.WeakKeyDictionary()


def local_stiffness(A: CoeffField) -> np.ndarray:
    """Per-cell element matrices, corner-major: shape ``(2^d, 2^d) + cell_shape``."""
    try:
        return _LOCAL_STIFFNESS[A]
    except KeyError:
        pass
    ref = reference_stiffness(A.mesh.h)
    loc = np.einsum("...ij,ijab->ab...", A.matrices, ref)
    loc = np.ascontiguousarray(0.5 * (loc + np.swapaxes(loc, 0, 1)))
    loc.setflags(write=False)
    _LOCAL_STIFFNESS[A] = loc
    return loc


def _check_same_mesh(u: ScalarField, A: CoeffField):
    if u.mesh != A.mesh:
        raise ValueError(f"mesh mismatch: field on {u.mesh!r}, coefficients on {A.mesh!r}")


def _apply_local(mesh: Mesh, loc, values) -> np.ndarray:
    """Scatter-add of ``loc @ U_cell`` over cells; ``loc`` is corner-major."""
    slices = mesh.corner_slices()
    corner_vals = [values[sl] for sl in slices]
    out = np.zeros(mesh.vertex_shape)
    for a, sl in enumerate(slices):
        acc = loc[a, 0] * corner_vals[0]
        for b in range(1, len(slices)):
            acc += loc[a, b] * corner_vals[b]
        out[sl] += acc
    return out


def _cell_quadratic(mesh: Mesh, loc, values) -> np.ndarray:
    """``U_cell^T loc U_cell`` for every cell."""
    slices = mesh.corner_slices()
    corner_vals = [values[sl] for sl in slices]
    out = np.zeros(mesh.cell_shape)
    for a in range(len(slices)):
        for b in range(len(slices)):
            out += loc[a, b] * corner_vals[a] * corner_vals[b]
    return out


def stiffness_action(A: CoeffField, values) -> np.ndarray:
    """Raw ``K u`` on a vertex-grid array (no boundary handling)."""
    return _apply_local(A.mesh, local_stiffness(A), values)


def mass_action(mesh: Mesh, values) -> np.ndarray:
    """Raw consistent-mass product ``M u`` on a vertex-grid array."""
    return _apply_local(mesh, reference_mass(mesh.h), values)


def cell_dirichlet(u: ScalarField, A: CoeffField) -> np.ndarray:
    """Per-cell ``int grad u . A grad u``."""
    _check_same_mesh(u, A)
    return _cell_quadratic(u.mesh, local_stiffness(A), u.values)


def cell_mass(u: ScalarField) -> np.ndarray:
    """Per-cell ``int u^2``."""
    return _cell_quadratic(u.mesh, reference_mass(u.mesh.h), u.values)


def dirichlet_energy(u: ScalarField, A: CoeffField) -> float:
    return float(cell_dirichlet(u, A).sum())


def mass(u: ScalarField) -> float:
    return float(cell_mass(u).sum())


def energy_breakdown(u: ScalarField, A: CoeffField) -> EnergyBreakdown:
    return EnergyBreakdown(dirichlet_energy(u, A), mass(u))


def apply_operator(u: ScalarField, A: CoeffField) -> ScalarField:
    """Stiffness action ``K u`` (gradient of half the Dirichlet energy), zero on the box boundary."""
    _check_same_mesh(u, A)
    out = stiffness_action(A, u.values)
    out[u.mesh.boundary] = 0.0
    return ScalarField(u.mesh, out)


def apply_mass(u: ScalarField) -> ScalarField:
    out = mass_action(u.mesh, u.values)
    out[u.mesh.boundary] = 0.0
    return ScalarField(u.mesh, out)


def assemble_dense(mesh: Mesh, loc) -> np.ndarray:
    """Dense ``vertex_count x vertex_count`` matrix from element matrices.

    ``loc`` is either a single reference matrix or corner-major per-cell
    matrices. Intended for small verification instances only.
    """
    nv = mesh.vertex_count
    ids = np.arange(nv).reshape(mesh.vertex_shape)
    corner_ids = [ids[sl].reshape(-1) for sl in mesh.corner_slices()]
    out = np.zeros((nv, nv))
    nc = len(corner_ids)
    for a in range(nc):
        for b in range(nc):
            vals = loc[a, b]
            vals = np.broadcast_to(vals, mesh.cell_shape).reshape(-1)
            np.add.at(out, (corner_ids[a], corner_ids[b]), vals)
    return out
