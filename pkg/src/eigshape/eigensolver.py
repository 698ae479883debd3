"""First Dirichlet eigenpair of ``-div(A grad u) = lam u`` on masked domains.

A vertex is a degree of freedom iff it is active and off the box boundary;
every other vertex is held at zero, which is the discrete analogue of
extending ``H^1_0`` functions of the domain by zero to the box.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import _dense
from .assembly import local_stiffness, mass_action, reference_mass, stiffness_action
from .coeff import CoeffField
from .mesh import DomainMask, Mesh, ScalarField

DENSE_LIMIT = 4096


class EigenSolverError(ArithmeticError):
    """Iterative eigensolve failed (CG breakdown or no convergence)."""


@dataclass
class EigenResult:
    """Smallest eigenpair on a mask.

    ``eigenfunction`` is nonnegative-signed, zero off the mask and has unit
    mass. ``residual`` is ``|K u - lam M u| / (lam |M u|)``.
    """

    lambda1: float
    eigenfunction: ScalarField
    residual: float
    iterations: int


def _check_inputs(mask: DomainMask, A: CoeffField) -> np.ndarray:
    if mask.mesh != A.mesh:
        raise ValueError("mask and coefficients live on different meshes")
    dofs = mask.dofs
    if not dofs.any():
        raise ValueError("mask has no active interior vertex")
    return dofs


def _stiffness_diagonal(A: CoeffField) -> np.ndarray:
    loc = local_stiffness(A)
    diag = np.zeros(A.mesh.vertex_shape)
    for a, sl in enumerate(A.mesh.corner_slices()):
        diag[sl] += loc[a, a]
    return diag


def _pcg(apply_K, b, x0, inv_diag, rtol, maxiter):
    """Jacobi-preconditioned CG for ``K x = b``; returns ``(x, iterations)``."""
    x = x0.copy()
    r = b - apply_K(x)
    bnorm = math.sqrt(float(np.vdot(b, b)))
    if bnorm == 0.0:
        return np.zeros_like(b), 0
    z = inv_diag * r
    p = z.copy()
    rz = float(np.vdot(r, z))
    for it in range(1, maxiter + 1):
        if math.sqrt(float(np.vdot(r, r))) <= rtol * bnorm:
            return x, it - 1
        Kp = apply_K(p)
        pKp = float(np.vdot(p, Kp))
        if not pKp > 0:
            raise EigenSolverError(f"CG breakdown at iteration {it}: p.Kp = {pKp!r}")
        alpha = rz / pKp
        x += alpha * p
        r -= alpha * Kp
        z = inv_diag * r
        rz_new = float(np.vdot(r, z))
        p = z + (rz_new / rz) * p
        rz = rz_new
    if math.sqrt(float(np.vdot(r, r))) <= rtol * bnorm:
        return x, maxiter
    raise EigenSolverError(f"CG did not reach rtol={rtol:g} within {maxiter} iterations")


def _finish(mesh: Mesh, lam, x, residual, iterations) -> EigenResult:
    if x.sum() < 0:
        x = -x
    return EigenResult(float(lam), ScalarField(mesh, x), float(residual), int(iterations))


def lambda1(mask: DomainMask, A: CoeffField, tol: float = 1e-10, max_iter: int = 500,
            cg_maxiter: int = None) -> EigenResult:
    """Smallest eigenvalue by inverse iteration with Jacobi-PCG inner solves.

    Stops when the relative eigenvalue change is below ``tol`` and the
    relative residual ``|K u - lam M u| / (lam |M u|)`` is below ``tol``.

    Raises
    ------
    ValueError
        Empty mask or nonpositive tolerance.
    EigenSolverError
        CG breakdown, or no convergence within ``max_iter`` outer steps.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    dofs = _check_inputs(mask, A)
    mesh = A.mesh
    off = ~dofs
    ndof = int(dofs.sum())
    cg_maxiter = cg_maxiter or max(1000, 20 * ndof)
    cg_rtol = max(1e-2 * tol, 1e-14)

    def K(v):
        out = stiffness_action(A, v)
        out[off] = 0.0
        return out

    def M(v):
        out = mass_action(mesh, v)
        out[off] = 0.0
        return out

    inv_diag = np.where(dofs, 1.0 / np.where(dofs, _stiffness_diagonal(A), 1.0), 0.0)
    x = dofs.astype(float)
    Mx = M(x)
    x /= math.sqrt(float(np.vdot(x, Mx)))
    Mx = M(x)
    Kx = K(x)
    lam = float(np.vdot(x, Kx))
    y = x / lam
    for it in range(1, max_iter + 1):
        y, _ = _pcg(K, Mx, y, inv_diag, cg_rtol, cg_maxiter)
        y[off] = 0.0
        My = M(y)
        nrm = math.sqrt(float(np.vdot(y, My)))
        x = y / nrm
        Mx = My / nrm
        Kx = K(x)
        lam_new = float(np.vdot(x, Kx))
        res = math.sqrt(float(np.vdot(Kx - lam_new * Mx, Kx - lam_new * Mx)))
        res /= lam_new * math.sqrt(float(np.vdot(Mx, Mx)))
        change = abs(lam_new - lam) / lam_new
        lam = lam_new
        y = x / lam
        if change < tol and res < tol:
            return _finish(mesh, lam, x, res, it)
    raise EigenSolverError(
        f"inverse iteration did not converge in {max_iter} steps "
        f"(last relative change {change:.3g}, residual {res:.3g})")


def restricted_matrices(mask: DomainMask, A: CoeffField):
    """Dense stiffness and mass matrices on the mask's degrees of freedom.

    Returns ``(K, M, dof_grid)`` where ``dof_grid`` maps vertices to row
    indices (``-1`` for constrained vertices).
    """
    dofs = _check_inputs(mask, A)
    mesh = A.mesh
    n = int(dofs.sum())
    if n > DENSE_LIMIT:
        raise ValueError(f"dense oracle limited to {DENSE_LIMIT} unknowns, mask has {n}")
    index = np.full(mesh.vertex_shape, -1)
    index[dofs] = np.arange(n)
    loc_k = local_stiffness(A)
    loc_m = reference_mass(mesh.h)
    corner_ids = [index[sl].reshape(-1) for sl in mesh.corner_slices()]
    K = np.zeros((n, n))
    M = np.zeros((n, n))
    nc = len(corner_ids)
    for a in range(nc):
        for b in range(nc):
            keep = (corner_ids[a] >= 0) & (corner_ids[b] >= 0)
            rows, cols = corner_ids[a][keep], corner_ids[b][keep]
            np.add.at(K, (rows, cols), loc_k[a, b].reshape(-1)[keep])
            np.add.at(M, (rows, cols), np.full(rows.shape, loc_m[a, b]))
    return K, M, index


def dense_oracle(mask: DomainMask, A: CoeffField) -> EigenResult:
    """Smallest eigenpair from a dense in-repo symmetric-definite solve.

    Limited to ``DENSE_LIMIT`` unknowns.
    """
    K, M, index = restricted_matrices(mask, A)
    lam, vec = _dense.smallest_generalized_eigenpair(K, M)
    x = np.zeros(A.mesh.vertex_shape)
    x[index >= 0] = vec
    r = K @ vec - lam * (M @ vec)
    res = float(np.linalg.norm(r) / (lam * np.linalg.norm(M @ vec)))
    return _finish(A.mesh, lam, x, res, 1)


def monotonicity_check(inner: DomainMask, outer: DomainMask, A: CoeffField,
                       tol: float = 1e-10) -> bool:
    """True iff ``lambda1(inner) >= lambda1(outer) - tol * lambda1(outer)``."""
    if not inner <= outer:
        raise ValueError("inner mask is not contained in outer mask")
    lam_in = lambda1(inner, A, tol=tol).lambda1
    lam_out = lambda1(outer, A, tol=tol).lambda1
    return lam_in >= lam_out - tol * lam_out


def inflate_to_volume(mask: DomainMask, target: float) -> DomainMask:
    """Grow a mask by Euclidean dilation until its measure reaches ``target``.

    The dilation radius is the smallest vertex-to-mask distance whose
    dilated set has measure at least ``target``; box-boundary vertices
    never become active.
    """
    mesh = mask.mesh
    rel = 1e-12 * max(1.0, abs(target))
    m0 = mask.measure
    if m0 > target + rel:
        raise ValueError(f"mask measure {m0} already exceeds target {target}")
    if m0 >= target - rel:
        return DomainMask(mesh, mask.active.copy())
    if not mask.active.any():
        raise ValueError("cannot inflate an empty mask")
    dist = ndimage.distance_transform_edt(~mask.active, sampling=mesh.h)
    dist[mesh.boundary & ~mask.active] = np.inf

    def grown(r):
        return DomainMask(mesh, mask.active | (dist <= r))

    radii = np.unique(dist[np.isfinite(dist) & (dist > 0)])
    if radii.size == 0 or grown(radii[-1]).measure < target - rel:
        raise ValueError(f"target measure {target} is unreachable inside the box")
    lo, hi = 0, radii.size - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if grown(radii[mid]).measure >= target - rel:
            hi = mid
        else:
            lo = mid + 1
    return grown(radii[lo])
