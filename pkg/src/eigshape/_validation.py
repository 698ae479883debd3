"""Input checks shared by the estimator front end."""
from __future__ import annotations

import math

import numpy as np

from .coeff import CoeffField
from .mesh import DomainMask, Mesh


def check_positive(name: str, value, integer: bool = False):
    if integer:
        if int(value) != value or value < 1:
            raise ValueError(f"{name} must be a positive integer, got {value!r}")
        return int(value)
    value = float(value)
    if not (value > 0 and math.isfinite(value)):
        raise ValueError(f"{name} must be positive and finite, got {value!r}")
    return value


def check_coeff(X, mesh: Mesh) -> CoeffField:
    """Accept a :class:`CoeffField` on ``mesh`` or an array of cell matrices.

    Arrays take their ellipticity bounds from the extreme cell eigenvalues.
    """
    if isinstance(X, CoeffField):
        if X.mesh != mesh:
            raise ValueError(f"coefficients live on {X.mesh!r}, estimator expects {mesh!r}")
        return X
    arr = np.asarray(X, dtype=float)
    d = mesh.dim
    if arr.shape != mesh.cell_shape + (d, d):
        raise ValueError(f"coefficient array must have shape {mesh.cell_shape + (d, d)}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("coefficient array contains non-finite entries")
    eig = np.linalg.eigvalsh(arr.reshape(-1, d, d))
    return CoeffField(mesh, arr, float(eig.min()), float(eig.max()))


def check_mask(mask, mesh: Mesh) -> DomainMask:
    if isinstance(mask, DomainMask):
        if mask.mesh != mesh:
            raise ValueError("mask lives on a different mesh")
        return mask
    arr = np.asarray(mask)
    if arr.size != mesh.vertex_count:
        raise ValueError(f"mask has {arr.size} entries, mesh has {mesh.vertex_count} vertices")
    return DomainMask(mesh, arr.astype(bool))
