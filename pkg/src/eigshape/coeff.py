"""Piecewise-constant symmetric coefficient fields ``theta I <= A(x) <= Theta I``."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mesh import Mesh

# relative slack when comparing cell eigenvalues against declared bounds
BOUND_RTOL = 1e-12


class EllipticityError(ValueError):
    """A cell matrix is asymmetric or leaves the declared ellipticity band."""


@dataclass(eq=False)
class CoeffField:
    """One symmetric ``d x d`` matrix per cell with declared bounds.

    ``matrices`` has shape ``mesh.cell_shape + (d, d)``.
    """

    mesh: Mesh
    matrices: np.ndarray = field(repr=False)
    theta: float
    Theta: float

    def __post_init__(self):
        d = self.mesh.dim
        mats = np.asarray(self.matrices, dtype=float)
        if mats.shape != self.mesh.cell_shape + (d, d):
            raise ValueError(
                f"expected matrices of shape {self.mesh.cell_shape + (d, d)}, got {mats.shape}")
        if not 0 < self.theta <= self.Theta:
            raise ValueError(f"need 0 < theta <= Theta, got {self.theta}, {self.Theta}")
        self.matrices = mats
        self.theta = float(self.theta)
        self.Theta = float(self.Theta)
        validate_ellipticity(self)

    def __mul__(self, c):
        c = float(c)
        if c <= 0:
            raise ValueError("coefficient scale must be positive")
        return CoeffField(self.mesh, c * self.matrices, c * self.theta, c * self.Theta)

    __rmul__ = __mul__

    def at_points(self, points) -> np.ndarray:
        """Matrix of the cell containing each point, shape ``points.shape[:-1] + (d, d)``."""
        idx = self.mesh.locate_cell(points)
        return self.matrices[tuple(np.moveaxis(idx, -1, 0))]


def _cell_eigenvalues(mats):
    return np.linalg.eigvalsh(mats.reshape(-1, *mats.shape[-2:]))


def validate_ellipticity(A: CoeffField):
    """Observed ``(min, max)`` of all cell-matrix eigenvalues.

    Raises :class:`EllipticityError` naming the first offending cell if a
    matrix is asymmetric or an eigenvalue leaves ``[A.theta, A.Theta]``.
    """
    mats = A.matrices
    flat = mats.reshape(-1, *mats.shape[-2:])
    asym = np.any(flat != np.swapaxes(flat, -1, -2), axis=(-1, -2))
    if asym.any():
        cell = int(np.argmax(asym))
        raise EllipticityError(f"cell {cell} matrix is not symmetric: {flat[cell].tolist()}")
    eig = _cell_eigenvalues(mats)
    lo, hi = eig.min(axis=1), eig.max(axis=1)
    slack = BOUND_RTOL * max(1.0, A.Theta)
    bad = (lo < A.theta - slack) | (hi > A.Theta + slack)
    if bad.any():
        cell = int(np.argmax(bad))
        raise EllipticityError(
            f"cell {cell} has eigenvalues {eig[cell].tolist()} outside "
            f"[{A.theta}, {A.Theta}]")
    return float(lo.min()), float(hi.max())


def _spectral_bounds(*mats):
    eig = np.concatenate([np.linalg.eigvalsh(np.asarray(m, dtype=float)) for m in mats])
    return float(eig.min()), float(eig.max())


def _check_matrix(m, d, name):
    m = np.asarray(m, dtype=float)
    if m.shape != (d, d):
        raise ValueError(f"{name} must be {d}x{d}, got shape {m.shape}")
    if np.any(m != m.T):
        raise EllipticityError(f"{name} is not symmetric: {m.tolist()}")
    return m


def make_identity(mesh: Mesh, scale: float = 1.0) -> CoeffField:
    if scale <= 0:
        raise ValueError(f"scale must be positive, got {scale}")
    mats = np.broadcast_to(scale * np.eye(mesh.dim), mesh.cell_shape + (mesh.dim, mesh.dim))
    return CoeffField(mesh, mats.copy(), scale, scale)


def _block_parity(mesh: Mesh, block_cells: int) -> np.ndarray:
    idx = np.indices(mesh.cell_shape) // block_cells
    return idx.sum(axis=0) % 2


def make_checkerboard(mesh: Mesh, block_cells: int, a_even, a_odd,
                      theta=None, Theta=None) -> CoeffField:
    """Alternate two matrices on blocks of ``block_cells`` cells per axis.

    Cell ``(i, j, ...)`` receives ``a_even`` when
    ``i // block + j // block + ...`` is even. Bounds default to the spectral
    range of the two matrices; explicitly declared bounds are enforced.
    """
    if block_cells < 1:
        raise ValueError("block_cells must be >= 1")
    d = mesh.dim
    a_even = _check_matrix(a_even, d, "a_even")
    a_odd = _check_matrix(a_odd, d, "a_odd")
    lo, hi = _spectral_bounds(a_even, a_odd)
    theta = lo if theta is None else theta
    Theta = hi if Theta is None else Theta
    odd = _block_parity(mesh, block_cells).astype(bool)
    mats = np.where(odd[..., None, None], a_odd, a_even)
    return CoeffField(mesh, mats, theta, Theta)


def random_rotations(rng: np.random.Generator, count: int, d: int) -> np.ndarray:
    """Haar-distributed orthogonal matrices via sign-corrected QR."""
    g = rng.standard_normal((count, d, d))
    q, r = np.linalg.qr(g)
    return q * np.sign(np.diagonal(r, axis1=-2, axis2=-1))[:, None, :]


def make_random_piecewise(mesh: Mesh, seed: int, theta: float, Theta: float,
                          block_cells: int) -> CoeffField:
    """Random ``Q^T D Q`` per block with ``D`` uniform in ``[theta, Theta]``."""
    if not 0 < theta <= Theta:
        raise ValueError(f"need 0 < theta <= Theta, got {theta}, {Theta}")
    if block_cells < 1:
        raise ValueError("block_cells must be >= 1")
    d = mesh.dim
    blocks = tuple(-(-n // block_cells) for n in mesh.cell_shape)
    count = int(np.prod(blocks))
    rng = np.random.default_rng(seed)
    diag = rng.uniform(theta, Theta, size=(count, d))
    q = random_rotations(rng, count, d)
    mats = np.einsum("nki,nk,nkj->nij", q, diag, q)
    mats = 0.5 * (mats + np.swapaxes(mats, -1, -2))
    if theta == Theta:
        mats[:] = theta * np.eye(d)
    mats = mats.reshape(blocks + (d, d))
    idx = np.indices(mesh.cell_shape) // block_cells
    return CoeffField(mesh, mats[tuple(idx)], theta, Theta)
