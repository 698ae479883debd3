"""Structured box meshes, vertex fields and domain masks.

Vertices of a mesh with ``n_i`` cells along axis ``i`` form a grid of shape
``(n_0 + 1, ..., n_{d-1} + 1)``; cells form a grid of shape ``(n_0, ...)``.
Flat indices are row-major (C order) over these grids.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class Box:
    """Axis-aligned box ``origin + [0, side_lengths]``."""

    side_lengths: tuple
    origin: tuple = None

    def __post_init__(self):
        sides = tuple(float(s) for s in self.side_lengths)
        if len(sides) not in (2, 3):
            raise ValueError(f"box dimension must be 2 or 3, got {len(sides)}")
        if any(not np.isfinite(s) or s <= 0 for s in sides):
            raise ValueError(f"side lengths must be positive, got {sides}")
        origin = (0.0,) * len(sides) if self.origin is None else tuple(float(o) for o in self.origin)
        if len(origin) != len(sides):
            raise ValueError("origin and side_lengths differ in dimension")
        object.__setattr__(self, "side_lengths", sides)
        object.__setattr__(self, "origin", origin)

    @property
    def dim(self) -> int:
        return len(self.side_lengths)

    @property
    def volume(self) -> float:
        return float(np.prod(self.side_lengths))

    @property
    def center(self) -> np.ndarray:
        return np.asarray(self.origin) + 0.5 * np.asarray(self.side_lengths)

    def distance_to_boundary(self, point) -> float:
        p = np.asarray(point, dtype=float) - np.asarray(self.origin)
        sides = np.asarray(self.side_lengths)
        return float(np.min(np.minimum(p, sides - p)))


@dataclass(frozen=True, eq=False)
class Mesh:
    """Uniform tensor-product mesh of a :class:`Box`.

    Immutable; all derived arrays are cached on first use.
    """

    box: Box
    cells_per_axis: tuple

    def __post_init__(self):
        cells = tuple(int(n) for n in self.cells_per_axis)
        if len(cells) != self.box.dim:
            raise ValueError(
                f"need {self.box.dim} resolutions, got {len(cells)}")
        if any(n < 2 for n in cells):
            raise ValueError(f"each axis needs at least 2 cells, got {cells}")
        object.__setattr__(self, "cells_per_axis", cells)

    def __eq__(self, other):
        if not isinstance(other, Mesh):
            return NotImplemented
        return self.box == other.box and self.cells_per_axis == other.cells_per_axis

    def __hash__(self):
        return hash((self.box, self.cells_per_axis))

    def __repr__(self):
        return f"Mesh(box={self.box!r}, cells_per_axis={self.cells_per_axis})"

    @property
    def dim(self) -> int:
        return self.box.dim

    @cached_property
    def h(self) -> np.ndarray:
        return np.asarray(self.box.side_lengths) / np.asarray(self.cells_per_axis)

    @property
    def vertex_shape(self) -> tuple:
        return tuple(n + 1 for n in self.cells_per_axis)

    @property
    def cell_shape(self) -> tuple:
        return self.cells_per_axis

    @property
    def vertex_count(self) -> int:
        return int(np.prod(self.vertex_shape))

    @property
    def cell_count(self) -> int:
        return int(np.prod(self.cell_shape))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @cached_property
    def axes(self) -> tuple:
        """Vertex coordinates along each axis."""
        return tuple(o + hi * np.arange(n + 1)
                     for o, hi, n in zip(self.box.origin, self.h, self.cells_per_axis))

    @cached_property
    def coordinates(self) -> np.ndarray:
        """Vertex coordinates, shape ``vertex_shape + (dim,)``."""
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)

    @cached_property
    def cell_centers(self) -> np.ndarray:
        mids = [0.5 * (a[1:] + a[:-1]) for a in self.axes]
        return np.stack(np.meshgrid(*mids, indexing="ij"), axis=-1)

    @cached_property
    def boundary(self) -> np.ndarray:
        """Boolean vertex grid flagging Dirichlet (box-boundary) vertices."""
        flag = np.zeros(self.vertex_shape, dtype=bool)
        for ax in range(self.dim):
            idx = [slice(None)] * self.dim
            idx[ax] = 0
            flag[tuple(idx)] = True
            idx[ax] = -1
            flag[tuple(idx)] = True
        flag.setflags(write=False)
        return flag

    @cached_property
    def interior(self) -> np.ndarray:
        inner = ~self.boundary
        inner.setflags(write=False)
        return inner

    @cached_property
    def vertex_weights(self) -> np.ndarray:
        """Lumped volume per vertex: each cell hands ``1/2^d`` of its volume to every corner."""
        w = np.zeros(self.vertex_shape)
        share = self.cell_volume / 2 ** self.dim
        for sl in self.corner_slices():
            w[sl] += share
        w.setflags(write=False)
        return w

    def corner_slices(self) -> list:
        """Slices selecting, for each local corner, that corner of every cell.

        Local corners are enumerated in binary order: corner ``k`` has offset
        bit ``(k >> (d - 1 - i)) & 1`` along axis ``i``.
        """
        return self._corner_slices

    @cached_property
    def _corner_slices(self):
        return [tuple(slice(o, o + n) for o, n in zip(offs, self.cells_per_axis))
                for offs in itertools.product((0, 1), repeat=self.dim)]

    # -- index maps -----------------------------------------------------
    def vertex_index(self, multi) -> int:
        return int(np.ravel_multi_index(tuple(multi), self.vertex_shape))

    def vertex_multi_index(self, flat) -> tuple:
        return tuple(int(i) for i in np.unravel_index(int(flat), self.vertex_shape))

    def cell_index(self, multi) -> int:
        return int(np.ravel_multi_index(tuple(multi), self.cell_shape))

    def cell_multi_index(self, flat) -> tuple:
        return tuple(int(i) for i in np.unravel_index(int(flat), self.cell_shape))

    def cell_vertices(self, cell) -> list:
        """Flat vertex indices of the corners of a flat cell index."""
        base = self.cell_multi_index(cell)
        return [self.vertex_index(np.add(base, offs))
                for offs in itertools.product((0, 1), repeat=self.dim)]

    def vertex_cells(self, vertex) -> list:
        """Flat indices of the cells touching a flat vertex index."""
        base = self.vertex_multi_index(vertex)
        out = []
        for offs in itertools.product((-1, 0), repeat=self.dim):
            c = np.add(base, offs)
            if np.all(c >= 0) and np.all(c < self.cell_shape):
                out.append(self.cell_index(c))
        return out

    def locate_cell(self, points) -> np.ndarray:
        """Multi-index (last axis) of the cell containing each point (clamped to the box)."""
        p = (np.asarray(points, dtype=float) - np.asarray(self.box.origin)) / self.h
        idx = np.floor(p).astype(int)
        return np.clip(idx, 0, np.asarray(self.cell_shape) - 1)


def build_mesh(box: Box, cells_per_axis) -> Mesh:
    """Build a uniform mesh; a scalar resolution is broadcast to every axis."""
    if np.ndim(cells_per_axis) == 0:
        cells_per_axis = (int(cells_per_axis),) * box.dim
    return Mesh(box, tuple(cells_per_axis))


@dataclass(eq=False)
class ScalarField:
    """Real values on the vertices of a mesh (grid-shaped array)."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.size != self.mesh.vertex_count:
            raise ValueError(
                f"field has {vals.size} values, mesh has {self.mesh.vertex_count} vertices")
        self.values = vals.reshape(self.mesh.vertex_shape)

    @classmethod
    def zeros(cls, mesh: Mesh) -> "ScalarField":
        return cls(mesh, np.zeros(mesh.vertex_shape))

    def copy(self) -> "ScalarField":
        return ScalarField(self.mesh, self.values.copy())

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def has_zero_trace(self) -> bool:
        return bool(np.all(self.values[self.mesh.boundary] == 0.0))


@dataclass(eq=False)
class DomainMask:
    """Boolean vertex set standing in for an open set of the box.

    A cell belongs to the set iff all its corners are active; ``measure`` is
    the total volume of such cells.
    """

    mesh: Mesh
    active: np.ndarray = field(repr=False)

    def __post_init__(self):
        act = np.asarray(self.active, dtype=bool)
        if act.size != self.mesh.vertex_count:
            raise ValueError(
                f"mask has {act.size} entries, mesh has {self.mesh.vertex_count} vertices")
        self.active = act.reshape(self.mesh.vertex_shape)

    @property
    def active_cells(self) -> np.ndarray:
        cells = np.ones(self.mesh.cell_shape, dtype=bool)
        for sl in self.mesh.corner_slices():
            cells &= self.active[sl]
        return cells

    @property
    def measure(self) -> float:
        return float(self.active_cells.sum()) * self.mesh.cell_volume

    @property
    def dofs(self) -> np.ndarray:
        """Active vertices off the box boundary (free unknowns)."""
        return self.active & self.mesh.interior

    def __le__(self, other: "DomainMask") -> bool:
        return bool(np.all(~self.active | other.active))

    @classmethod
    def from_field(cls, u: ScalarField, threshold: float = 0.0) -> "DomainMask":
        return cls(u.mesh, u.values > threshold)


def ball_indicator(mesh: Mesh, center, radius: float) -> ScalarField:
    """Indicator of the vertices strictly inside ``B(center, radius)``.

    The closed ball must sit inside the open box.
    """
    center = np.asarray(center, dtype=float)
    if center.shape != (mesh.dim,):
        raise ValueError(f"center must have {mesh.dim} coordinates")
    if radius < 0:
        raise ValueError("radius must be non-negative")
    if radius >= mesh.box.distance_to_boundary(center):
        raise ValueError(
            f"ball of radius {radius} at {center.tolist()} meets the box boundary")
    dist = np.linalg.norm(mesh.coordinates - center, axis=-1)
    return ScalarField(mesh, (dist < radius).astype(float))
