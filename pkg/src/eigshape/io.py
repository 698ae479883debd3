"""CSV persistence for vertex fields and cellwise coefficients.

Field files
    Line 1: ``dim,nx[,ny[,nz]],Lx[,Ly[,Lz]]`` (cells per axis, box sides;
    the box origin is the coordinate origin). Then one vertex value per
    line in row-major order, written with 17 significant digits so a read
    after write reproduces every bit.
Coefficient files
    Line 1: the field header followed by ``theta,Theta``. Then one line per
    cell in row-major order: ``cell_index`` and the upper triangle of the
    symmetric matrix row by row (``a11,a12,a22`` in 2D, six entries in 3D).
"""
from __future__ import annotations

import numpy as np

from .coeff import CoeffField
from .mesh import Box, Mesh, ScalarField, build_mesh


class FormatError(ValueError):
    pass


def _fmt(x) -> str:
    return format(float(x), ".17g")


def mesh_header(mesh: Mesh) -> list:
    if any(o != 0.0 for o in mesh.box.origin):
        raise FormatError("field files assume a box anchored at the origin")
    return [str(mesh.dim), *(str(n) for n in mesh.cells_per_axis), *(_fmt(s) for s in mesh.box.side_lengths)]


def _parse_header(line: str, extra: int = 0):
    parts = [p.strip() for p in line.strip().split(",")]
    try:
        dim = int(parts[0])
    except (ValueError, IndexError):
        raise FormatError(f"malformed header {line.strip()!r}: first entry must be the dimension") from None
    if dim not in (2, 3) or len(parts) != 1 + 2 * dim + extra:
        raise FormatError(
            f"malformed header {line.strip()!r}: expected {1 + 2 * dim + extra} entries for dim={dim}")
    try:
        cells = tuple(int(p) for p in parts[1:1 + dim])
        sides = tuple(float(p) for p in parts[1 + dim:1 + 2 * dim])
        rest = tuple(float(p) for p in parts[1 + 2 * dim:])
    except ValueError as exc:
        raise FormatError(f"malformed header {line.strip()!r}: {exc}") from None
    try:
        mesh = build_mesh(Box(sides), cells)
    except ValueError as exc:
        raise FormatError(f"malformed header {line.strip()!r}: {exc}") from None
    return mesh, rest


def _data_lines(lines):
    return [ln for ln in lines if ln.strip()]


def write_field(u: ScalarField, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(",".join(mesh_header(u.mesh)) + "\n")
        fh.write("\n".join(_fmt(v) for v in u.flat))
        fh.write("\n")


def read_field(path) -> ScalarField:
    with open(path, encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise FormatError("empty field file")
    mesh, _ = _parse_header(lines[0])
    body = _data_lines(lines[1:])
    if len(body) != mesh.vertex_count:
        raise FormatError(f"value count mismatch: expected {mesh.vertex_count}, found {len(body)}")
    try:
        vals = np.array([float(v) for v in body])
    except ValueError as exc:
        raise FormatError(f"non-numeric value: {exc}") from None
    return ScalarField(mesh, vals)


def _upper(d):
    return [(i, j) for i in range(d) for j in range(i, d)]


def write_coeff(A: CoeffField, path) -> None:
    mesh = A.mesh
    pairs = _upper(mesh.dim)
    mats = A.matrices.reshape(-1, mesh.dim, mesh.dim)
    with open(path, "w", encoding="ascii") as fh:
        fh.write(",".join(mesh_header(mesh) + [_fmt(A.theta), _fmt(A.Theta)]) + "\n")
        for c, m in enumerate(mats):
            fh.write(",".join([str(c)] + [_fmt(m[i, j]) for i, j in pairs]) + "\n")


def read_coeff(path) -> CoeffField:
    with open(path, encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise FormatError("empty coefficient file")
    mesh, (theta, Theta) = _parse_header(lines[0], extra=2)
    body = _data_lines(lines[1:])
    if len(body) != mesh.cell_count:
        raise FormatError(f"cell count mismatch: expected {mesh.cell_count}, found {len(body)}")
    d = mesh.dim
    pairs = _upper(d)
    mats = np.empty((mesh.cell_count, d, d))
    for lineno, ln in enumerate(body, start=2):
        parts = ln.split(",")
        if len(parts) != 1 + len(pairs):
            raise FormatError(f"line {lineno}: expected {1 + len(pairs)} entries, found {len(parts)}")
        try:
            idx = int(parts[0])
            vals = [float(p) for p in parts[1:]]
        except ValueError as exc:
            raise FormatError(f"line {lineno}: {exc}") from None
        if idx != lineno - 2:
            raise FormatError(f"line {lineno}: cells must be listed in order, expected {lineno - 2}, got {idx}")
        for (i, j), v in zip(pairs, vals):
            mats[idx, i, j] = mats[idx, j, i] = v
    return CoeffField(mesh, mats.reshape(mesh.cell_shape + (d, d)), theta, Theta)


def write_rows(path, header, rows) -> None:
    """Plain CSV with full-precision floats."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) if isinstance(v, (float, np.floating)) else str(v) for v in row) + "\n")
