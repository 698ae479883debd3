"""Experiment configuration in a line-oriented ``section.key = value`` format.

Blank lines and ``#`` comments are ignored. Lists are comma separated.
Every key has a documented default (see :data:`SCHEMA`); parsing collects
all errors, each with its line number, before raising.

Example::

    mesh.resolution = 128
    coeff.generator = checkerboard
    coeff.a_odd = 10
    output.run_id = cb128
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

GENERATORS = ("identity", "checkerboard", "random")
_RUN_ID = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]*$")


def _bool(text):
    low = text.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _floats(text):
    return tuple(float(x) for x in text.split(","))


def _optional_float(text):
    return None if text.strip().lower() in ("auto", "none") else float(text)


# key -> (parser, default, help)
SCHEMA = {
    "mesh.dim": (int, 2, "space dimension, 2 or 3"),
    "mesh.box": (_floats, (3.0, 3.0), "box side lengths"),
    "mesh.resolution": (int, 128, "cells per axis"),
    "coeff.generator": (str, "identity", "one of " + ", ".join(GENERATORS)),
    "coeff.scale": (float, 1.0, "identity generator: A = scale * I"),
    "coeff.block_cells": (int, 8, "checkerboard/random block width in cells"),
    "coeff.a_even": (float, 1.0, "checkerboard: A = a_even * I on even blocks"),
    "coeff.a_odd": (float, 10.0, "checkerboard: A = a_odd * I on odd blocks"),
    "coeff.theta": (float, 1.0, "random: lower ellipticity bound"),
    "coeff.Theta": (float, 4.0, "random: upper ellipticity bound"),
    "coeff.seed": (int, 0, "random: generator seed"),
    "penalty.delta": (float, 1e-3, "mass penalty weight 1/delta (reporting only)"),
    "penalty.epsilon0": (float, 0.05, "first-stage volume penalty parameter"),
    "penalty.smear0": (_optional_float, None, "first-stage smearing width; auto = max(u0)/4"),
    "penalty.n_stages": (int, 6, "continuation stages"),
    "penalty.factor": (float, 0.5, "per-stage shrink factor for epsilon and smear"),
    "penalty.max_inner": (int, 4000, "iteration cap per stage"),
    "penalty.tol_rel": (float, 1e-6, "relative decrease threshold over the window"),
    "penalty.window": (int, 25, "window length for the stopping test"),
    "init.volume": (float, 0.9, "volume of the initial smoothed ball"),
    "init.starts": (int, 1, "number of starts; extra starts use seeded ball centers"),
    "init.seed": (int, 0, "seed for extra start centers"),
    "pipeline.inflate": (_bool, False, "dilate the extracted mask to unit measure before the eigensolve"),
    "pipeline.eig_tol": (float, 1e-10, "eigensolver tolerance"),
    "diagnostics.enabled": (_bool, True, "run regularity and equivalence diagnostics"),
    "diagnostics.r_max": (float, 0.375, "largest fit radius"),
    "diagnostics.levels": (int, 3, "dyadic fit levels"),
    "diagnostics.points": (int, 60, "sampled interior points"),
    "diagnostics.caccioppoli_points": (int, 50, "sampled Caccioppoli centers"),
    "diagnostics.seed": (int, 0, "sampling seed"),
    "output.dir": (str, "runs", "output root directory"),
    "output.run_id": (str, "run", "subdirectory name, filesystem safe"),
}


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists ``(line, message)`` pairs."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(f"line {ln}: {msg}" if ln else msg for ln, msg in self.errors))


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated settings; ``values`` maps every schema key to its value."""

    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def section(self, name: str) -> dict:
        prefix = name + "."
        return {k[len(prefix):]: v for k, v in self.values.items() if k.startswith(prefix)}

    def replace(self, **changes) -> "ExperimentConfig":
        """Copy with dotted keys given as ``section__key=value``."""
        vals = dict(self.values)
        for k, v in changes.items():
            key = k.replace("__", ".")
            if key not in SCHEMA:
                raise ConfigError([(None, f"unknown key {key!r}")])
            vals[key] = v
        errors = _validate(vals, {})
        if errors:
            raise ConfigError(errors)
        return ExperimentConfig(vals)

    def __eq__(self, other):
        return isinstance(other, ExperimentConfig) and self.values == other.values

    def __hash__(self):
        return hash(tuple(sorted(self.values.items())))


def defaults() -> dict:
    return {k: v[1] for k, v in SCHEMA.items()}


def _check(cond, errors, line, msg):
    if not cond:
        errors.append((line, msg))


def _validate(vals: dict, lines: dict) -> list:
    errors = []

    def ln(key):
        return lines.get(key)

    dim = vals["mesh.dim"]
    _check(dim in (2, 3), errors, ln("mesh.dim"), f"mesh.dim must be 2 or 3, got {dim}")
    box = vals["mesh.box"]
    if "mesh.box" not in lines and dim == 3 and len(box) == 2:
        box = vals["mesh.box"] = box + (box[0],)
    _check(len(box) == dim, errors, ln("mesh.box"), f"mesh.box needs {dim} side lengths, got {len(box)}")
    _check(all(b > 0 and math.isfinite(b) for b in box), errors, ln("mesh.box"),
           "mesh.box side lengths must be positive")
    _check(vals["mesh.resolution"] >= 2, errors, ln("mesh.resolution"), "mesh.resolution must be >= 2")
    gen = vals["coeff.generator"]
    _check(gen in GENERATORS, errors, ln("coeff.generator"),
           f"unknown generator {gen!r}; valid generators: {', '.join(GENERATORS)}")
    for key in ("coeff.scale", "coeff.a_even", "coeff.a_odd", "coeff.theta", "coeff.Theta",
                "penalty.delta", "penalty.epsilon0", "penalty.tol_rel", "init.volume",
                "pipeline.eig_tol", "diagnostics.r_max"):
        _check(vals[key] > 0 and math.isfinite(vals[key]), errors, ln(key), f"{key} must be positive")
    _check(vals["coeff.theta"] <= vals["coeff.Theta"], errors, ln("coeff.Theta"),
           "coeff.Theta must be >= coeff.theta")
    _check(vals["coeff.block_cells"] >= 1, errors, ln("coeff.block_cells"), "coeff.block_cells must be >= 1")
    s0 = vals["penalty.smear0"]
    _check(s0 is None or s0 > 0, errors, ln("penalty.smear0"), "penalty.smear0 must be positive or auto")
    _check(0 < vals["penalty.factor"] <= 1, errors, ln("penalty.factor"), "penalty.factor must lie in (0, 1]")
    for key in ("penalty.n_stages", "penalty.max_inner", "penalty.window", "init.starts",
                "diagnostics.points", "diagnostics.caccioppoli_points"):
        _check(vals[key] >= 1, errors, ln(key), f"{key} must be >= 1")
    _check(vals["diagnostics.levels"] >= 3, errors, ln("diagnostics.levels"), "diagnostics.levels must be >= 3")
    _check(bool(_RUN_ID.match(vals["output.run_id"])), errors, ln("output.run_id"),
           f"output.run_id must be nonempty and filesystem safe, got {vals['output.run_id']!r}")
    _check(bool(vals["output.dir"]), errors, ln("output.dir"), "output.dir must be nonempty")
    return errors


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate; raises :class:`ConfigError` listing every problem."""
    vals = defaults()
    lines = {}
    errors = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append((lineno, f"expected 'section.key = value', got {raw.strip()!r}"))
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in SCHEMA:
            errors.append((lineno, f"unknown key {key!r}"))
            continue
        if key in lines:
            errors.append((lineno, f"duplicate key {key!r} (first set on line {lines[key]})"))
            continue
        parser = SCHEMA[key][0]
        try:
            vals[key] = parser(value)
        except ValueError:
            errors.append((lineno, f"{key}: cannot parse {value!r} as {getattr(parser, '__name__', 'value')}"))
            continue
        lines[key] = lineno
    errors += _validate(vals, lines)
    errors.sort(key=lambda e: e[0] or 0)
    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(vals)


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "auto"
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize(cfg: ExperimentConfig) -> str:
    """Text form that :func:`parse_config` maps back to an equal config."""
    out = []
    section = None
    for key in SCHEMA:
        sec = key.split(".", 1)[0]
        if sec != section:
            if section is not None:
                out.append("")
            section = sec
        out.append(f"{key} = {_format(cfg.values[key])}")
    return "\n".join(out) + "\n"


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
