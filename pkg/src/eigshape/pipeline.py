"""End-to-end experiment: generate, minimize, extract, solve, diagnose, persist.

Artifacts land in ``<output.dir>/<output.run_id>/``:

``report.json``
    the :class:`RunReport` body (keys sorted; ``timing`` is the only
    nondeterministic section)
``u_star.csv``, ``coeff.csv``, ``eigenfunction.csv``
    field and coefficient files (see :mod:`eigshape.io`)
``history.csv``
    optimizer iterations
``free_boundary.csv``, ``interior_fits.csv``, ``boundary_fits.csv``
    diagnostics plot data (only when diagnostics are enabled)
``FAILED``
    written on error with the failing stage and message
"""
from __future__ import annotations

import json
import math
import os
import shutil
import time
from dataclasses import dataclass, field

import numpy as np

from . import io
from ._version import __version__
from .coeff import CoeffField, make_checkerboard, make_identity, make_random_piecewise
from .config import ExperimentConfig
from .diagnostics import (boundary_growth_fit, caccioppoli_scan, equivalence_check,
                          extract_free_boundary, holder_fit, interior_points, summarize_exponents)
from .eigensolver import inflate_to_volume, lambda1
from .mesh import Box, DomainMask, Mesh, ScalarField, build_mesh
from .optimizer import Schedule, minimize, smoothed_ball


class PipelineError(RuntimeError):
    """Failure inside one pipeline stage."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")


@dataclass
class RunReport:
    body: dict
    timing: dict = field(default_factory=dict)
    run_dir: str = None

    @property
    def lambda1(self) -> float:
        return self.body["lambda1"]

    def to_dict(self) -> dict:
        return {**self.body, "timing": self.timing}

    def to_json(self, include_timing: bool = True) -> str:
        data = self.to_dict() if include_timing else self.body
        return json.dumps(_jsonable(data), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def make_mesh(cfg: ExperimentConfig) -> Mesh:
    return build_mesh(Box(cfg["mesh.box"]), cfg["mesh.resolution"])


def make_coeff(cfg: ExperimentConfig, mesh: Mesh) -> CoeffField:
    gen = cfg["coeff.generator"]
    d = mesh.dim
    if gen == "identity":
        return make_identity(mesh, cfg["coeff.scale"])
    if gen == "checkerboard":
        return make_checkerboard(mesh, cfg["coeff.block_cells"], cfg["coeff.a_even"] * np.eye(d),
                                 cfg["coeff.a_odd"] * np.eye(d))
    if gen == "random":
        return make_random_piecewise(mesh, cfg["coeff.seed"], cfg["coeff.theta"], cfg["coeff.Theta"],
                                     cfg["coeff.block_cells"])
    raise ValueError(f"unknown generator {gen!r}")


def make_schedule(cfg: ExperimentConfig, u0: ScalarField) -> Schedule:
    smear0 = cfg["penalty.smear0"]
    if smear0 is None:
        smear0 = float(u0.values.max()) / 4.0
    return Schedule.geometric(cfg["penalty.epsilon0"], smear0, n_stages=cfg["penalty.n_stages"],
                              factor=cfg["penalty.factor"], delta=cfg["penalty.delta"],
                              max_inner=cfg["penalty.max_inner"], tol_rel=cfg["penalty.tol_rel"],
                              window=cfg["penalty.window"])


def start_centers(cfg: ExperimentConfig, mesh: Mesh) -> list:
    """Box center first, then seeded centers where the initial ball fits."""
    d = mesh.dim
    unit_ball = math.pi ** (d / 2) / math.gamma(d / 2 + 1)
    radius = (cfg["init.volume"] / unit_ball) ** (1.0 / d)
    margin = radius + 2 * float(np.max(mesh.h))
    lo = np.asarray(mesh.box.origin) + margin
    hi = np.asarray(mesh.box.origin) + np.asarray(mesh.box.side_lengths) - margin
    centers = [mesh.box.center]
    rng = np.random.default_rng(cfg["init.seed"])
    for _ in range(cfg["init.starts"] - 1):
        centers.append(rng.uniform(lo, hi) if np.all(hi > lo) else mesh.box.center)
    return centers


def layer_volume(u: ScalarField, threshold: float) -> float:
    """Volume of cells whose corners straddle ``{u > threshold}``."""
    mesh = u.mesh
    above = u.values > threshold
    any_ = np.zeros(mesh.cell_shape, dtype=bool)
    all_ = np.ones(mesh.cell_shape, dtype=bool)
    for sl in mesh.corner_slices():
        any_ |= above[sl]
        all_ &= above[sl]
    return float(np.count_nonzero(any_ & ~all_)) * mesh.cell_volume


class _Stages:
    def __init__(self):
        self.timing = {}

    def run(self, name, fn, *args, **kwargs):
        t0 = time.perf_counter()
        try:
            return fn(*args, **kwargs)
        except PipelineError:
            raise
        except Exception as exc:
            raise PipelineError(name, exc) from exc
        finally:
            self.timing[name] = self.timing.get(name, 0.0) + time.perf_counter() - t0


def _fit_rows(fits):
    return [[*f.center, f.exponent, f.prefactor, f.r2] for f in fits]


def _diagnostics(cfg, u, A, final_params, result) -> tuple:
    s = final_params.smear_s
    r_max, levels = cfg["diagnostics.r_max"], cfg["diagnostics.levels"]
    seed = cfg["diagnostics.seed"]
    pts = interior_points(u, s, r_max, cfg["diagnostics.points"], seed=seed)
    interior = [holder_fit(u, c, r_max, levels) for c in pts]
    fb = extract_free_boundary(u, s)
    boundary = boundary_growth_fit(u, fb, r_max, levels)
    cac_pts = interior_points(u, 0.0, r_max, cfg["diagnostics.caccioppoli_points"], seed=seed + 1)
    ratios = caccioppoli_scan(u, A, cac_pts, r_max) if len(cac_pts) else np.zeros((0, 3))
    growth = ratios[:, 1:] / np.where(ratios[:, :-1] > 0, ratios[:, :-1], np.inf)
    eq = equivalence_check(result, A, final_params, tol=cfg["pipeline.eig_tol"])
    summary = {
        "interior_holder": summarize_exponents(interior),
        "interior_holder_l2_median": float(np.nanmedian([f.l2_exponent for f in interior]))
        if interior else None,
        "boundary_growth": summarize_exponents(boundary),
        "free_boundary_points": len(fb),
        "caccioppoli": {
            "points": int(len(cac_pts)),
            "max_ratio": float(ratios.max()) if ratios.size else None,
            "max_growth_per_halving": float(growth.max()) if growth.size else None,
        },
        "equivalence": {"f_min": eq.f_min, "f_eig": eq.f_eig, "gap": eq.gap},
    }
    return summary, interior, boundary, fb


def run_experiment(cfg: ExperimentConfig, overwrite: bool = True) -> RunReport:
    """Run the full pipeline and write every artifact under ``output.dir/run_id``.

    Errors are re-raised as :class:`PipelineError` naming the stage, after a
    ``FAILED`` marker is written next to whatever artifacts already exist.
    """
    run_dir = os.path.join(cfg["output.dir"], cfg["output.run_id"])
    if overwrite and os.path.isdir(run_dir):
        shutil.rmtree(run_dir)
    os.makedirs(run_dir, exist_ok=True)
    stages = _Stages()
    try:
        report = _run(cfg, run_dir, stages)
    except PipelineError as exc:
        with open(os.path.join(run_dir, "FAILED"), "w", encoding="utf-8") as fh:
            fh.write(f"stage: {exc.stage}\nerror: {type(exc.cause).__name__}: {exc.cause}\n")
        raise
    return report


def _run(cfg, run_dir, stages) -> RunReport:
    t_start = time.perf_counter()
    mesh = stages.run("generate", make_mesh, cfg)
    A = stages.run("generate", make_coeff, cfg, mesh)
    stages.run("persist", io.write_coeff, A, os.path.join(run_dir, "coeff.csv"))

    starts = []
    best = None
    for k, center in enumerate(start_centers(cfg, mesh)):
        u0 = stages.run("generate", smoothed_ball, mesh, cfg["init.volume"], center)
        sched = stages.run("generate", make_schedule, cfg, u0)
        res = stages.run("minimize", minimize, A, sched, u0)
        starts.append({"start": k, "center": [float(c) for c in center],
                       "total": res.final_value.total, "dirichlet": res.final_value.dirichlet,
                       "converged": res.converged})
        if best is None or res.final_value.total < best.final_value.total:
            best = res
    res = best
    u = res.u_star
    p = res.final_params
    stages.run("persist", io.write_field, u, os.path.join(run_dir, "u_star.csv"))
    stages.run("persist", res.write_history, os.path.join(run_dir, "history.csv"))

    mask = stages.run("extract", DomainMask.from_field, u, 0.0)
    inflated = False
    if cfg["pipeline.inflate"] and mask.measure < p.target_volume:
        mask = stages.run("inflate", inflate_to_volume, mask, p.target_volume)
        inflated = True
    eig = stages.run("eigen", lambda1, mask, A, cfg["pipeline.eig_tol"])
    stages.run("persist", io.write_field, eig.eigenfunction, os.path.join(run_dir, "eigenfunction.csv"))

    val = res.final_value
    body = {
        "version": __version__,
        "config": dict(cfg.values),
        "lambda1": eig.lambda1,
        "eigen": {"residual": eig.residual, "iterations": eig.iterations},
        "mask": {"threshold": 0.0, "measure": mask.measure, "inflated": inflated},
        "functional": val.to_dict(),
        "final_params": {"delta": p.delta, "epsilon": p.epsilon, "smear_s": p.smear_s},
        "constraints": {
            "mass_residual": abs(val.mass - 1.0),
            "exact_volume": val.exact_volume,
            "layer_volume": layer_volume(u, p.smear_s),
        },
        "convergence": {"converged": res.converged, "stage_converged": res.stage_converged,
                        "iterations": res.iterations},
        "multistart": starts,
    }
    if cfg["diagnostics.enabled"]:
        summary, interior, boundary, fb = stages.run("diagnostics", _diagnostics, cfg, u, A, p, res)
        body["diagnostics"] = summary
        d = mesh.dim
        coord = ["x", "y", "z"][:d]
        stages.run("persist", io.write_rows, os.path.join(run_dir, "free_boundary.csv"), coord,
                   [[*pt] for pt in fb.points])
        for name, fits in (("interior_fits.csv", interior), ("boundary_fits.csv", boundary)):
            stages.run("persist", io.write_rows, os.path.join(run_dir, name),
                       coord + ["exponent", "prefactor", "r2"], _fit_rows(fits))
    timing = dict(stages.timing)
    timing["total"] = time.perf_counter() - t_start
    report = RunReport(body, timing, run_dir)
    with open(os.path.join(run_dir, "report.json"), "w", encoding="utf-8") as fh:
        fh.write(report.to_json())
    return report
