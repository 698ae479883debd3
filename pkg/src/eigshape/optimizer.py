"""Projected gradient descent for the penalized functional.

Each iterate is kept nonnegative, zero on the box boundary and of unit
``L^2`` mass. Descent directions are the Euclidean gradient scaled by the
inverse lumped vertex volumes (a mesh-independent ``L^2`` gradient), and
step lengths are chosen by backtracking on a projected Armijo condition.
A continuation over ``(epsilon, s)`` sharpens the volume penalty stage by
stage, warm-starting each stage from the previous one.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .assembly import cell_mass
from .coeff import CoeffField
from .functional import FunctionalValue, PenaltyParams, evaluate, gradient_parts, smeared_volume
from .mesh import Mesh, ScalarField

logger = logging.getLogger(__name__)

HISTORY_COLUMNS = ("stage", "iter", "total", "dirichlet", "mass_penalty",
                   "volume_penalty", "exact_volume", "step")


class DegenerateStateError(ValueError):
    """Truncation to the nonnegative cone annihilated the field."""


@dataclass(frozen=True)
class Schedule:
    """Continuation schedule and line-search controls.

    ``step_init=None`` selects ``min(h)^2 / Theta``. ``max_outer`` caps the
    number of continuation stages actually run.
    """

    epsilon_sequence: tuple
    smear_sequence: tuple
    delta: float = 1e-3
    max_outer: int = 64
    max_inner: int = 4000
    tol_rel: float = 1e-6
    window: int = 25
    step_init: float = None
    backtrack_factor: float = 0.5
    armijo_c: float = 1e-4
    max_backtracks: int = 40

    def __post_init__(self):
        eps = tuple(float(e) for e in self.epsilon_sequence)
        smear = tuple(float(s) for s in self.smear_sequence)
        if not eps or len(eps) != len(smear):
            raise ValueError("epsilon and smear sequences must be nonempty and of equal length")
        for name, seq in (("epsilon", eps), ("smear", smear)):
            if any(not (v > 0 and math.isfinite(v)) for v in seq):
                raise ValueError(f"{name} sequence must be positive")
            if any(b > a for a, b in zip(seq, seq[1:])):
                raise ValueError(f"{name} sequence must be nonincreasing")
        if not 0 < self.backtrack_factor < 1:
            raise ValueError("backtrack_factor must lie in (0, 1)")
        if not 0 < self.armijo_c < 1:
            raise ValueError("armijo_c must lie in (0, 1)")
        if not self.tol_rel > 0:
            raise ValueError("tol_rel must be positive")
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.max_inner < 1 or self.max_outer < 1 or self.window < 1:
            raise ValueError("iteration caps must be positive")
        object.__setattr__(self, "epsilon_sequence", eps)
        object.__setattr__(self, "smear_sequence", smear)

    @classmethod
    def geometric(cls, epsilon0: float, smear0: float, n_stages: int = 6,
                  factor: float = 0.5, **kwargs) -> "Schedule":
        """Both sequences shrink by ``factor`` per stage."""
        eps = tuple(epsilon0 * factor ** k for k in range(n_stages))
        smear = tuple(smear0 * factor ** k for k in range(n_stages))
        return cls(eps, smear, **kwargs)

    def stages(self):
        n = min(len(self.epsilon_sequence), self.max_outer)
        for k in range(n):
            yield k, PenaltyParams(self.delta, self.epsilon_sequence[k], self.smear_sequence[k])


@dataclass
class MinimizerResult:
    u_star: ScalarField
    history: list = field(repr=False)
    converged: bool
    iterations: int
    final_params: PenaltyParams = None
    final_value: FunctionalValue = None
    stage_converged: list = field(default_factory=list)

    def write_history(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(HISTORY_COLUMNS)
            for row in self.history:
                writer.writerow([row[c] if c in ("stage", "iter") else repr(float(row[c]))
                                 for c in HISTORY_COLUMNS])


def project(u: ScalarField) -> ScalarField:
    """Truncate to ``u >= 0`` with zero trace and rescale to unit mass."""
    v = np.maximum(u.values, 0.0)
    v[u.mesh.boundary] = 0.0
    m = float(cell_mass(ScalarField(u.mesh, v)).sum())
    if not m > 0:
        raise DegenerateStateError("truncation to u >= 0 leaves the zero field")
    return ScalarField(u.mesh, v / math.sqrt(m))


def smoothed_ball(mesh: Mesh, volume: float = 0.9, center=None) -> ScalarField:
    """Cosine bump supported on the ball of the given volume, projected to unit mass."""
    d = mesh.dim
    center = mesh.box.center if center is None else np.asarray(center, dtype=float)
    unit_ball = math.pi ** (d / 2) / math.gamma(d / 2 + 1)
    radius = (volume / unit_ball) ** (1.0 / d)
    if radius >= mesh.box.distance_to_boundary(center):
        raise ValueError("initial ball does not fit inside the box")
    r = np.linalg.norm(mesh.coordinates - center, axis=-1)
    vals = np.where(r < radius, np.cos(0.5 * math.pi * r / radius), 0.0)
    return project(ScalarField(mesh, vals))


def default_schedule(u0: ScalarField, A: CoeffField, epsilon0: float = 0.05,
                     n_stages: int = 6, **kwargs) -> Schedule:
    """Geometric continuation starting from ``s = max(u0) / 4``."""
    smear0 = float(u0.values.max()) / 4.0
    if not smear0 > 0:
        raise ValueError("initial field must have a positive value somewhere")
    return Schedule.geometric(epsilon0, smear0, n_stages=n_stages, **kwargs)


def _record(history, stage, it, val: FunctionalValue, step):
    history.append({
        "stage": stage, "iter": it, "total": val.total, "dirichlet": val.dirichlet,
        "mass_penalty": val.mass_penalty, "volume_penalty": val.volume_penalty,
        "exact_volume": val.exact_volume, "step": step,
    })


def _volume_multiplier(trial, vol_of, target, mu_max, rel_tol=1e-3, max_bisect=30):
    """Smallest multiplier in ``[0, mu_max]`` whose trial point meets the volume target.

    Returns ``(mu, candidate)``; falls back to ``mu_max`` when even the full
    penalty gradient overshoots the target.
    """
    cand = trial(0.0)
    if vol_of(cand) <= target:
        return 0.0, cand
    hi_cand = trial(mu_max)
    if vol_of(hi_cand) > target:
        return mu_max, hi_cand
    lo, hi = 0.0, mu_max
    for _ in range(max_bisect):
        if hi - lo <= rel_tol * hi:
            break
        mid = 0.5 * (lo + hi)
        c = trial(mid)
        if vol_of(c) <= target:
            hi, hi_cand = mid, c
        else:
            lo = mid
    return hi, hi_cand


def _gradient_step(u, val, A, p, sched, t, inv_w):
    """One backtracking projected-gradient step; ``None`` if no step length passes."""
    mesh = u.mesh
    w = mesh.vertex_weights
    g, gv = gradient_parts(u, A, p, mass_tol=1e-10)
    d0, dv = g * inv_w, gv * inv_w
    above = val.smeared_volume > p.target_volume

    def vol_of(c):
        return smeared_volume(c, p.smear_s)

    t_try = t / sched.backtrack_factor
    for _ in range(sched.max_backtracks):
        def trial(mu, t_try=t_try):
            return project(ScalarField(mesh, u.values - t_try * (d0 + mu * dv)))
        try:
            if above:
                cand = trial(1.0 / p.epsilon)
            else:
                _, cand = _volume_multiplier(trial, vol_of, p.target_volume, 1.0 / p.epsilon)
        except DegenerateStateError:
            t_try *= sched.backtrack_factor
            continue
        cand_val = evaluate(cand, A, p)
        moved = float(np.sum(w * (cand.values - u.values) ** 2))
        if cand_val.total <= val.total - sched.armijo_c * moved / t_try:
            return cand, cand_val, t_try
        t_try *= sched.backtrack_factor
    return None


def _trim_support(u: ScalarField, A: CoeffField, p: PenaltyParams, val: FunctionalValue):
    """Zero the smallest positive vertices until the smeared volume meets the target.

    Used when the volume penalty is active but saturated (no vertex in
    ``(0, s)``), so its gradient vanishes. Returns ``(u, value)`` if the
    trimmed state lowers the total, else ``None``.
    """
    vals = u.values
    w = u.mesh.vertex_weights
    idx = np.flatnonzero(vals > 0)
    order = idx[np.argsort(vals.flat[idx], kind="stable")]
    contrib = w.flat[order] * np.minimum(vals.flat[order] / p.smear_s, 1.0)
    excess = val.smeared_volume - p.target_volume
    k = int(np.searchsorted(np.cumsum(contrib), excess * (1 + 1e-12))) + 1
    if k >= order.size:
        return None
    trimmed = vals.copy()
    trimmed.flat[order[:k]] = 0.0
    try:
        cand = project(ScalarField(u.mesh, trimmed))
    except DegenerateStateError:
        return None
    cand_val = evaluate(cand, A, p)
    if cand_val.total < val.total:
        return cand, cand_val
    return None


def minimize(A: CoeffField, sched: Schedule, u0: ScalarField, callback=None) -> MinimizerResult:
    """Minimize the smeared penalized functional from ``u0``.

    The volume penalty is nonsmooth at ``V_s = 1``. Its subgradient there
    is ``mu * grad V_s`` for any ``mu`` in ``[0, 1/epsilon]``; below the
    target each trial step picks the smallest such ``mu`` that keeps the
    trial point at or under the target, above it the full gradient is used.
    Step lengths backtrack until the projected Armijo condition
    ``F(u+) <= F(u) - c * |u+ - u|^2 / t`` holds on the true functional, so
    accepted iterates never increase it.

    When the penalty is active but saturated (every positive vertex above
    ``s``) its gradient vanishes; before a stage is declared stationary the
    smallest positive vertices are zeroed until the smeared volume meets
    the target, and that move is kept if it lowers the total.

    Each stage stops when the relative decrease over ``sched.window``
    accepted steps drops below ``sched.tol_rel`` or when no step length
    passes the line search (a discrete stationary point); otherwise it runs
    ``sched.max_inner`` iterations and is flagged unconverged.
    """
    mesh = A.mesh
    if u0.mesh != mesh:
        raise ValueError("initial field and coefficients live on different meshes")
    if np.any(u0.values < 0):
        raise ValueError("initial field must be nonnegative")
    u = project(u0)
    w = mesh.vertex_weights
    inv_w = np.where(mesh.interior, 1.0 / w, 0.0)
    t_init = sched.step_init if sched.step_init is not None else float(np.min(mesh.h)) ** 2 / A.Theta
    history = []
    stage_flags = []
    total_iters = 0
    val = None
    p = None
    for stage, p in sched.stages():
        val = evaluate(u, A, p)
        _record(history, stage, 0, val, 0.0)
        totals = [val.total]
        t = t_init
        converged = False
        try_trim = False
        for it in range(1, sched.max_inner + 1):
            step = None if try_trim else _gradient_step(u, val, A, p, sched, t, inv_w)
            if step is None and val.volume_penalty > 0:
                trimmed = _trim_support(u, A, p, val)
                if trimmed is not None:
                    step = trimmed + (t,)
                    totals = [val.total]
            try_trim = False
            if step is None:
                converged = True
                break
            u, val, t = step
            total_iters += 1
            totals.append(val.total)
            _record(history, stage, it, val, t)
            if callback is not None:
                callback(stage, it, u, val)
            if len(totals) > sched.window:
                ref = totals[-sched.window - 1]
                if ref - val.total <= sched.tol_rel * abs(val.total):
                    if val.volume_penalty > 0:
                        try_trim = True
                        continue
                    converged = True
                    break
        stage_flags.append(converged)
        logger.info("stage %d (eps=%.3g, s=%.3g): %d iters, total=%.6g dirichlet=%.6g "
                    "vol=%.4f converged=%s", stage, p.epsilon, p.smear_s, it, val.total,
                    val.dirichlet, val.smeared_volume, converged)
    return MinimizerResult(u_star=u, history=history, converged=bool(stage_flags and stage_flags[-1]),
                           iterations=total_iters, final_params=p, final_value=val,
                           stage_converged=stage_flags)
