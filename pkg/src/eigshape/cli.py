"""Command line entry point.

Subcommands::

    eigshape run CONFIG
    eigshape eigen MASK_FIELD COEFF [--tol T]
    eigshape diagnose FIELD COEFF [--threshold S] [--r-max R] [--levels N]
    eigshape sweep TEMPLATE --vary key=a,b,c [--vary ...] [--workers N]

Exit status is 0 on success, 1 on a pipeline failure and 2 on invalid
input; failures print ``[stage] message`` to stderr. The sweep worker cap
comes from ``--workers``, else ``EIGSHAPE_WORKERS``, else the CPU count.
"""
from __future__ import annotations

import argparse
import itertools
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from . import io
from .config import SCHEMA, ConfigError, load_config, parse_config, serialize
from .diagnostics import (boundary_growth_fit, extract_free_boundary, holder_fit, interior_points,
                          summarize_exponents)
from .eigensolver import lambda1
from .mesh import DomainMask
from .pipeline import PipelineError, _jsonable, run_experiment


EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2
WORKERS_ENV = "EIGSHAPE_WORKERS"


def _fail(stage, exc, code=EXIT_FAILED):
    print(f"[{stage}] {type(exc).__name__}: {exc}", file=sys.stderr)
    return code


def _print_json(data):
    print(json.dumps(_jsonable(data), indent=2, sort_keys=True))


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
    except (OSError, ConfigError) as exc:
        return _fail("config", exc, EXIT_USAGE)
    try:
        report = run_experiment(cfg)
    except PipelineError as exc:
        return _fail(exc.stage, exc.cause)
    print(f"lambda1 = {report.lambda1:.10g}  ->  {report.run_dir}")
    return EXIT_OK


def cmd_eigen(args) -> int:
    try:
        mask_field = io.read_field(args.mask)
        A = io.read_coeff(args.coeff)
    except (OSError, ValueError) as exc:
        return _fail("read", exc, EXIT_USAGE)
    try:
        res = lambda1(DomainMask.from_field(mask_field, 0.0), A, tol=args.tol)
    except (ValueError, ArithmeticError) as exc:
        return _fail("eigen", exc)
    if args.out:
        io.write_field(res.eigenfunction, args.out)
    _print_json({"lambda1": res.lambda1, "residual": res.residual, "iterations": res.iterations})
    return EXIT_OK


def cmd_diagnose(args) -> int:
    try:
        u = io.read_field(args.field)
        A = io.read_coeff(args.coeff)
    except (OSError, ValueError) as exc:
        return _fail("read", exc, EXIT_USAGE)
    if A.mesh != u.mesh:
        return _fail("read", ValueError("field and coefficients live on different meshes"), EXIT_USAGE)
    try:
        pts = interior_points(u, args.threshold, args.r_max, args.points, seed=args.seed)
        interior = [holder_fit(u, c, args.r_max, args.levels) for c in pts]
        fb = extract_free_boundary(u, args.threshold)
        boundary = boundary_growth_fit(u, fb, args.r_max, args.levels)
    except (ValueError, ArithmeticError) as exc:
        return _fail("diagnostics", exc)
    _print_json({"interior_holder": summarize_exponents(interior),
                 "boundary_growth": summarize_exponents(boundary),
                 "free_boundary_points": len(fb)})
    return EXIT_OK


def parse_vary(items) -> list:
    """``["k=a,b", "j=c"]`` -> list of ``(key, [values])``."""
    out = []
    for item in items:
        if "=" not in item:
            raise ValueError(f"--vary expects key=a,b,c, got {item!r}")
        key, vals = item.split("=", 1)
        key = key.strip()
        if key not in SCHEMA:
            raise ValueError(f"unknown key {key!r} in --vary")
        values = [v.strip() for v in vals.split(",") if v.strip()]
        if not values:
            raise ValueError(f"--vary {key} has no values")
        out.append((key, values))
    return out


def sweep_configs(template_text: str, vary) -> list:
    """Config texts for the cartesian product of the varied values."""
    base = parse_config(template_text)
    keys = [k for k, _ in vary]
    texts = []
    for combo in itertools.product(*(v for _, v in vary)):
        lines = [ln for ln in serialize(base).splitlines() if ln.split("=", 1)[0].strip() not in keys]
        lines += [f"{k} = {v}" for k, v in zip(keys, combo)]
        suffix = "_".join(f"{k.split('.')[-1]}-{v}" for k, v in zip(keys, combo))
        run_id = f"{base['output.run_id']}_{suffix}".replace("/", "-").replace(" ", "")
        lines = [ln for ln in lines if not ln.startswith("output.run_id")] + [f"output.run_id = {run_id}"]
        texts.append("\n".join(lines) + "\n")
    return texts


def _sweep_worker(text):
    try:
        report = run_experiment(parse_config(text))
        return report.body["config"]["output.run_id"], report.lambda1, None
    except ConfigError as exc:
        return None, None, f"[config] {exc}"
    except PipelineError as exc:
        return parse_config(text)["output.run_id"], None, str(exc)


def worker_cap(requested=None) -> int:
    if requested:
        return max(1, int(requested))
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def cmd_sweep(args) -> int:
    try:
        with open(args.template, encoding="utf-8") as fh:
            texts = sweep_configs(fh.read(), parse_vary(args.vary))
        for t in texts:
            parse_config(t)
    except (OSError, ValueError) as exc:
        return _fail("config", exc, EXIT_USAGE)
    workers = worker_cap(args.workers)
    if workers == 1:
        results = [_sweep_worker(t) for t in texts]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_worker, texts))
    failed = 0
    for run_id, lam, err in results:
        if err:
            failed += 1
            print(f"{run_id}: FAILED {err}", file=sys.stderr)
        else:
            print(f"{run_id}: lambda1 = {lam:.10g}")
    return EXIT_FAILED if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="eigshape",
                                 description="Eigenvalue shape optimization for rough elliptic operators")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run one experiment from a config file")
    p.add_argument("config")
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("eigen", help="first eigenvalue on a mask field (active where > 0)")
    p.add_argument("mask")
    p.add_argument("coeff")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--out", help="write the eigenfunction to this field file")
    p.set_defaults(func=cmd_eigen)
    p = sub.add_parser("diagnose", help="regularity fits on a field")
    p.add_argument("field")
    p.add_argument("coeff")
    p.add_argument("--threshold", type=float, default=1e-2)
    p.add_argument("--r-max", type=float, default=0.375)
    p.add_argument("--levels", type=int, default=3)
    p.add_argument("--points", type=int, default=60)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_diagnose)
    p = sub.add_parser("sweep", help="run a config template over varied keys")
    p.add_argument("template")
    p.add_argument("--vary", action="append", required=True, metavar="KEY=A,B,C")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
