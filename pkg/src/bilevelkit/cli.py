"""Experiment specs, sweep runner, and the command-line interface.

A spec is one YAML document with four sections (``problem``,
``solver``, ``sweep``, ``output``); see the README for the full key
reference. ``run`` executes every (seed, gamma, tau) cell of the
sweep, streaming one trace file per cell plus ``summary.json`` and, on
partial failure, ``failures.json``. Trace files contain only
deterministic columns, so rerunning a spec reproduces them
byte-for-byte; wall-clock timings live in the summary.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import dataclasses
import itertools
import json
import os
import sys
import time
import traceback

import numpy as np
import yaml

from . import kernels
from .bench import (Dataset, HypercleanProblem, QuadraticBilevel, flip_labels,
                    load_libsvm, make_hyperclean, make_quadratic,
                    make_synthetic_binary, save_libsvm)
from .problem import validate_problem
from .reference import inner_solve, stationarity_measure
from .rngs import substream
from .solver import SolverConfig, TraceRecord, config_advisories, config_errors, run

SCHEMA_VERSION = 1
TRACE_COLUMNS = ("k", "eta_k", "w_norm", "v_norm", "x_step_norm",
                 "y_step_norm", "f_value", "g_value")
_FORMATS = ("csv", "json")


# ---------------------------------------------------------------------------
# spec model


@dataclasses.dataclass(frozen=True)
class Sweep:
    seeds: tuple[int, ...] = (0,)
    gamma_grid: tuple[float, ...] | None = None
    tau_grid: tuple[float, ...] | None = None


@dataclasses.dataclass(frozen=True)
class OutputSpec:
    directory: str = "out"
    formats: tuple[str, ...] = ("csv",)


@dataclasses.dataclass(frozen=True)
class ExperimentSpec:
    problem: dict
    solver: SolverConfig = dataclasses.field(default_factory=SolverConfig)
    sweep: Sweep = dataclasses.field(default_factory=Sweep)
    output: OutputSpec = dataclasses.field(default_factory=OutputSpec)


def _known_fields(cls) -> set[str]:
    return {f.name for f in dataclasses.fields(cls)}


def spec_from_dict(doc: dict) -> ExperimentSpec:
    if not isinstance(doc, dict):
        raise ValueError("spec document must be a mapping")
    unknown = set(doc) - {"problem", "solver", "sweep", "output"}
    if unknown:
        raise ValueError(f"unknown top-level spec sections: {sorted(unknown)}")
    problem = doc.get("problem")
    if not isinstance(problem, dict) or "kind" not in problem:
        raise ValueError("spec needs a problem section with a 'kind'")

    def build(cls, section, name, coerce=()):
        data = dict(doc.get(section) or {})
        bad = set(data) - _known_fields(cls)
        if bad:
            raise ValueError(f"unknown {name} keys: {sorted(bad)}")
        for key, fn in coerce:
            if data.get(key) is not None:
                data[key] = fn(data[key])
        return cls(**data)

    solver = build(SolverConfig, "solver", "solver")
    sweep = build(Sweep, "sweep", "sweep", coerce=[
        ("seeds", lambda v: tuple(int(s) for s in v)),
        ("gamma_grid", lambda v: tuple(float(g) for g in v)),
        ("tau_grid", lambda v: tuple(float(t) for t in v)),
    ])
    output = build(OutputSpec, "output", "output", coerce=[
        ("formats", lambda v: tuple(str(f) for f in v)),
    ])
    return ExperimentSpec(problem=dict(problem), solver=solver,
                          sweep=sweep, output=output)


def spec_to_dict(spec: ExperimentSpec) -> dict:
    return {
        "problem": dict(spec.problem),
        "solver": dataclasses.asdict(spec.solver),
        "sweep": {"seeds": list(spec.sweep.seeds),
                  "gamma_grid": None if spec.sweep.gamma_grid is None
                  else list(spec.sweep.gamma_grid),
                  "tau_grid": None if spec.sweep.tau_grid is None
                  else list(spec.sweep.tau_grid)},
        "output": {"directory": spec.output.directory,
                   "formats": list(spec.output.formats)},
    }


def load_spec(path) -> ExperimentSpec:
    with open(path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    return spec_from_dict(doc)


def save_spec(spec: ExperimentSpec, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(spec_to_dict(spec), fh, sort_keys=False)


# ---------------------------------------------------------------------------
# validation


@dataclasses.dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "advisory"
    message: str


def validate_config(spec: ExperimentSpec, probe_oracles: bool = False) -> list[Diagnostic]:
    """Collect hard errors and theory advisories; never raises."""
    out: list[Diagnostic] = []

    def err(msg):
        out.append(Diagnostic("error", msg))

    def adv(msg):
        out.append(Diagnostic("advisory", msg))

    for msg in config_errors(spec.solver):
        err(f"solver: {msg}")

    kind = spec.problem.get("kind")
    if kind not in ("quadratic", "hyperclean"):
        err(f"problem: unknown kind {kind!r}")
    if not spec.sweep.seeds:
        err("sweep: seeds must be nonempty")
    for gname in ("gamma_grid", "tau_grid"):
        grid = getattr(spec.sweep, gname)
        if grid is not None:
            if len(grid) == 0:
                err(f"sweep: {gname} must be nonempty when given")
            elif any(not (g > 0 and np.isfinite(g)) for g in grid):
                err(f"sweep: {gname} entries must be positive and finite")
    bad_formats = set(spec.output.formats) - set(_FORMATS)
    if bad_formats:
        err(f"output: unknown formats {sorted(bad_formats)}; pick from {_FORMATS}")
    if not spec.output.formats:
        err("output: at least one format required")

    problem_obj = None
    if not any(d.severity == "error" for d in out):
        try:
            built = _build_problem(spec.problem, int(spec.sweep.seeds[0]))
            problem_obj = built.problem
        except FileNotFoundError as exc:
            adv(f"problem data not reachable yet: {exc}")
        except Exception as exc:
            err(f"problem: cannot construct ({exc})")
    if problem_obj is not None:
        for note in config_advisories(spec.solver, problem_obj):
            adv(note)
        if probe_oracles:
            report = validate_problem(problem_obj, probes=4, seed=0)
            for check in report.failed_checks():
                err(f"oracle check {check.name!r} failed (worst={check.worst:.3e})")
    return out


# ---------------------------------------------------------------------------
# problem construction


@dataclasses.dataclass
class BuiltProblem:
    problem: object  # BilevelProblem
    x0: np.ndarray
    y0: np.ndarray
    quad: QuadraticBilevel | None = None
    hyperclean: HypercleanProblem | None = None
    flip_mask: np.ndarray | None = None


def _build_problem(cfg: dict, seed: int) -> BuiltProblem:
    cfg = dict(cfg)
    kind = cfg.pop("kind")
    if kind == "quadratic":
        allowed = {"d1", "d2", "mu_g", "L_g", "coupling_scale", "box_halfwidth",
                   "rho", "target_scale", "instance_seed"}
        bad = set(cfg) - allowed
        if bad:
            raise ValueError(f"unknown quadratic keys: {sorted(bad)}")
        instance_seed = int(cfg.pop("instance_seed", 0))
        quad = make_quadratic(seed=instance_seed, **cfg)
        p = quad.problem
        return BuiltProblem(problem=p, quad=quad,
                            x0=np.zeros(p.d1),
                            y0=p.constraint.project(np.zeros(p.d2)))
    if kind == "hyperclean":
        allowed = {"c_reg", "radius", "flip_fraction", "data"}
        bad = set(cfg) - allowed
        if bad:
            raise ValueError(f"unknown hyperclean keys: {sorted(bad)}")
        data_cfg = dict(cfg.get("data") or {})
        if "train" in data_cfg:
            train = load_libsvm(data_cfg["train"])
            val = load_libsvm(data_cfg["val"])
        else:
            data_kind = data_cfg.pop("kind", "synthetic-binary")
            if data_kind != "synthetic-binary":
                raise ValueError(f"unknown data kind {data_kind!r}")
            train, val = make_synthetic_binary(**data_cfg)
        flip_fraction = float(cfg.get("flip_fraction", 0.0))
        mask = None
        if flip_fraction > 0.0:
            train, mask = flip_labels(train, flip_fraction,
                                      substream(seed, "data-corruption"))
        hc = make_hyperclean(train, val, c_reg=float(cfg.get("c_reg", 1e-2)),
                             radius=float(cfg.get("radius", 1.0)))
        p = hc.problem
        return BuiltProblem(problem=p, hyperclean=hc, flip_mask=mask,
                            x0=np.zeros(p.d1), y0=np.zeros(p.d2))
    raise ValueError(f"unknown problem kind {kind!r}")


# ---------------------------------------------------------------------------
# sweep execution


def _float_token(v: float) -> str:
    return repr(float(v))


def cell_id(seed: int, gamma: float, tau: float) -> str:
    return f"seed{seed}_gamma{_float_token(gamma)}_tau{_float_token(tau)}"


def _fmt_cell(v) -> str:
    if isinstance(v, int):
        return str(v)
    return repr(float(v))


class _CsvTraceSink:
    def __init__(self, path):
        self.fh = open(path, "w", encoding="utf-8", newline="\n")
        self.fh.write(",".join(TRACE_COLUMNS) + "\n")

    def __call__(self, rec: TraceRecord) -> None:
        vals = [getattr(rec, c) for c in TRACE_COLUMNS]
        self.fh.write(",".join(_fmt_cell(v) for v in vals) + "\n")

    def close(self) -> None:
        self.fh.close()


def _record_dict(rec: TraceRecord) -> dict:
    return {c: getattr(rec, c) for c in TRACE_COLUMNS}


def _run_cell(spec_doc: dict, seed: int, gamma: float, tau: float) -> dict:
    """Execute one sweep cell; returns its summary row. Pickle-friendly."""
    spec = spec_from_dict(spec_doc)
    built = _build_problem(spec.problem, seed)
    p = built.problem
    cfg = dataclasses.replace(spec.solver, seed=seed, gamma=gamma, tau=tau)
    cid = cell_id(seed, gamma, tau)
    outdir = spec.output.directory
    os.makedirs(outdir, exist_ok=True)

    sinks = []
    if "csv" in spec.output.formats:
        sinks.append(_CsvTraceSink(os.path.join(outdir, f"trace_{cid}.csv")))
    t0 = time.perf_counter()
    try:
        trace = run(p, built.x0, built.y0, cfg,
                    trace_sink=(sinks[0] if sinks else None))
    finally:
        for s in sinks:
            s.close()
    wall = time.perf_counter() - t0
    if "json" in spec.output.formats:
        with open(os.path.join(outdir, f"trace_{cid}.json"), "w",
                  encoding="utf-8") as fh:
            json.dump({"cell": cid, "records": [_record_dict(r) for r in trace.records]},
                      fh, indent=None, separators=(",", ":"))

    last = trace.records[-1]
    row = {
        "cell": cid, "seed": seed, "gamma": gamma, "tau": tau,
        "iterations": cfg.K, "output_index": trace.output_index,
        "f_final": last.f_value, "g_final": last.g_value,
        "wall_time_s": wall, "backend": kernels.BACKEND,
    }

    hcfg = cfg.hypergrad_config()
    inner_eta = min(cfg.eta, 1.0 / p.constants.L_g)
    if p.d2 <= 64:
        row["stationarity_output"] = stationarity_measure(
            p, trace.output_iterate, hcfg, n_seeds=3, inner_tol=1e-9,
            inner_eta=inner_eta, n_samples=8192)
        row["stationarity_final"] = stationarity_measure(
            p, trace.final_state.x, hcfg, n_seeds=3, inner_tol=1e-9,
            inner_eta=inner_eta, n_samples=8192)

    if built.hyperclean is not None:
        hc = built.hyperclean
        x_fin, y_fin = trace.final_state.x, trace.final_state.y
        row["val_accuracy"] = hc.val_accuracy(y_fin)
        y_unif = inner_solve(p, np.zeros(p.d1), inner_eta, tol=1e-8).y_star
        row["val_accuracy_uniform"] = hc.val_accuracy(y_unif)
        weights = hc.weights(x_fin)
        if built.flip_mask is not None and built.flip_mask.any():
            row["mean_weight_flipped"] = float(weights[built.flip_mask].mean())
            row["mean_weight_clean"] = float(weights[~built.flip_mask].mean())
    return row


def run_experiment(spec: ExperimentSpec, jobs: int = 1):
    """Run every sweep cell; returns (summary dict, exit code).

    Cell failures do not abort the sweep: completed traces stay on
    disk, the failure goes into ``failures.json``, and the exit code
    becomes nonzero.
    """
    diags = [d for d in validate_config(spec) if d.severity == "error"]
    if diags:
        raise ValueError("invalid spec: " + "; ".join(d.message for d in diags))
    gammas = spec.sweep.gamma_grid or (spec.solver.gamma,)
    taus = spec.sweep.tau_grid or (spec.solver.tau,)
    cells = list(itertools.product(spec.sweep.seeds, gammas, taus))
    doc = spec_to_dict(spec)

    rows: dict[int, dict] = {}
    failures: list[dict] = []
    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            futs = {pool.submit(_run_cell, doc, s, g, t): (i, s, g, t)
                    for i, (s, g, t) in enumerate(cells)}
            for fut in concurrent.futures.as_completed(futs):
                i, s, g, t = futs[fut]
                try:
                    rows[i] = fut.result()
                except Exception as exc:
                    failures.append({"cell": cell_id(s, g, t), "error": repr(exc),
                                     "traceback": traceback.format_exc()})
    else:
        for i, (s, g, t) in enumerate(cells):
            try:
                rows[i] = _run_cell(doc, s, g, t)
            except Exception as exc:
                failures.append({"cell": cell_id(s, g, t), "error": repr(exc),
                                 "traceback": traceback.format_exc()})

    ordered = [rows[i] for i in sorted(rows)]
    summary = {
        "schema_version": SCHEMA_VERSION,
        "spec": doc,
        "cells": ordered,
        "n_cells": len(cells),
        "n_failed": len(failures),
    }
    if ordered:
        if "val_accuracy" in ordered[0]:
            best = max(ordered, key=lambda r: r["val_accuracy"])
        elif "stationarity_output" in ordered[0]:
            best = min(ordered, key=lambda r: r["stationarity_output"])
        else:
            best = ordered[0]
        summary["best_cell"] = best["cell"]

    outdir = spec.output.directory
    os.makedirs(outdir, exist_ok=True)
    with open(os.path.join(outdir, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
    if failures:
        with open(os.path.join(outdir, "failures.json"), "w", encoding="utf-8") as fh:
            json.dump({"schema_version": SCHEMA_VERSION, "failures": failures},
                      fh, indent=2)
    return summary, (1 if failures else 0)


# ---------------------------------------------------------------------------
# CLI


def _cmd_run(args) -> int:
    spec = load_spec(args.spec)
    if args.out is not None:
        spec = dataclasses.replace(spec, output=dataclasses.replace(
            spec.output, directory=args.out))
    if args.seed is not None:
        spec = dataclasses.replace(spec, sweep=dataclasses.replace(
            spec.sweep, seeds=(int(args.seed),)))
    errors = [d for d in validate_config(spec) if d.severity == "error"]
    if errors:
        for d in errors:
            print(f"error: {d.message}", file=sys.stderr)
        return 1
    summary, code = run_experiment(spec, jobs=args.jobs)
    print(f"ran {summary['n_cells']} cells "
          f"({summary['n_failed']} failed) -> {spec.output.directory}")
    for row in summary["cells"]:
        extras = []
        for key in ("stationarity_output", "val_accuracy", "val_accuracy_uniform"):
            if key in row:
                extras.append(f"{key}={row[key]:.4g}")
        print(f"  {row['cell']}: f={row['f_final']:.6g} "
              + " ".join(extras))
    if "best_cell" in summary:
        print(f"best cell: {summary['best_cell']}")
    return code


def _cmd_validate(args) -> int:
    spec = load_spec(args.spec)
    diags = validate_config(spec, probe_oracles=args.probe_oracles)
    for d in diags:
        stream = sys.stderr if d.severity == "error" else sys.stdout
        print(f"{d.severity}: {d.message}", file=stream)
    n_err = sum(d.severity == "error" for d in diags)
    print(f"{n_err} error(s), {len(diags) - n_err} advisory note(s)")
    return 1 if n_err else 0


def _cmd_gen_data(args) -> int:
    if args.kind != "synthetic-binary":
        print(f"error: unknown data kind {args.kind!r}", file=sys.stderr)
        return 1
    signal_coords = None if args.signal_coords == 0 else args.signal_coords
    train, val = make_synthetic_binary(
        n_train=args.n_train, n_val=args.n_val, dim=args.dim,
        separation=args.separation, feature_scale=args.feature_scale,
        signal_coords=signal_coords, seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    train_path = os.path.join(args.out, "train.libsvm")
    val_path = os.path.join(args.out, "val.libsvm")
    save_libsvm(train, train_path)
    save_libsvm(val, val_path)
    print(train_path)
    print(val_path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="bilevelkit",
        description="constrained bilevel optimization experiment driver")
    sub = ap.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run every sweep cell of a spec")
    p_run.add_argument("spec", help="path to a YAML experiment spec")
    p_run.add_argument("--jobs", type=int, default=1,
                       help="max concurrent cells (processes)")
    p_run.add_argument("--seed", type=int, default=None,
                       help="override the sweep with this single seed")
    p_run.add_argument("--out", default=None,
                       help="override the output directory")
    p_run.set_defaults(func=_cmd_run)

    p_val = sub.add_parser("validate", help="check a spec without running it")
    p_val.add_argument("spec")
    p_val.add_argument("--probe-oracles", action="store_true",
                       help="also cross-check problem oracles numerically")
    p_val.set_defaults(func=_cmd_validate)

    p_gen = sub.add_parser("gen-data", help="write a synthetic dataset pair")
    p_gen.add_argument("--kind", default="synthetic-binary")
    p_gen.add_argument("--out", required=True, help="output directory")
    p_gen.add_argument("--n-train", type=int, default=200)
    p_gen.add_argument("--n-val", type=int, default=200)
    p_gen.add_argument("--dim", type=int, default=20)
    p_gen.add_argument("--separation", type=float, default=2.0)
    p_gen.add_argument("--feature-scale", type=float, default=0.02)
    p_gen.add_argument("--signal-coords", type=int, default=8,
                       help="coordinates carrying the class mean (0 = dense)")
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.set_defaults(func=_cmd_gen_data)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


def entrypoint() -> None:  # console script
    sys.exit(main())
