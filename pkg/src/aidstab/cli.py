"""Command-line entry point: ``aidstab <command> --config FILE``.

Commands
--------
run         one trace CSV per (n, schedule, seed), a summary and panel CSVs
stability   coupled-run divergence per pair and per cell, fitted exponents
check       stability bound and step-size conditions for a configuration
grad-check  exact, finite-difference, AID and ITD hypergradients side by side
sweep       like ``run`` over a grid of horizons, plus convergence-rate fits

Exit codes: 0 success, 2 configuration error, 3 runtime abort (non-finite
iterate, unusable constants), 4 a step-size condition or a gradient check
failed.
"""

from __future__ import annotations

import argparse
import csv
import inspect
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import analysis
from .aid import SolverConfig, aid_run, initial_state
from .config import ExperimentConfig, load_config, resolve_out_dir, schedule_of, schedule_triples
from .core import ConfigError, DivergenceError
from .itd import itd_run
from .problems.constants import ProblemConstants, analytic_constants
from .problems.io import GENERATORS, make_instance
from .stability import StabilityReport, stability_sweep

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_CONDITION = 4

SUMMARY_COLUMNS = ("solver", "schedule", "n", "T", "seed", "final_phi", "min_grad_norm_sq", "gap",
                   "status", "trace_file")
GRAD_CHECK_COLUMNS = ("point", "K", "exact", "fd_rel_err", "aid_rel_err", "itd_rel_err", "fd_pass")
RATE_COLUMNS = ("schedule", "n", "slope", "ci_low", "ci_high", "horizons")


class RuntimeAbort(RuntimeError):
    """A run could not complete; partial outputs have been written."""


def _fmt(v) -> str:
    if v is None:
        return "nan"
    return format(float(v), ".17g")


# ---------------------------------------------------------------------------
# Building blocks shared by the commands
# ---------------------------------------------------------------------------


def _generator_params(cfg: ExperimentConfig) -> dict:
    params = cfg.section("problem")
    params.pop("name", None)
    return params


def build_instance(cfg: ExperimentConfig, seed: int, n: int | None = None):
    """Instance from ``problem.*``; ``seed`` is used unless ``problem.seed`` is set."""
    name = cfg.require("problem.name")
    accepted = set(inspect.signature(GENERATORS[name]).parameters)
    params = _generator_params(cfg)
    if n is not None:
        if "n" not in accepted:
            raise ConfigError(f"problem {name!r} has no sample-count parameter 'n' to sweep")
        params["n"] = n
    if "seed" in accepted and "seed" not in params:
        params["seed"] = seed
    return make_instance(name, **params)


def solver_config(cfg: ExperimentConfig, seed: int, T: int, triple, oracles: bool = True) -> SolverConfig:
    ex, ey, em = (schedule_of(v, T) for v in triple)
    opt = {k: cfg.get(f"solver.{k}") for k in ("x0", "y0", "z0")}
    return SolverConfig(
        T=T, K=cfg.get("solver.K"), eta_z=float(cfg.get("solver.eta_z")), eta_x=ex, eta_y=ey, eta_m=em,
        seed=seed, batch=cfg.get("solver.batch"), full_batch=cfg.get("solver.full_batch"),
        record_every=cfg.get("solver.record_every"), oracles=oracles,
        x0=None if opt["x0"] is None else np.asarray(opt["x0"], float),
        y0=None if opt["y0"] is None else np.asarray(opt["y0"], float),
        z0=None if opt["z0"] is None else np.asarray(opt["z0"], float),
    )


def problem_constants(cfg: ExperimentConfig, instance, x_center=None) -> ProblemConstants:
    """Explicit ``constants.L0/L1/L2/mu`` when all four are set, else estimates on a ball."""
    explicit = [cfg.get(f"constants.{k}") for k in ("L0", "L1", "L2", "mu")]
    if all(v is not None for v in explicit):
        L0, L1, L2, mu = (float(v) for v in explicit)
        return ProblemConstants(L0, L1, L2, mu, float(cfg.get("constants.D0")), float(cfg.get("constants.D1")),
                                domain_note="given in the configuration")
    if any(v is not None for v in explicit):
        raise ConfigError("constants.L0, constants.L1, constants.L2 and constants.mu must be given together")
    p, s = instance.problem, instance.samples
    if x_center is None:
        x_center = initial_state(p, SolverConfig(T=0)).x
    return analytic_constants(p, s, float(cfg.get("constants.radius")), x_center=x_center,
                              y_radius=cfg.get("constants.y_radius"), n_points=cfg.get("constants.points"))


def _seeds(cfg: ExperimentConfig, offset: int) -> list:
    return [int(s) + offset for s in cfg.get("run.seeds")]


def _map(fn, jobs, workers: int):
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


# ---------------------------------------------------------------------------
# run / sweep
# ---------------------------------------------------------------------------


@dataclass
class RunJob:
    values: dict
    source: str
    label: str
    triple: tuple
    n: int | None
    T: int
    seed: int
    out_dir: str


@dataclass
class RunOutcome:
    row: list
    t: list
    phi: list
    gap: list
    aborted: str = ""


def trace_name(label: str, n: int, T: int, seed: int) -> str:
    return f"trace_{label}_n{n}_T{T}_seed{seed}.csv"


def _run_one(job: RunJob) -> RunOutcome:
    cfg = ExperimentConfig(job.values, job.source)
    inst = build_instance(cfg, job.seed, job.n)
    p, s = inst.problem, inst.samples
    scfg = solver_config(cfg, job.seed, job.T, job.triple)
    solver = cfg.get("solver.name")
    runner = aid_run if solver == "aid" else itd_run
    aborted = ""
    try:
        trace = runner(p, s, scfg)
    except DivergenceError as exc:
        trace = exc.trace
        aborted = str(exc)
    name = trace_name(job.label, s.n, job.T, job.seed)
    trace.to_csv(os.path.join(job.out_dir, name))
    gaps = [inst.gap_metric(x) for x in trace.x]
    gns = [v for v in trace.grad_norm_sq if v is not None]
    row = [solver, job.label, s.n, job.T, job.seed, _fmt(trace.phi[-1]),
           _fmt(min(gns) if gns else None), _fmt(gaps[-1]), "aborted: " + aborted if aborted else "ok", name]
    return RunOutcome(row, list(trace.t), list(trace.phi), gaps, aborted)


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _mean_curves(outcomes):
    """Seed-averaged (t, phi, gap) over outcomes that share the same time grid."""
    t = next((o.t for o in outcomes if not o.aborted), outcomes[0].t)
    same = [o for o in outcomes if o.t == t and not o.aborted]
    if not same:
        return t, None, None
    phi = np.mean([o.phi for o in same], axis=0)
    gap = None
    if all(g is not None for o in same for g in o.gap):
        gap = np.mean([o.gap for o in same], axis=0)
    return t, phi, gap


def write_panels(out_dir: str, groups: dict) -> list:
    """Seed-averaged curves: ``panel_<label>.csv`` per schedule and ``panel_compare.csv``.

    ``groups`` maps ``(label, n)`` to the outcomes of that cell.
    """
    written = []
    labels = list(dict.fromkeys(k[0] for k in groups))
    columns = {}
    for key, outs in groups.items():
        columns[key] = _mean_curves(outs)
    for label in labels:
        keys = [k for k in groups if k[0] == label]
        t = columns[keys[0]][0]
        header, cols = ["t"], [t]
        for k in keys:
            tk, phi, gap = columns[k]
            if phi is None or tk != t:
                continue
            header.append(f"phi_n{k[1]}")
            cols.append(phi)
            if gap is not None:
                header.append(f"gap_n{k[1]}")
                cols.append(gap)
        path = os.path.join(out_dir, f"panel_{label}.csv")
        _write_csv(path, header, [[r[0]] + [_fmt(v) for v in r[1:]] for r in zip(*cols)])
        written.append(path)
    if len(labels) > 1:
        first = next(iter(columns.values()))[0]
        header, cols = ["t"], [first]
        for k, (tk, phi, gap) in columns.items():
            if phi is None or tk != first:
                continue
            header.append(f"phi_{k[0]}_n{k[1]}")
            cols.append(phi)
            if gap is not None:
                header.append(f"gap_{k[0]}_n{k[1]}")
                cols.append(gap)
        path = os.path.join(out_dir, "panel_compare.csv")
        _write_csv(path, header, [[r[0]] + [_fmt(v) for v in r[1:]] for r in zip(*cols)])
        written.append(path)
    return written


def _grid_jobs(cfg: ExperimentConfig, out_dir: str, offset: int, T_list) -> list:
    n_list = cfg.get("sweep.n") or [None]
    jobs = []
    for label, triple in schedule_triples(cfg).items():
        for n in n_list:
            for T in T_list:
                for seed in _seeds(cfg, offset):
                    jobs.append(RunJob(cfg.values, cfg.source, label, triple, n, T, seed, out_dir))
    return jobs


def cmd_run(cfg: ExperimentConfig, out_dir: str, workers: int, seed_offset: int) -> int:
    T = cfg.require("solver.T")
    cfg.require("problem.name")
    jobs = _grid_jobs(cfg, out_dir, seed_offset, [T])
    outcomes = _map(_run_one, jobs, workers)
    _write_csv(os.path.join(out_dir, "summary.csv"), SUMMARY_COLUMNS, [o.row for o in outcomes])
    groups: dict = {}
    for o in outcomes:
        groups.setdefault((o.row[1], o.row[2]), []).append(o)
    write_panels(out_dir, groups)
    aborted = [o for o in outcomes if o.aborted]
    for o in aborted:
        print(f"run aborted ({o.row[-1]}): {o.aborted}", file=sys.stderr)
    print(f"{len(outcomes)} runs, {len(aborted)} aborted; outputs in {out_dir}")
    return EXIT_RUNTIME if aborted else EXIT_OK


def cmd_sweep(cfg: ExperimentConfig, out_dir: str, workers: int, seed_offset: int) -> int:
    cfg.require("problem.name")
    T_list = cfg.get("sweep.T") or [cfg.require("solver.T")]
    jobs = _grid_jobs(cfg, out_dir, seed_offset, T_list)
    outcomes = _map(_run_one, jobs, workers)
    _write_csv(os.path.join(out_dir, "summary.csv"), SUMMARY_COLUMNS, [o.row for o in outcomes])
    by_cell: dict = {}
    for job, o in zip(jobs, outcomes):
        if not o.aborted:
            curve = [float(r) for r in _trace_column(out_dir, o.row[-1], "grad_norm_sq")]
            by_cell.setdefault((o.row[1], o.row[2]), {}).setdefault(o.row[3], []).append(curve)
    rows = []
    for (label, n), per_T in by_cell.items():
        if len(per_T) >= 3:
            fit = analysis.convergence_rate_summary(per_T)
            rows.append([label, n, _fmt(fit.slope), _fmt(fit.ci_low), _fmt(fit.ci_high), fit.points])
            print(f"{label} n={n}: slope {fit.slope:.3f} [{fit.ci_low:.3f}, {fit.ci_high:.3f}]")
    _write_csv(os.path.join(out_dir, "rates.csv"), RATE_COLUMNS, rows)
    aborted = [o for o in outcomes if o.aborted]
    print(f"{len(outcomes)} runs, {len(aborted)} aborted; outputs in {out_dir}")
    return EXIT_RUNTIME if aborted else EXIT_OK


def _trace_column(out_dir, name, column):
    from .aid import read_trace_csv

    return read_trace_csv(os.path.join(out_dir, name))[column]


# ---------------------------------------------------------------------------
# stability
# ---------------------------------------------------------------------------


def cmd_stability(cfg: ExperimentConfig, out_dir: str, workers: int, seed_offset: int) -> int:
    name = cfg.require("problem.name")
    n_list = cfg.require("sweep.n")
    T_list = cfg.get("sweep.T") or [cfg.require("solver.T")]
    gen = GENERATORS[name]
    accepted = set(inspect.signature(gen).parameters)
    if not {"n", "q", "seed"} <= accepted:
        raise ConfigError(f"problem {name!r} cannot be resampled for coupled runs")
    gen_kw = _generator_params(cfg)
    for k in ("n", "seed"):
        gen_kw.pop(k, None)
    q = gen_kw.pop("q", inspect.signature(gen).parameters["q"].default)
    seed0 = min(_seeds(cfg, seed_offset))
    cache: dict = {}

    def constants(instance, n):
        if n not in cache:
            cache[n] = problem_constants(cfg, instance)
        return cache[n]

    cells = []
    for T in T_list:
        base = solver_config(cfg, seed0, T, (0.01, 0.01, 1.0), oracles=False)
        scheds = {label: tuple(schedule_of(v, T) for v in triple)
                  for label, triple in schedule_triples(cfg).items()}
        rep = stability_sweep(gen, n_list, scheds, [T], cfg.get("stability.pairs"), base, q=q, seed0=seed0,
                              probes=cfg.get("stability.probes"), swap=cfg.get("stability.swap"),
                              force_identical=cfg.get("stability.force_identical"),
                              constants=constants if cfg.get("stability.bound") else None,
                              workers=workers, gen_kw=gen_kw)
        cells.extend(rep.cells)
    report = StabilityReport(cells)
    report.write_csv(os.path.join(out_dir, "pairs.csv"), os.path.join(out_dir, "cells.csv"))
    lines = []
    for label in schedule_triples(cfg):
        fit = report.exponents(label)
        lines.append(f"{label}: T_exponent={fit.T_exponent} n_exponent={fit.n_exponent}"
                     + (f" ({fit.note})" if fit.note else ""))
    with open(os.path.join(out_dir, "exponents.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    print("\n".join(lines))
    invalid = sum(1 for c in cells for p in c.pairs if not p.valid)
    print(f"{sum(len(c.pairs) for c in cells)} pairs, {invalid} invalid; outputs in {out_dir}")
    return EXIT_RUNTIME if invalid else EXIT_OK


# ---------------------------------------------------------------------------
# check
# ---------------------------------------------------------------------------


def cmd_check(cfg: ExperimentConfig, out_dir: str, workers: int, seed_offset: int) -> int:
    cfg.require("problem.name")
    T = cfg.require("solver.T")
    seed = _seeds(cfg, seed_offset)[0]
    inst = build_instance(cfg, seed)
    c = problem_constants(cfg, inst)
    if not c.valid:
        raise RuntimeAbort(f"constants unavailable: {c.reason} (domain: {c.domain_note})")
    n = inst.samples.n
    z0 = cfg.get("solver.z0")
    z0_norm = 0.0 if z0 is None else float(np.linalg.norm(z0))
    status = EXIT_OK
    texts = []
    for label, triple in schedule_triples(cfg).items():
        ex, ey, em = (schedule_of(v, T) for v in triple)
        rep = analysis.bound_report(ex, ey, em, c, float(cfg.get("solver.eta_z")), T, n, z0_norm,
                                    K=cfg.get("solver.K"))
        text = f"schedule {label}\n" + rep.to_text()
        texts.append(text)
        print(text)
        with open(os.path.join(out_dir, f"check_{label}.txt"), "w") as fh:
            fh.write(text)
        with open(os.path.join(out_dir, f"check_{label}.kv"), "w") as fh:
            fh.write(rep.to_kv())
        if not rep.admissible:
            failed = [cd.name for cd in rep.conditions if cd.gating and not cd.satisfied]
            print(f"schedule {label}: failed conditions: {', '.join(failed)}", file=sys.stderr)
            status = EXIT_CONDITION
    return status


# ---------------------------------------------------------------------------
# grad-check
# ---------------------------------------------------------------------------


def grad_check_points(cfg: ExperimentConfig, inst, seed: int) -> list:
    p = inst.problem
    given = cfg.get("grad_check.x")
    if given is not None:
        return [np.atleast_1d(np.asarray(v, float)) for v in given]
    rng = np.random.default_rng(seed)
    center = initial_state(p, SolverConfig(T=0, seed=seed)).x
    scale = float(cfg.get("grad_check.scale"))
    return [center + scale * rng.standard_normal(p.d_x) for _ in range(cfg.get("grad_check.points"))]


def cmd_grad_check(cfg: ExperimentConfig, out_dir: str, workers: int, seed_offset: int) -> int:
    cfg.require("problem.name")
    seed = _seeds(cfg, seed_offset)[0]
    inst = build_instance(cfg, seed)
    p, s = inst.problem, inst.samples
    tol = float(cfg.get("grad_check.fd_rtol"))
    rows, failures = [], 0
    for i, x in enumerate(grad_check_points(cfg, inst, seed)):
        exact = analysis.exact_hypergradient(p, s, x)
        fd_err = analysis.relative_error(analysis.fd_hypergradient(p, s, x), exact)
        ok = fd_err <= tol
        failures += not ok
        sweep = analysis.k_sweep(p, s, x, cfg.get("grad_check.K"), cfg.get("grad_check.eta_z"),
                                 cfg.get("grad_check.eta_y"))
        shown = " ".join(format(float(v), ".10g") for v in exact)
        for r in sweep:
            rows.append([i, r.K, shown, _fmt(fd_err), _fmt(r.aid_rel_err), _fmt(r.itd_rel_err), int(ok)])
    _write_csv(os.path.join(out_dir, "grad_check.csv"), GRAD_CHECK_COLUMNS, rows)
    width = max(len(r[2]) for r in rows) if rows else 5
    print(f"{'point':>5} {'K':>4} {'exact':>{min(width, 40)}} {'fd err':>10} {'aid err':>10} {'itd err':>10}  fd")
    for r in rows:
        exact = r[2] if len(r[2]) <= 40 else r[2][:37] + "..."
        print(f"{r[0]:>5} {r[1]:>4} {exact:>{min(width, 40)}} {float(r[3]):10.3e} {float(r[4]):10.3e} "
              f"{float(r[5]):10.3e}  {'pass' if r[6] else 'FAIL'}")
    return EXIT_CONDITION if failures else EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

COMMANDS = {
    "run": cmd_run,
    "stability": cmd_stability,
    "check": cmd_check,
    "grad-check": cmd_grad_check,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aidstab", description=__doc__.split("\n")[0],
                                     formatter_class=argparse.RawDescriptionHelpFormatter,
                                     epilog="exit codes: 0 ok, 2 config error, 3 runtime abort, "
                                            "4 condition or gradient-check failure")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="configuration file (dotted key = value lines)")
        sp.add_argument("--out-dir", default=None, help="output directory (overrides output.dir)")
        sp.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                        help="worker processes for independent runs (default: number of cores)")
        sp.add_argument("--seed-offset", type=int, default=0, help="added to every configured seed")
    return parser


def bundled_config(name: str) -> Path:
    """Path of a configuration shipped with the package (``toy_fig1.cfg`` ...)."""
    return Path(__file__).parent / "configs" / name


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    path = args.config
    if not os.path.exists(path) and bundled_config(path).exists():
        path = bundled_config(path)
    try:
        cfg = load_config(path)
    except OSError as exc:
        print(f"config error: cannot read {path}: {exc.strerror}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        out_dir = resolve_out_dir(cfg, args.out_dir)
        os.makedirs(out_dir, exist_ok=True)
        return COMMANDS[args.command](cfg, out_dir, max(1, args.workers), args.seed_offset)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RuntimeAbort, DivergenceError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"runtime abort: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
