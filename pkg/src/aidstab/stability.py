"""Coupled-run stability measurement.

Two AID runs see validation sets that differ in one sample and share
every sampled index: both draw from streams seeded identically and both
pools have the same size, so the k-th draw picks the same index in each
run.  The swapped sample therefore enters a run exactly when its index is
drawn, with probability 1/n per draw.

Per-pair CSV columns (:data:`PAIR_COLUMNS`) and per-cell aggregate
columns (:data:`CELL_COLUMNS`) are documented in the README.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .aid import AidState, SolverConfig, StepInfo, aid_step, initial_state
from .analysis import loglog_fit, theorem1_log_bound
from .core import STREAM_PROBE, STREAM_SWAP, STREAM_SWAP_POS, DivergenceError, RngStream, SampleSet, Streams
from .problems.base import Instance
from .problems.constants import ProblemConstants

PAIR_COLUMNS = ("n", "T", "schedule", "pair", "seed", "swap_index", "divergence",
                "output_divergence", "function_gap", "first_hit", "valid", "error")
CELL_COLUMNS = ("n", "T", "schedule", "pairs", "valid_pairs", "mean_divergence", "std_divergence", "max_divergence",
                "mean_output_divergence", "mean_function_gap", "max_function_gap",
                "eps_stab", "log_eps_stab", "missing")


@dataclass
class CoupledPair:
    """An instance plus the neighbouring validation set ``samples_b``."""

    instance: Instance
    samples_b: SampleSet
    swap_index: int
    seed: int
    replacement: tuple

    @property
    def samples_a(self) -> SampleSet:
        return self.instance.samples

    def differing_indices(self) -> list[int]:
        diff = np.zeros(self.samples_a.n, dtype=bool)
        for a, b in zip(self.samples_a.upper, self.samples_b.upper):
            diff |= np.any((a != b).reshape(a.shape[0], -1), axis=1)
        return np.flatnonzero(diff).tolist()


def make_coupled_pair(generator: Callable[..., Instance], n: int, q: int, swap_index: int = 0,
                      seed: int = 0, force_identical: bool = False, **gen_kw) -> CoupledPair:
    """Generate an instance with ``generator(n=n, q=q, seed=seed, **gen_kw)`` and
    replace upper sample ``swap_index`` by a fresh draw from its distribution.

    ``force_identical`` uses the original sample as the replacement.
    """
    inst = generator(n=n, q=q, seed=seed, **gen_kw)
    if not 0 <= swap_index < inst.samples.n:
        raise IndexError(f"swap index {swap_index} outside [0, {inst.samples.n})")
    if force_identical:
        repl = tuple(a[swap_index].copy() for a in inst.samples.upper)
    else:
        fresh = inst.fresh_upper(RngStream(seed, STREAM_SWAP).generator, 1)
        repl = tuple(np.asarray(a)[0] for a in fresh)
    return CoupledPair(inst, inst.samples.replace_upper(swap_index, repl), swap_index, seed, repl)


def _dist(a: AidState, b: AidState) -> tuple[float, float, float]:
    return (float(np.linalg.norm(a.x - b.x)), float(np.linalg.norm(a.y - b.y)),
            float(np.linalg.norm(a.m - b.m)))


def coupled_steps(pair: CoupledPair, cfg: SolverConfig):
    """Advance both runs in lockstep; yields ``(t, state_a, state_b, info_a, info_b)``.

    ``t = 0`` is the shared initial state (``info`` is None there).
    """
    problem = pair.instance.problem
    sa, sb = pair.samples_a, pair.samples_b
    streams_a, streams_b = Streams.from_seed(cfg.seed), Streams.from_seed(cfg.seed)
    a = initial_state(problem, cfg)
    b = AidState(a.x.copy(), a.y.copy(), a.m.copy(), 0, a.z0)
    yield 0, a, b, None, None
    box_a, box_b = [], []
    for _ in range(cfg.T):
        a = aid_step(problem, sa, a, cfg, streams_a, box_a.append)
        b = aid_step(problem, sb, b, cfg, streams_b, box_b.append)
        yield a.t, a, b, box_a.pop(), box_b.pop()


@dataclass
class PairResult:
    n: int
    T: int
    schedule: str
    pair: int
    seed: int
    swap_index: int
    divergence: float = math.nan
    output_divergence: float = math.nan
    function_gap: float = math.nan
    first_hit: int = -1
    valid: bool = True
    error: str = ""
    curve: Optional[np.ndarray] = None

    def row(self) -> list:
        return [self.n, self.T, self.schedule, self.pair, self.seed, self.swap_index,
                _f(self.divergence), _f(self.output_divergence), _f(self.function_gap),
                self.first_hit, int(self.valid), self.error]


def _f(v) -> str:
    return format(float(v), ".17g")


def probe_set(pair: CoupledPair, count: int = 100) -> tuple:
    """Fresh held-out upper samples for the function-value gap."""
    return pair.instance.fresh_upper(RngStream(pair.seed, STREAM_PROBE).generator, count)


def run_coupled(pair: CoupledPair, cfg: SolverConfig, probes: int = 100, schedule: str = "",
                pair_id: int = 0, keep_curve: bool = False) -> PairResult:
    """Divergence ``|x-x'| + |y-y'| + |m-m'|`` at ``T``, the output-only part,
    and ``max_z |f(x_T, y_T, z) - f(x'_T, y'_T, z)|`` over fresh probes.

    ``first_hit`` is the first step whose drawn ``xi`` is the swapped index
    (-1 if never).
    """
    res = PairResult(pair.samples_a.n, cfg.T, schedule, pair_id, cfg.seed, pair.swap_index)
    curve = [] if keep_curve else None
    a = b = None
    try:
        for t, a, b, ia, _ in coupled_steps(pair, cfg):
            if ia is not None and res.first_hit < 0 and pair.swap_index in np.atleast_1d(ia.xi_idx):
                res.first_hit = t
            if curve is not None:
                curve.append(sum(_dist(a, b)))
    except (DivergenceError, FloatingPointError, np.linalg.LinAlgError) as exc:
        res.valid = False
        res.error = str(exc).replace(",", ";")
        return res
    dx, dy, dm = _dist(a, b)
    res.divergence = dx + dy + dm
    res.output_divergence = dx + dy
    if probes and pair.instance.draw_upper is not None:
        Z = probe_set(pair, probes)
        p = pair.instance.problem
        gaps = [abs(p.f(a.x, a.y, tuple(np.asarray(arr)[[i]] for arr in Z))
                    - p.f(b.x, b.y, tuple(np.asarray(arr)[[i]] for arr in Z))) for i in range(probes)]
        res.function_gap = float(max(gaps))
    if curve is not None:
        res.curve = np.array(curve)
    return res


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------


@dataclass
class CellResult:
    n: int
    T: int
    schedule: str
    pairs: list = field(default_factory=list)
    eps_stab: float = math.nan
    log_eps_stab: float = math.nan

    def valid_pairs(self):
        return [p for p in self.pairs if p.valid]

    @property
    def missing(self) -> bool:
        return not self.valid_pairs()

    def stat(self, attr: str, fn=np.mean) -> float:
        vals = [getattr(p, attr) for p in self.valid_pairs()]
        return float(fn(vals)) if vals else math.nan

    def row(self) -> list:
        return [self.n, self.T, self.schedule, len(self.pairs), len(self.valid_pairs()),
                _f(self.stat("divergence")), _f(self.stat("divergence", np.std)), _f(self.stat("divergence", np.max)),
                _f(self.stat("output_divergence")), _f(self.stat("function_gap")),
                _f(self.stat("function_gap", np.max)), _f(self.eps_stab), _f(self.log_eps_stab),
                int(self.missing)]


@dataclass
class ExponentFit:
    """Slope of log mean divergence against log T or log n; ``None`` when undefined."""

    T_exponent: Optional[float]
    n_exponent: Optional[float]
    note: str = ""


@dataclass
class StabilityReport:
    cells: list

    def pair_rows(self):
        for c in self.cells:
            for p in c.pairs:
                yield p.row()

    def cell(self, n, T, schedule) -> CellResult:
        for c in self.cells:
            if (c.n, c.T, c.schedule) == (n, T, schedule):
                return c
        raise KeyError((n, T, schedule))

    def write_csv(self, pair_path, cell_path) -> None:
        with open(pair_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(PAIR_COLUMNS)
            w.writerows(self.pair_rows())
        with open(cell_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CELL_COLUMNS)
            w.writerows(c.row() for c in self.cells)

    def exponents(self, schedule: Optional[str] = None) -> ExponentFit:
        cells = [c for c in self.cells if not c.missing and (schedule is None or c.schedule == schedule)]
        return fit_exponents([(c.T, c.n, c.stat("divergence")) for c in cells])


def fit_exponents(points: Sequence[tuple]) -> ExponentFit:
    """Fit ``log d = a + b log T + c log n`` by least squares.

    An axis with a single distinct value has an undefined exponent; it is
    then dropped from the regression and reported as ``None``.
    """
    arr = np.array([(T, n, d) for T, n, d in points if d > 0 and np.isfinite(d)], float)
    if arr.size == 0:
        return ExponentFit(None, None, "no positive divergences")
    cols, names, notes = [np.ones(len(arr))], [], []
    for j, name in ((0, "T"), (1, "n")):
        if np.unique(arr[:, j]).size >= 2:
            cols.append(np.log(arr[:, j]))
            names.append(name)
        else:
            notes.append(f"{name}-exponent undefined (single {name} value)")
    if len(arr) < len(cols):
        return ExponentFit(None, None, "too few cells")
    coef, *_ = np.linalg.lstsq(np.column_stack(cols), np.log(arr[:, 2]), rcond=None)
    fitted = dict(zip(names, coef[1:]))
    return ExponentFit(
        float(fitted["T"]) if "T" in fitted else None,
        float(fitted["n"]) if "n" in fitted else None,
        "; ".join(notes),
    )


def _run_cell_pair(args):
    generator, n, q, T, sched_name, sched, k, seed, cfg, probes, swap, force, gen_kw = args
    pair = make_coupled_pair(generator, n, q, swap_index=swap, seed=seed, force_identical=force, **gen_kw)
    ex, ey, em = sched
    run_cfg = replace(cfg, T=T, eta_x=ex, eta_y=ey, eta_m=em, seed=seed)
    return run_coupled(pair, run_cfg, probes=probes, schedule=sched_name, pair_id=k)


def stability_sweep(generator: Callable[..., Instance], n_list, schedules: dict, T_list, pairs: int,
                    cfg: SolverConfig, q: int, seed0: int = 0, probes: int = 100,
                    swap: str | int = 0, force_identical: bool = False,
                    constants: Optional[Callable[[Instance, int], ProblemConstants]] = None,
                    workers: int = 1, gen_kw: Optional[dict] = None) -> StabilityReport:
    """Full factorial grid over ``n_list x schedules x T_list``.

    ``schedules`` maps a name to ``(eta_x, eta_y, eta_m)``.  Pair ``k`` of a
    cell uses seed ``seed0 + k`` for both data and algorithm randomness,
    so cells share seeds across the grid.  ``swap`` is an index or
    ``"random"`` (a uniform position per pair from the swap stream).
    ``constants(instance, n)`` supplies the constants for the theoretical
    bound column.
    """
    gen_kw = dict(gen_kw or {})
    jobs, keys = [], []
    for n in n_list:
        for name, sched in schedules.items():
            for T in T_list:
                for k in range(pairs):
                    seed = seed0 + k
                    idx = (int(RngStream(seed, STREAM_SWAP_POS).indices(n, 1)[0])
                           if swap == "random" else int(swap))
                    jobs.append((generator, n, q, T, name, sched, k, seed, cfg, probes, idx,
                                 force_identical, gen_kw))
                    keys.append((n, T, name))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell_pair, jobs))
    else:
        results = [_run_cell_pair(j) for j in jobs]

    cells: dict = {}
    for key, res in zip(keys, results):
        n, T, name = key
        cells.setdefault(key, CellResult(n, T, name)).pairs.append(res)
    for (n, T, name), cell in cells.items():
        if constants is not None:
            c = constants(generator(n=n, q=q, seed=seed0, **gen_kw), n)
            if not c.valid:
                continue
            ex, ey, em = schedules[name]
            cell.log_eps_stab = theorem1_log_bound(ex, ey, em, c, T, n, _z0_norm(cfg))
            cell.eps_stab = math.exp(cell.log_eps_stab) if cell.log_eps_stab < 709 else math.inf
    return StabilityReport(list(cells.values()))


def _z0_norm(cfg: SolverConfig) -> float:
    return 0.0 if cfg.z0 is None else float(np.linalg.norm(cfg.z0))


def recursion_check(infos_a: Sequence[StepInfo], infos_b: Sequence[StepInfo], c: ProblemConstants,
                    n: int, z0_norm: float = 0.0) -> np.ndarray:
    """Per-step slack of the one-step divergence recursion.

    Entry ``t`` is ``bound_t - D_t`` with
    ``bound_t = (1 + ex em Cm + em Cm + ey L1) D_{t-1} + (1 + ex) em Cc / n``
    and ``D`` the three-term divergence; negative values are violations
    along that sample path (the recursion holds in expectation).
    """
    from .analysis import stability_constants

    _, Cm, Cc = stability_constants(c, n, z0_norm)
    out = []
    for ia, ib in zip(infos_a, infos_b):
        d_prev = sum(_dist(ia.prev, ib.prev))
        d_new = sum(_dist(ia.new, ib.new))
        ex, ey, em = ia.eta_x, ia.eta_y, ia.eta_m
        bound = (1 + ex * em * Cm + em * Cm + ey * c.L1) * d_prev + (1 + ex) * em * Cc / n
        out.append(bound - d_new)
    return np.array(out)
