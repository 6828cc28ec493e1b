"""AID bi-level solver: stochastic inner z-loop plus momentum on x.

Per outer step t (all derivatives at ``(x_{t-1}, y_{t-1})``):

1. draw xi, zeta_1..zeta_K; run K SGD steps on ``1/2 z'Hz - b'z`` with
   ``H = hess_yy g(zeta_k)`` and ``b = grad_y f(xi)``, starting from ``z0``;
2. draw zeta_{K+1}, zeta_{K+2};
3. ``y_t = y_{t-1} - eta_y grad_y g(zeta_{K+1})``;
4. ``g_t = grad_x f(xi) - cross_xy g(zeta_{K+2}) z_K``;
5. ``m_t = (1 - eta_m) m_{t-1} + eta_m g_t``;
6. ``x_t = x_{t-1} - eta_x m_t``.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .core import ConfigError, DivergenceError, SampleSet, Schedule, Streams, as_param, draw_batches, step_size
from .problems.base import Problem

TRACE_COLUMNS = ("t", "phi", "grad_norm_sq", "m_norm_sq", "y_dist_to_ystar", "elapsed_s")


@dataclass
class SolverConfig:
    """Step sizes, iteration counts and initialisation for one run.

    Step sizes are :class:`Schedule` objects or plain floats (used as-is,
    so a float ``eta_m = 0.0`` freezes the momentum).
    """

    T: int
    K: int = 10
    eta_z: float = 0.01
    eta_x: Schedule | float = 0.01
    eta_y: Schedule | float = 0.01
    eta_m: Schedule | float = 1.0
    seed: int = 0
    batch: int = 1
    full_batch: bool = False
    record_every: int = 1
    oracles: bool = True
    x0: Optional[np.ndarray] = None
    y0: Optional[np.ndarray] = None
    m0: Optional[np.ndarray] = None
    z0: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.T < 0:
            raise ConfigError("T must be >= 0")
        if self.K < 0:
            raise ConfigError("K must be >= 0")
        if not self.eta_z > 0:
            raise ConfigError("eta_z must be positive")
        if self.batch < 1 or self.record_every < 1:
            raise ConfigError("batch and record_every must be >= 1")


@dataclass
class AidState:
    x: np.ndarray
    y: np.ndarray
    m: np.ndarray
    t: int = 0
    z0: Optional[np.ndarray] = None


@dataclass
class StepInfo:
    """Everything one outer step computed; handed to monitors."""

    t: int
    prev: AidState
    new: AidState
    z_iterates: list
    g_t: np.ndarray
    xi_idx: np.ndarray
    zeta_z: list
    zeta_y: np.ndarray
    zeta_x: np.ndarray
    eta_x: float
    eta_y: float
    eta_m: float


@dataclass
class RunTrace:
    """Recorded iterates and diagnostics, strictly increasing in ``t``."""

    t: list = field(default_factory=list)
    x: list = field(default_factory=list)
    y: list = field(default_factory=list)
    m: list = field(default_factory=list)
    phi: list = field(default_factory=list)
    grad_norm_sq: list = field(default_factory=list)
    m_norm_sq: list = field(default_factory=list)
    y_dist_to_ystar: list = field(default_factory=list)
    elapsed_s: list = field(default_factory=list)
    final: Optional[AidState] = None

    def record(self, t, x, y, m, phi, gns, yd, elapsed):
        if self.t and t <= self.t[-1]:
            raise ValueError("trace entries must be strictly increasing in t")
        self.t.append(int(t))
        self.x.append(np.array(x))
        self.y.append(np.array(y))
        self.m.append(np.array(m))
        self.phi.append(phi)
        self.grad_norm_sq.append(gns)
        self.m_norm_sq.append(float(m @ m))
        self.y_dist_to_ystar.append(yd)
        self.elapsed_s.append(elapsed)

    def rows(self):
        for i in range(len(self.t)):
            yield (self.t[i], self.phi[i], self.grad_norm_sq[i], self.m_norm_sq[i],
                   self.y_dist_to_ystar[i], self.elapsed_s[i])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_COLUMNS)
            for row in self.rows():
                w.writerow([row[0]] + [_fmt(v) for v in row[1:]])

    def array(self, column: str) -> np.ndarray:
        return np.asarray(getattr(self, column), dtype=float)


def _fmt(v) -> str:
    if v is None:
        return "nan"
    return format(float(v), ".17g")


def read_trace_csv(path) -> dict:
    """Column name -> float array, for a CSV written by :meth:`RunTrace.to_csv`."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    return {name: np.array([float(r[i]) for r in body]) for i, name in enumerate(header)}


# ---------------------------------------------------------------------------


def z_inner_loop(problem: Problem, samples: SampleSet, x, y, xi_idx, zeta_idx, z0, eta_z: float,
                 K: Optional[int] = None, on_iterate: Optional[Callable] = None) -> np.ndarray:
    """K SGD steps ``z <- z - eta_z (H_k z - b)`` with ``b = grad_y f(x, y, xi)``.

    ``zeta_idx`` holds one index batch per inner step; ``K`` defaults to its
    length.  ``on_iterate(k, z)`` sees every iterate including ``z0``.
    """
    if not eta_z > 0:
        raise ConfigError("eta_z must be positive")
    K = len(zeta_idx) if K is None else K
    b = problem.grad_y_f(x, y, samples.upper_batch(xi_idx))
    z = np.array(z0, dtype=float)
    if on_iterate is not None:
        on_iterate(0, z)
    for k in range(K):
        hz = problem.hess_yy_g_vp(x, y, samples.lower_batch(zeta_idx[k]), z)
        z = z - eta_z * (hz - b)
        if on_iterate is not None:
            on_iterate(k + 1, z)
    return z


def _momentum_rate(eta_m, t):
    # line 11 must stay a convex combination
    return min(max(step_size(eta_m, t), 0.0), 1.0)


def aid_step(problem: Problem, samples: SampleSet, state: AidState, cfg: SolverConfig,
             streams: Streams, monitor: Optional[Callable[[StepInfo], None]] = None) -> AidState:
    """One outer iteration; returns the new state (inputs are not mutated)."""
    x, y, m = state.x, state.y, state.m
    problem._check(x, y)
    t = state.t + 1
    K = cfg.K
    z0 = state.z0 if state.z0 is not None else np.zeros(problem.d_y)

    xi = draw_batches(streams.x, samples.n, 1, cfg.batch, cfg.full_batch)[0]
    zeta_z = draw_batches(streams.z, samples.q, K, cfg.batch, cfg.full_batch) if K else []
    z_iterates = [] if monitor is not None else None
    z = z_inner_loop(problem, samples, x, y, xi, zeta_z, z0, cfg.eta_z, K,
                     on_iterate=(lambda k, v: z_iterates.append(v)) if monitor is not None else None)
    if not np.all(np.isfinite(z)):
        raise DivergenceError("z (inner iterate)", t)

    zeta_y = draw_batches(streams.y, samples.q, 1, cfg.batch, cfg.full_batch)[0]
    zeta_x = draw_batches(streams.x, samples.q, 1, cfg.batch, cfg.full_batch)[0]

    eta_x = step_size(cfg.eta_x, t)
    eta_y = step_size(cfg.eta_y, t)
    eta_m = _momentum_rate(cfg.eta_m, t)

    y_new = y - eta_y * problem.grad_y_g(x, y, samples.lower_batch(zeta_y))
    if not np.all(np.isfinite(y_new)):
        raise DivergenceError("y", t)
    g_t = problem.grad_x_f(x, y, samples.upper_batch(xi)) - problem.cross_xy_g_vp(
        x, y, samples.lower_batch(zeta_x), z)
    if not np.all(np.isfinite(g_t)):
        raise DivergenceError("g (hypergradient estimate)", t)
    m_new = (1.0 - eta_m) * m + eta_m * g_t
    if not np.all(np.isfinite(m_new)):
        raise DivergenceError("m (momentum)", t)
    x_new = x - eta_x * m_new
    if not np.all(np.isfinite(x_new)):
        raise DivergenceError("x", t)

    new = AidState(x_new, y_new, m_new, t, state.z0)
    if monitor is not None:
        monitor(StepInfo(t, state, new, z_iterates, g_t, xi, list(zeta_z), zeta_y, zeta_x,
                         eta_x, eta_y, eta_m))
    return new


def initial_state(problem: Problem, cfg: SolverConfig) -> AidState:
    """Configured initial point, falling back to the problem's default."""
    from .core import STREAM_INIT, RngStream

    rng = RngStream(cfg.seed, STREAM_INIT).generator
    x_def, y_def = problem.default_init(rng)
    x0 = as_param(cfg.x0 if cfg.x0 is not None else x_def, problem.d_x, "x0")
    y0 = as_param(cfg.y0 if cfg.y0 is not None else y_def, problem.d_y, "y0")
    m0 = as_param(cfg.m0 if cfg.m0 is not None else np.zeros(problem.d_x), problem.d_x, "m0")
    z0 = as_param(cfg.z0 if cfg.z0 is not None else np.zeros(problem.d_y), problem.d_y, "z0")
    return AidState(x0, y0, m0, 0, z0)


def record_state(trace: RunTrace, problem: Problem, samples: SampleSet, state, oracles: bool, t0: float):
    from .analysis import exact_hypergradient

    x, y = state.x, state.y
    m = getattr(state, "m", np.zeros_like(x))
    if oracles:
        lower = samples.all_lower()
        ys = problem.y_star(x, lower)
        phi = problem.f(x, ys, samples.all_upper())
        grad = exact_hypergradient(problem, samples, x, y_star=ys)
        gns = float(grad @ grad)
        yd = float(np.linalg.norm(y - ys))
    else:
        phi = gns = yd = None
    trace.record(state.t, x, y, m, phi, gns, yd, time.perf_counter() - t0)


def aid_run(problem: Problem, samples: SampleSet, cfg: SolverConfig,
            monitor: Optional[Callable[[StepInfo], None]] = None,
            stop: Optional[Callable[[RunTrace], bool]] = None) -> RunTrace:
    """``cfg.T`` AID steps from the configured initialisation.

    ``stop(trace)`` is consulted after each recorded point; returning True
    ends the run early.
    """
    streams = Streams.from_seed(cfg.seed)
    state = initial_state(problem, cfg)
    trace = RunTrace()
    t0 = time.perf_counter()
    record_state(trace, problem, samples, state, cfg.oracles, t0)
    for t in range(1, cfg.T + 1):
        try:
            state = aid_step(problem, samples, state, cfg, streams, monitor)
        except DivergenceError as exc:
            exc.trace = trace
            raise
        if t % cfg.record_every == 0 or t == cfg.T:
            record_state(trace, problem, samples, state, cfg.oracles, t0)
            if stop is not None and stop(trace):
                break
    trace.final = state
    return trace


def with_overrides(cfg: SolverConfig, **kw) -> SolverConfig:
    return replace(cfg, **kw)
