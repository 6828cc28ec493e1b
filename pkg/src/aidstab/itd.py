"""ITD baseline: differentiate through K unrolled inner SGD steps.

Each outer step restarts the inner loop from the fixed ``y0`` and carries
the forward-mode Jacobian ``J_k = dy^k/dx`` (``d_y x d_x``) along:

    y^k = y^{k-1} - eta_k grad_y g(x, y^{k-1}, zeta_k)
    J_k = (I - eta_k H_k) J_{k-1} - eta_k C_k,   J_0 = 0

with ``H_k`` the lower Hessian and ``C_k`` the cross Jacobian at
``(x, y^{k-1})``.  The estimate ``g_t = grad_x f + J_K^T grad_y f`` at
``(x, y^K)`` is applied as a plain SGD step on ``x``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .aid import RunTrace, SolverConfig, initial_state, record_state
from .core import DivergenceError, SampleSet, Streams, draw_batches, step_size
from .problems.base import Problem


@dataclass
class ItdState:
    x: np.ndarray
    y0: np.ndarray
    t: int = 0
    y: Optional[np.ndarray] = None
    J: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.y is None:
            self.y = self.y0.copy()


def itd_inner_loop(problem: Problem, samples: SampleSet, x, y0, eta_y, K: int, zeta_idx):
    """Run the unrolled loop on the index batches ``zeta_idx``; return ``(y^K, J_K)``.

    ``eta_y`` is a schedule or float, evaluated at the inner index ``k = 1..K``.
    """
    x = np.asarray(x, float)
    y = np.array(y0, dtype=float)
    J = np.zeros((problem.d_y, problem.d_x))
    for k in range(K):
        batch = samples.lower_batch(zeta_idx[k])
        eta = step_size(eta_y, k + 1)
        H = problem.hess_yy_g(x, y, batch)
        C = problem.cross_xy_g(x, y, batch)
        grad = problem.grad_y_g(x, y, batch)
        J = J - eta * (H @ J + C)
        y = y - eta * grad
    return y, J


def itd_estimate(problem: Problem, samples: SampleSet, x, y0, eta_y, K: int, zeta_idx, xi_idx) -> np.ndarray:
    y, J = itd_inner_loop(problem, samples, x, y0, eta_y, K, zeta_idx)
    up = samples.upper_batch(xi_idx)
    return problem.grad_x_f(x, y, up) + J.T @ problem.grad_y_f(x, y, up)


def itd_step(problem: Problem, samples: SampleSet, state: ItdState, cfg: SolverConfig,
             streams: Streams) -> ItdState:
    x = state.x
    problem._check(x, state.y0)
    t = state.t + 1
    zeta = draw_batches(streams.itd, samples.q, cfg.K, cfg.batch, cfg.full_batch) if cfg.K else []
    xi = draw_batches(streams.x, samples.n, 1, cfg.batch, cfg.full_batch)[0]
    y, J = itd_inner_loop(problem, samples, x, state.y0, cfg.eta_y, cfg.K, zeta)
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(J))):
        raise DivergenceError("y (inner iterate)", t)
    up = samples.upper_batch(xi)
    g_t = problem.grad_x_f(x, y, up) + J.T @ problem.grad_y_f(x, y, up)
    if not np.all(np.isfinite(g_t)):
        raise DivergenceError("g (hypergradient estimate)", t)
    x_new = x - step_size(cfg.eta_x, t) * g_t
    if not np.all(np.isfinite(x_new)):
        raise DivergenceError("x", t)
    return ItdState(x_new, state.y0, t, y, J)


def itd_run(problem: Problem, samples: SampleSet, cfg: SolverConfig,
            stop: Optional[Callable[[RunTrace], bool]] = None) -> RunTrace:
    """``cfg.T`` ITD steps; the trace's ``m`` column is zero (no momentum)."""
    streams = Streams.from_seed(cfg.seed)
    init = initial_state(problem, cfg)
    state = ItdState(init.x, init.y)
    trace = RunTrace()
    t0 = time.perf_counter()
    record_state(trace, problem, samples, state, cfg.oracles, t0)
    for t in range(1, cfg.T + 1):
        try:
            state = itd_step(problem, samples, state, cfg, streams)
        except DivergenceError as exc:
            exc.trace = trace
            raise
        if t % cfg.record_every == 0 or t == cfg.T:
            record_state(trace, problem, samples, state, cfg.oracles, t0)
            if stop is not None and stop(trace):
                break
    trace.final = state
    return trace
