"""Smoothness / curvature / variance constants of a problem on a bounded region.

Quadratic-in-y problems have exact curvature at each probe point; the
sup over the region is taken over a finite probe set that includes the
axis extremes of the x-ball, so one-dimensional intervals are hit exactly.
Lipschitz constants of second derivatives (``L2``) are directional
difference quotients and therefore lower estimates of the true constant.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..core import SampleSet
from .base import Problem


@dataclass
class ProblemConstants:
    L0: float
    L1: float
    L2: float
    mu: float
    D0: float = 0.0
    D1: float = 0.0
    domain_note: str = ""
    valid: bool = True
    reason: str = ""
    parts: dict = field(default_factory=dict)

    def __post_init__(self):
        vals = (self.L0, self.L1, self.L2, self.mu, self.D0, self.D1)
        if not all(np.isfinite(v) for v in vals):
            self.valid = False
            self.reason = self.reason or "non-finite estimate"
        elif not self.mu > 0:
            self.valid = False
            self.reason = self.reason or f"mu = {self.mu:.3e} is not positive"
        elif self.mu > self.L1 * (1 + 1e-12):
            self.valid = False
            self.reason = self.reason or "mu exceeds L1"

    def D_z(self, z0_norm: float = 0.0) -> float:
        """Inner-iterate norm bound ``|z0| + L0 / mu``."""
        return z0_norm + self.L0 / self.mu

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("parts")
        return d


def _spec_norm(M) -> float:
    M = np.atleast_2d(M)
    if M.size == 0:
        return 0.0
    return float(np.linalg.norm(M, 2))


def _fd_jac(fun, v, eps):
    cols = []
    for i in range(v.shape[0]):
        e = np.zeros_like(v)
        e[i] = eps
        cols.append((fun(v + e) - fun(v - e)) / (2 * eps))
    return np.column_stack(cols)


def constants_from_points(problem: Problem, samples: SampleSet, points, *,
                          max_samples: int | None = 10, max_var_samples: int = 500,
                          fd_eps: float = 1e-5, l2_step: float = 1e-3,
                          rng: np.random.Generator | None = None,
                          domain_note: str = "probe set") -> ProblemConstants:
    """Estimate constants as sups over ``points`` (a list of ``(x, y)``).

    Per-sample quantities use at most ``max_samples`` upper and lower
    samples (all of them when there are fewer, or when it is None).
    """
    rng = np.random.default_rng(0) if rng is None else rng
    max_samples = max(samples.n, samples.q) if max_samples is None else max_samples
    lo_idx = np.arange(samples.q) if samples.q <= max_samples else rng.choice(samples.q, max_samples, replace=False)
    up_idx = np.arange(samples.n) if samples.n <= max_samples else rng.choice(samples.n, max_samples, replace=False)
    var_idx = np.arange(samples.q) if samples.q <= max_var_samples else rng.choice(samples.q, max_var_samples, replace=False)

    mu = np.inf
    parts = {"L0_fx": 0.0, "L0_fy": 0.0, "L1_gyy": 0.0, "L1_gxy": 0.0, "L1_f": 0.0,
             "L2_yy": 0.0, "L2_xy": 0.0}
    var_pts, mean_pts = [], []
    dx, dy = problem.d_x, problem.d_y

    for x, y in points:
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        ux = rng.standard_normal(dx)
        ux /= np.linalg.norm(ux)
        uy = rng.standard_normal(dy)
        uy /= np.linalg.norm(uy)
        for j in lo_idx:
            b = samples.lower_batch([j])
            H = problem.hess_yy_g(x, y, b)
            ev = np.linalg.eigvalsh(H)
            mu = min(mu, float(ev[0]))
            parts["L1_gyy"] = max(parts["L1_gyy"], float(abs(ev).max()))
            C = problem.cross_xy_g(x, y, b)
            parts["L1_gxy"] = max(parts["L1_gxy"], _spec_norm(C))
            for du, dv in ((l2_step * ux, 0.0 * uy), (0.0 * ux, l2_step * uy)):
                H2 = problem.hess_yy_g(x + du, y + dv, b)
                C2 = problem.cross_xy_g(x + du, y + dv, b)
                parts["L2_yy"] = max(parts["L2_yy"], _spec_norm(H2 - H) / l2_step)
                parts["L2_xy"] = max(parts["L2_xy"], _spec_norm(C2 - C) / l2_step)
        for i in up_idx:
            b = samples.upper_batch([i])
            gx = problem.grad_x_f(x, y, b)
            gy = problem.grad_y_f(x, y, b)
            parts["L0_fx"] = max(parts["L0_fx"], float(np.linalg.norm(gx)))
            parts["L0_fy"] = max(parts["L0_fy"], float(np.linalg.norm(gy)))
            Jxx = _fd_jac(lambda v: problem.grad_x_f(v, y, b), x, fd_eps)
            Jxy = _fd_jac(lambda v: problem.grad_x_f(x, v, b), y, fd_eps)
            Jyx = _fd_jac(lambda v: problem.grad_y_f(v, y, b), x, fd_eps)
            Jyy = _fd_jac(lambda v: problem.grad_y_f(x, v, b), y, fd_eps)
            parts["L1_f"] = max(parts["L1_f"], *(_spec_norm(J) for J in (Jxx, Jxy, Jyx, Jyy)))
        # variance of per-sample lower gradients around their mean
        grads = np.array([problem.grad_y_g(x, y, samples.lower_batch([j])) for j in var_idx])
        gbar = grads.mean(axis=0)
        var_pts.append(float(np.mean(np.sum((grads - gbar) ** 2, axis=1))))
        mean_pts.append(float(gbar @ gbar))

    L0 = max(parts["L0_fx"], parts["L0_fy"])
    L1 = max(parts["L1_gyy"], parts["L1_gxy"], parts["L1_f"])
    L2 = max(parts["L2_yy"], parts["L2_xy"])
    D1, D0 = _fit_growth(np.array(mean_pts), np.array(var_pts))
    return ProblemConstants(L0, L1, L2, mu, D0, D1, domain_note=domain_note, parts=parts)


def _fit_growth(m, v):
    """Smallest-D0 envelope ``v <= D1 m + D0`` with the least-squares slope."""
    if np.allclose(v, 0.0):
        return 0.0, 0.0
    if m.size >= 2 and np.ptp(m) > 0:
        D1 = max(0.0, float(np.polyfit(m, v, 1)[0]))
    else:
        D1 = 0.0
    D0 = max(0.0, float(np.max(v - D1 * m)))
    return D1, D0


def ball_points(center, radius: float, count: int, rng: np.random.Generator, axis_extremes: int = 4):
    """Center, ``+-radius`` along the first coordinate axes, and uniform draws in the ball."""
    center = np.asarray(center, float)
    d = center.shape[0]
    pts = [center.copy()]
    for i in range(min(d, axis_extremes)):
        for s in (-1.0, 1.0):
            p = center.copy()
            p[i] += s * radius
            pts.append(p)
    while len(pts) < count:
        u = rng.standard_normal(d)
        u *= radius * rng.uniform() ** (1.0 / d) / np.linalg.norm(u)
        pts.append(center + u)
    return pts


def analytic_constants(problem: Problem, samples: SampleSet, radius: float, *, x_center=None,
                       y_center=None, y_radius: float | None = None, n_points: int = 20,
                       seed: int = 0, **kw) -> ProblemConstants:
    """Constants on ``|x - x_center| <= radius``, ``|y - y_center| <= y_radius``."""
    rng = np.random.default_rng(seed)
    xc = np.zeros(problem.d_x) if x_center is None else np.asarray(x_center, float)
    yc = np.zeros(problem.d_y) if y_center is None else np.asarray(y_center, float)
    ry = radius if y_radius is None else y_radius
    xs = ball_points(xc, radius, n_points, rng)
    ys = ball_points(yc, ry, n_points, rng)
    # pair every x with the y-center and every y with the x-center, plus random pairings
    points = [(x, yc) for x in xs] + [(xc, y) for y in ys[1:]]
    perm = rng.permutation(len(ys))
    points += [(xs[i], ys[perm[i % len(ys)]]) for i in range(len(xs))]
    note = (f"x in ball(center, {radius:g}) of R^{problem.d_x}, y in ball(center, {ry:g}) of "
            f"R^{problem.d_y}; {len(points)} probe points; f lower bound unused")
    try:
        return constants_from_points(problem, samples, points, rng=rng, domain_note=note, **kw)
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        return ProblemConstants(np.inf, np.inf, np.inf, 0.0, domain_note=note, valid=False,
                                reason=f"estimate failed: {exc}")
