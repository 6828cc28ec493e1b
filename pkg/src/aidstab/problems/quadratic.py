"""Separable quadratic bi-level problem with closed-form everything.

    f(x, y, xi)   = 1/2 |x - s_u xi|^2 + c.y + (w_y/2) |y|^2
    g(x, y, zeta) = 1/2 y' diag(h) y - (B x + s_l zeta).y

so ``y*(x) = (B x + s_l mean zeta) / h`` and
``grad Phi(x) = x - s_u mean xi + B' ((c + w_y y*) / h)``.  With ``B = 0``
and ``c = w_y = 0`` the levels are decoupled.
"""

from __future__ import annotations

import numpy as np

from ..core import SampleSet
from .base import Instance, Problem


class QuadraticProblem(Problem):
    name = "quadratic"

    def __init__(self, h, B=None, c=None, s_u: float = 0.0, s_l: float = 0.0, d_x: int | None = None,
                 w_y: float = 0.0):
        self.h = np.asarray(h, float).reshape(-1)
        self.d_y = self.h.shape[0]
        if B is None:
            self.d_x = self.d_y if d_x is None else int(d_x)
            self.B = np.zeros((self.d_y, self.d_x))
        else:
            self.B = np.atleast_2d(np.asarray(B, float))
            self.d_x = self.B.shape[1]
        self.c = np.zeros(self.d_y) if c is None else np.asarray(c, float).reshape(-1)
        self.s_u = float(s_u)
        self.s_l = float(s_l)
        self.w_y = float(w_y)

    def _f(self, x, y, batch):
        (xi,) = batch
        d = x - self.s_u * xi
        return 0.5 * np.mean(np.sum(d * d, axis=1)) + self.c @ y + 0.5 * self.w_y * (y @ y)

    def _grad_x_f(self, x, y, batch):
        (xi,) = batch
        return x - self.s_u * xi.mean(axis=0)

    def _grad_y_f(self, x, y, batch):
        return self.c + self.w_y * y

    def _g(self, x, y, batch):
        (zeta,) = batch
        lin = self.B @ x + self.s_l * zeta.mean(axis=0)
        return 0.5 * y @ (self.h * y) - lin @ y

    def _grad_y_g(self, x, y, batch):
        (zeta,) = batch
        return self.h * y - self.B @ x - self.s_l * zeta.mean(axis=0)

    def _hess_yy_g_vp(self, x, y, batch, v):
        return self.h * v

    def _cross_xy_g_vp(self, x, y, batch, v):
        return -self.B.T @ v

    def y_star(self, x, lower_batch, y0=None, **_):
        (zeta,) = lower_batch
        return (self.B @ x + self.s_l * zeta.mean(axis=0)) / self.h

    def exact_grad_phi(self, x, samples: SampleSet) -> np.ndarray:
        (xi,) = samples.all_upper()
        ys = self.y_star(x, samples.all_lower())
        return x - self.s_u * xi.mean(axis=0) + self.B.T @ ((self.c + self.w_y * ys) / self.h)

    def to_dict(self):
        return {"name": self.name, "h": self.h.tolist(), "B": self.B.tolist(), "c": self.c.tolist(),
                "s_u": self.s_u, "s_l": self.s_l, "w_y": self.w_y}


def make_quadratic(h=(1.0,), B=None, c=None, s_u: float = 0.0, s_l: float = 0.0, n: int = 1, q: int = 1,
                   seed: int = 0, d_x: int | None = None, w_y: float = 0.0) -> Instance:
    """Quadratic instance with standard-normal upper and lower samples."""
    problem = QuadraticProblem(h, B, c, s_u, s_l, d_x, w_y)
    gen = np.random.default_rng(seed)

    def draw(rng, count):
        return (rng.standard_normal((count, problem.d_x)),)

    samples = SampleSet(upper=draw(gen, n), lower=(gen.standard_normal((q, problem.d_y)),))
    params = {"h": [float(v) for v in np.atleast_1d(h)], "B": None if B is None else np.asarray(B, float).tolist(),
              "c": None if c is None else np.asarray(c, float).tolist(), "s_u": s_u, "s_l": s_l,
              "n": n, "q": q, "seed": seed, "d_x": d_x, "w_y": w_y}
    return Instance(problem, samples, draw_upper=draw, params=params)
