"""Ridge-regularisation hyperparameter problem.

Upper: ``f = 1/2 (a.y - b)^2`` on validation rows.
Lower: ``g = 1/2 (a.y - b)^2 + (x/2) |y|^2`` on training rows, ``x`` the
(scalar) regularisation coefficient.  Phi is nonconvex in ``x`` in general.
"""

from __future__ import annotations

import numpy as np

from ..core import STREAM_DATA, RngStream, SampleSet
from .base import Instance, Problem


class RidgeHyperProblem(Problem):
    name = "ridge"

    def __init__(self, d_y: int = 1):
        self.d_x = 1
        self.d_y = int(d_y)

    def _f(self, x, y, batch):
        A, b = batch
        r = A @ y - b
        return 0.5 * np.mean(r * r)

    def _grad_x_f(self, x, y, batch):
        return np.zeros(1)

    def _grad_y_f(self, x, y, batch):
        A, b = batch
        return A.T @ (A @ y - b) / A.shape[0]

    def _g(self, x, y, batch):
        A, b = batch
        r = A @ y - b
        return 0.5 * np.mean(r * r) + 0.5 * x[0] * (y @ y)

    def _grad_y_g(self, x, y, batch):
        A, b = batch
        return A.T @ (A @ y - b) / A.shape[0] + x[0] * y

    def _hess_yy_g_vp(self, x, y, batch, v):
        A, _ = batch
        return A.T @ (A @ v) / A.shape[0] + x[0] * v

    def _cross_xy_g_vp(self, x, y, batch, v):
        return np.array([y @ v])

    def y_star(self, x, lower_batch, y0=None, **_):
        A, b = lower_batch
        q = A.shape[0]
        M = A.T @ A / q + x[0] * np.eye(self.d_y)
        return np.linalg.solve(M, A.T @ b / q)

    def default_init(self, rng):
        return np.ones(1), np.zeros(self.d_y)

    def to_dict(self):
        return {"name": self.name, "d_y": self.d_y}


def make_scalar_ridge(a_t: float = 1.0, b_t: float = 1.0, a_v: float = 1.0, b_v: float = 0.0) -> Instance:
    """One training and one validation scalar; with the defaults
    ``g = 1/2 (y-1)^2 + (x/2) y^2`` and ``Phi(x) = 1 / (2 (1+x)^2)``."""
    samples = SampleSet(
        upper=(np.array([[a_v]]), np.array([b_v])),
        lower=(np.array([[a_t]]), np.array([b_t])),
    )
    params = {"kind": "scalar", "a_t": a_t, "b_t": b_t, "a_v": a_v, "b_v": b_v}
    return Instance(RidgeHyperProblem(1), samples, params=params)


def make_ridge(n: int, q: int, d: int = 1, seed: int = 0, noise: float = 0.5) -> Instance:
    """Random ridge instance: ``b = a.w + noise`` with ``a ~ N(0, I)``."""
    gen = RngStream(seed, STREAM_DATA).generator
    w = gen.standard_normal(d)

    def draw(rng, count):
        A = rng.standard_normal((count, d))
        return A, A @ w + noise * rng.standard_normal(count)

    samples = SampleSet(upper=draw(gen, n), lower=draw(gen, q))
    params = {"kind": "random", "n": n, "q": q, "d": d, "seed": seed, "noise": noise}
    return Instance(RidgeHyperProblem(d), samples, truth={"w": w}, draw_upper=draw, params=params)
