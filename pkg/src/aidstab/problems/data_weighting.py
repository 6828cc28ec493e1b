"""Training-sample reweighting on a linear regression task.

Each training sample ``j`` carries a logit ``x_j``; its weight is
``sigmoid(x_j)``.  The lower problem is weighted ridge regression, the
upper problem the plain validation squared error:

    g(x, y, zeta_j) = sigmoid(x_j) (a_j.y - b_j)^2 + rho2 |y|^2
    f(x, y, xi)     = (a.y - b)^2

A fraction of the training labels is replaced by noise; good weights
push those samples towards zero.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from ..core import STREAM_DATA, RngStream, SampleSet
from .base import Instance, Problem


class DataWeightingProblem(Problem):
    name = "data_weighting"

    def __init__(self, q: int, dim: int = 5, rho2: float = 0.1):
        self.q = int(q)
        self.dim = int(dim)
        self.d_x = self.q
        self.d_y = self.dim
        self.rho2 = float(rho2)

    # lower samples are (A, b, idx) with idx the sample's own position
    def _f(self, x, y, batch):
        A, b = batch
        r = A @ y - b
        return np.mean(r * r)

    def _grad_x_f(self, x, y, batch):
        return np.zeros(self.d_x)

    def _grad_y_f(self, x, y, batch):
        A, b = batch
        return 2.0 * A.T @ (A @ y - b) / A.shape[0]

    def _g(self, x, y, batch):
        A, b, idx = batch
        r = A @ y - b
        return np.mean(expit(x[idx]) * r * r) + self.rho2 * (y @ y)

    def _grad_y_g(self, x, y, batch):
        A, b, idx = batch
        r = A @ y - b
        return 2.0 * A.T @ (expit(x[idx]) * r) / A.shape[0] + 2.0 * self.rho2 * y

    def _hess_yy_g_vp(self, x, y, batch, v):
        A, _, idx = batch
        return 2.0 * A.T @ (expit(x[idx]) * (A @ v)) / A.shape[0] + 2.0 * self.rho2 * v

    def _cross_xy_g_vp(self, x, y, batch, v):
        A, b, idx = batch
        s = expit(x[idx])
        vals = 2.0 * s * (1.0 - s) * (A @ y - b) * (A @ v) / A.shape[0]
        out = np.zeros(self.d_x)
        np.add.at(out, idx, vals)
        return out

    def hess_yy_g(self, x, y, batch):
        A, _, idx = batch
        return 2.0 * (A.T * expit(x[idx])) @ A / A.shape[0] + 2.0 * self.rho2 * np.eye(self.dim)

    def y_star(self, x, lower_batch, y0=None, **_):
        A, b, idx = lower_batch
        w = expit(x[idx])
        M = (A.T * w) @ A / A.shape[0] + self.rho2 * np.eye(self.dim)
        return np.linalg.solve(M, A.T @ (w * b) / A.shape[0])

    def default_init(self, rng):
        return np.zeros(self.d_x), np.zeros(self.d_y)

    def to_dict(self):
        return {"name": self.name, "q": self.q, "dim": self.dim, "rho2": self.rho2}


def make_data_weighting(n: int = 50, q: int = 40, corrupt_frac: float = 0.5, seed: int = 0,
                        dim: int = 5, rho2: float = 0.1, noise: float = 0.1) -> Instance:
    """Linear task ``b = a.w + noise`` with ``a ~ N(0, I)``; a random
    ``corrupt_frac`` of the training labels is replaced by independent
    draws with the clean labels' scale."""
    if not 0.0 <= corrupt_frac <= 1.0:
        raise ValueError("corrupt_frac must lie in [0, 1]")
    gen = RngStream(seed, STREAM_DATA).generator
    w = gen.standard_normal(dim)

    def draw(rng, count):
        A = rng.standard_normal((count, dim))
        return A, A @ w + noise * rng.standard_normal(count)

    A1, b1 = draw(gen, q)
    corrupted = np.zeros(q, dtype=bool)
    corrupted[gen.permutation(q)[: int(round(corrupt_frac * q))]] = True
    scale = np.sqrt(w @ w + noise**2)
    b1 = np.where(corrupted, scale * gen.standard_normal(q), b1)
    A2, b2 = draw(gen, n)
    samples = SampleSet(upper=(A2, b2), lower=(A1, b1, np.arange(q)))
    problem = DataWeightingProblem(q, dim, rho2)
    params = {"n": n, "q": q, "corrupt_frac": corrupt_frac, "seed": seed, "dim": dim,
              "rho2": rho2, "noise": noise}
    return Instance(problem, samples, truth={"corrupted": corrupted, "w": w}, draw_upper=draw, params=params)
