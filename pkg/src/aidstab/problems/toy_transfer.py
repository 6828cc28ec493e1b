"""Linear transfer-learning toy problem.

The source domain differs from the target by an unknown 10 x 10 matrix
``X`` (flattened row-major into the upper variable):

    upper  f(X, y, (a, b)) = (a.y - b)^2 + rho1 |X^T X - I|_F^2
    lower  g(X, y, (a, b)) = (a.X y - b)^2 + rho2 |y|^2

Rows ``a`` have i.i.d. N(0, 0.05) entries; labels are ``b1 = A1 Xhat yhat
+ n1`` (lower) and ``b2 = A2 yhat + n2`` (upper), noise variance 0.1, with
``Xhat`` a random orthogonal matrix.
"""

from __future__ import annotations

import numpy as np

from ..core import STREAM_DATA, RngStream, SampleSet
from .base import Instance, Problem

DIM = 10


class ToyTransferProblem(Problem):
    name = "toy_transfer"

    def __init__(self, dim: int = DIM, rho1: float = 0.1, rho2: float = 0.01):
        self.dim = int(dim)
        self.d_x = self.dim * self.dim
        self.d_y = self.dim
        self.rho1 = float(rho1)
        self.rho2 = float(rho2)
        self._eye = np.eye(self.dim)

    def _mat(self, x):
        return x.reshape(self.dim, self.dim)

    def _penalty(self, X):
        D = X.T @ X - self._eye
        return self.rho1 * np.sum(D * D)

    def _f(self, x, y, batch):
        A, b = batch
        r = A @ y - b
        return np.mean(r * r) + self._penalty(self._mat(x))

    def _grad_x_f(self, x, y, batch):
        X = self._mat(x)
        return (4.0 * self.rho1 * X @ (X.T @ X - self._eye)).ravel()

    def _grad_y_f(self, x, y, batch):
        A, b = batch
        return 2.0 * A.T @ (A @ y - b) / A.shape[0]

    def _g(self, x, y, batch):
        A, b = batch
        r = A @ (self._mat(x) @ y) - b
        return np.mean(r * r) + self.rho2 * (y @ y)

    def _grad_y_g(self, x, y, batch):
        A, b = batch
        X = self._mat(x)
        r = A @ (X @ y) - b
        return 2.0 * X.T @ (A.T @ r) / A.shape[0] + 2.0 * self.rho2 * y

    def _hess_yy_g_vp(self, x, y, batch, v):
        A, _ = batch
        X = self._mat(x)
        return 2.0 * X.T @ (A.T @ (A @ (X @ v))) / A.shape[0] + 2.0 * self.rho2 * v

    def _cross_xy_g_vp(self, x, y, batch, v):
        A, b = batch
        X = self._mat(x)
        r = A @ (X @ y) - b
        s = A @ (X @ v)
        out = np.outer(A.T @ s, y) + np.outer(A.T @ r, v)
        return (2.0 / A.shape[0]) * out.ravel()

    def hess_yy_g(self, x, y, batch):
        A, _ = batch
        AX = A @ self._mat(x)
        return 2.0 * AX.T @ AX / A.shape[0] + 2.0 * self.rho2 * self._eye

    def y_star(self, x, lower_batch, y0=None, **_):
        A, b = lower_batch
        X = self._mat(x)
        AX = A @ X
        q = A.shape[0]
        M = AX.T @ AX / q + self.rho2 * self._eye
        return np.linalg.solve(M, AX.T @ b / q)

    def default_init(self, rng):
        # X = 0 is a saddle of the penalty only; the data term moves X off it
        return np.zeros(self.d_x), np.zeros(self.d_y)

    def to_dict(self):
        return {"name": self.name, "dim": self.dim, "rho1": self.rho1, "rho2": self.rho2}


def random_orthogonal(gen: np.random.Generator, dim: int) -> np.ndarray:
    Q, R = np.linalg.qr(gen.standard_normal((dim, dim)))
    return Q * np.sign(np.diag(R))


def make_toy_transfer(n: int = 500, q: int = 2000, seed: int = 0, rho1: float = 0.1,
                      rho2: float = 0.01, row_var: float = 0.05, noise_var: float = 0.1,
                      noise: bool = True, dim: int = DIM) -> Instance:
    """Generate a toy transfer instance.

    The ground truth ``Xhat``, ``yhat`` and the lower data depend only on
    ``seed`` and ``q``; the upper rows are drawn after them, so instances
    with the same seed share the lower problem across ``n``.
    """
    gen = RngStream(seed, STREAM_DATA).generator
    x_hat = random_orthogonal(gen, dim)
    y_hat = gen.standard_normal(dim)
    row_sd = np.sqrt(row_var)
    noise_sd = np.sqrt(noise_var) if noise else 0.0

    A1 = row_sd * gen.standard_normal((q, dim))
    b1 = A1 @ (x_hat @ y_hat) + noise_sd * gen.standard_normal(q)

    def draw(rng, count):
        A = row_sd * rng.standard_normal((count, dim))
        return A, A @ y_hat + noise_sd * rng.standard_normal(count)

    A2, b2 = draw(gen, n)
    problem = ToyTransferProblem(dim, rho1, rho2)
    samples = SampleSet(upper=(A2, b2), lower=(A1, b1))
    truth = {"x_true": x_hat.ravel(), "y_true": y_hat}
    params = {"n": n, "q": q, "seed": seed, "rho1": rho1, "rho2": rho2,
              "row_var": row_var, "noise_var": noise_var, "noise": noise, "dim": dim}
    return Instance(problem, samples, truth=truth, draw_upper=draw, params=params)
