"""Two-dataset mixture counterexample.

The lower problem fits ``y`` in R^2 to a mixture (weight ``x``) of two
noisy linear regressions; the upper objective is the squared distance of
``y`` to the test target ``(2, 1)``.  With the full noise population the
optimum is ``x = 0, y = (2.5, 1.5)`` with test error 0.5; a single
unlucky training sample moves the optimum to ``x = 1, y = (2, 1)`` with
test error 0.
"""

from __future__ import annotations

import itertools

import numpy as np

from ..core import SampleSet
from .base import Instance, Problem

B = np.array([[1.0, -1.0], [1.0, 1.0]])
C1 = np.array([3.0, 2.0])
C2 = np.array([1.0, 4.0])
TEST_TARGET = np.array([2.0, 1.0])
CORRUPTED = np.array([-1.0, -1.0, 1.0, -1.0])


class MixtureProblem(Problem):
    name = "mixture"
    d_x = 1
    d_y = 2

    @staticmethod
    def _targets(batch):
        (z,) = batch
        return C1 + z[:, :2], C2 + z[:, 2:]

    def _f(self, x, y, batch):
        (t,) = batch
        d = y - t
        return np.mean(np.sum(d * d, axis=1))

    def _grad_x_f(self, x, y, batch):
        return np.zeros(1)

    def _grad_y_f(self, x, y, batch):
        (t,) = batch
        return 2.0 * (y - t.mean(axis=0))

    def _g(self, x, y, batch):
        c1, c2 = self._targets(batch)
        r1 = y - c1
        r2 = y @ B.T - c2
        w = x[0]
        return np.mean(w * np.sum(r1 * r1, axis=1) + (1 - w) * np.sum(r2 * r2, axis=1))

    def _grad_y_g(self, x, y, batch):
        c1, c2 = self._targets(batch)
        w = x[0]
        return 2 * w * (y - c1.mean(axis=0)) + 2 * (1 - w) * B.T @ (B @ y - c2.mean(axis=0))

    def _hess_yy_g_vp(self, x, y, batch, v):
        w = x[0]
        return 2 * w * v + 2 * (1 - w) * (B.T @ (B @ v))

    def _cross_xy_g_vp(self, x, y, batch, v):
        c1, c2 = self._targets(batch)
        d = 2 * (y - c1.mean(axis=0)) - 2 * B.T @ (B @ y - c2.mean(axis=0))
        return np.array([d @ v])

    def y_star(self, x, lower_batch, y0=None, **_):
        c1, c2 = self._targets(lower_batch)
        w = x[0]
        return (w * c1.mean(axis=0) + (1 - w) * B.T @ c2.mean(axis=0)) / (w + 2 * (1 - w))

    def default_init(self, rng):
        return np.array([0.5]), np.zeros(2)


def noise_population() -> np.ndarray:
    """All 16 equally likely noise vectors in {-1, 1}^4."""
    return np.array(list(itertools.product([-1.0, 1.0], repeat=4)))


def make_mixture(corrupted: bool = False) -> Instance:
    """Population training set (all 16 noise draws) or the single corrupted sample."""
    lower = CORRUPTED[None, :] if corrupted else noise_population()
    samples = SampleSet(upper=(TEST_TARGET[None, :],), lower=(lower,))
    return Instance(MixtureProblem(), samples, params={"corrupted": corrupted})
