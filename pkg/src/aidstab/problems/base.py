"""Bi-level problem interface.

A problem defines per-sample upper objective ``f(x, y, xi)`` and lower
objective ``g(x, y, zeta)`` together with their analytic derivatives.
Every method takes a *batch* (tuple of arrays with a leading sample axis)
and returns the batch mean, so a single sample is a batch of one and the
full-batch objective is the batch of all samples.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..core import DimensionError, SampleSet


class SingularHessianError(np.linalg.LinAlgError):
    """The full-batch lower Hessian is not positive definite."""

    def __init__(self, min_eig: float):
        super().__init__(f"lower Hessian not positive definite (min eigenvalue {min_eig:.3e})")
        self.min_eig = min_eig


class Problem:
    """Base class; subclasses implement the ``_``-prefixed batch methods."""

    d_x: int
    d_y: int
    name = "problem"

    # -- subclass hooks -----------------------------------------------------
    def _f(self, x, y, batch):
        raise NotImplementedError

    def _grad_x_f(self, x, y, batch):
        raise NotImplementedError

    def _grad_y_f(self, x, y, batch):
        raise NotImplementedError

    def _g(self, x, y, batch):
        raise NotImplementedError

    def _grad_y_g(self, x, y, batch):
        raise NotImplementedError

    def _hess_yy_g_vp(self, x, y, batch, v):
        raise NotImplementedError

    def _cross_xy_g_vp(self, x, y, batch, v):
        raise NotImplementedError

    # -- checked public surface ---------------------------------------------
    def _check(self, x, y):
        if x.shape != (self.d_x,):
            raise DimensionError(f"x has shape {x.shape}, expected ({self.d_x},)")
        if y.shape != (self.d_y,):
            raise DimensionError(f"y has shape {y.shape}, expected ({self.d_y},)")

    def f(self, x, y, batch) -> float:
        self._check(x, y)
        return float(self._f(x, y, batch))

    def grad_x_f(self, x, y, batch) -> np.ndarray:
        self._check(x, y)
        return self._grad_x_f(x, y, batch)

    def grad_y_f(self, x, y, batch) -> np.ndarray:
        self._check(x, y)
        return self._grad_y_f(x, y, batch)

    def g(self, x, y, batch) -> float:
        self._check(x, y)
        return float(self._g(x, y, batch))

    def grad_y_g(self, x, y, batch) -> np.ndarray:
        self._check(x, y)
        return self._grad_y_g(x, y, batch)

    def hess_yy_g_vp(self, x, y, batch, v) -> np.ndarray:
        self._check(x, y)
        if v.shape != (self.d_y,):
            raise DimensionError(f"v has shape {v.shape}, expected ({self.d_y},)")
        return self._hess_yy_g_vp(x, y, batch, v)

    def cross_xy_g_vp(self, x, y, batch, v) -> np.ndarray:
        """d_x-vector with entry j equal to ``d/dx_j (grad_y g . v)``."""
        self._check(x, y)
        if v.shape != (self.d_y,):
            raise DimensionError(f"v has shape {v.shape}, expected ({self.d_y},)")
        return self._cross_xy_g_vp(x, y, batch, v)

    # -- dense helpers (desk-scale dimensions) -------------------------------
    def hess_yy_g(self, x, y, batch) -> np.ndarray:
        """Dense ``d_y x d_y`` lower Hessian, assembled column by column."""
        eye = np.eye(self.d_y)
        cols = [self.hess_yy_g_vp(x, y, batch, eye[i]) for i in range(self.d_y)]
        H = np.column_stack(cols)
        return 0.5 * (H + H.T)

    def cross_xy_g(self, x, y, batch) -> np.ndarray:
        """Dense ``d_y x d_x`` Jacobian of ``grad_y g`` with respect to ``x``."""
        eye = np.eye(self.d_y)
        return np.vstack([self.cross_xy_g_vp(x, y, batch, eye[i]) for i in range(self.d_y)])

    # -- lower solution -------------------------------------------------------
    def y_star(self, x, lower_batch, y0=None, tol: float = 1e-12, max_iter: int = 100) -> np.ndarray:
        """Minimiser of the batch-mean lower objective, by Newton iterations.

        Subclasses with a closed form override this.
        """
        y = np.zeros(self.d_y) if y0 is None else np.array(y0, dtype=float)
        for _ in range(max_iter):
            grad = self.grad_y_g(x, y, lower_batch)
            if np.linalg.norm(grad) <= tol:
                break
            H = self.hess_yy_g(x, y, lower_batch)
            y = y - np.linalg.solve(H, grad)
        return y

    def upper_value(self, x, samples: SampleSet) -> float:
        """Phi(x): mean upper objective at the exact lower solution."""
        y = self.y_star(x, samples.all_lower())
        return self.f(x, y, samples.all_upper())

    def default_init(self, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """Initial ``(x0, y0)``: small Gaussian x, zero y."""
        return 0.01 * rng.standard_normal(self.d_x), np.zeros(self.d_y)

    def to_dict(self) -> dict:
        """Parameters needed to rebuild the problem (not the samples)."""
        return {"name": self.name}


@dataclass
class Instance:
    """A generated problem together with its data and any ground truth."""

    problem: Problem
    samples: SampleSet
    truth: dict = field(default_factory=dict)
    draw_upper: Optional[Callable[[np.random.Generator, int], tuple]] = None
    params: dict = field(default_factory=dict)

    def fresh_upper(self, rng: np.random.Generator, count: int) -> tuple:
        """Draw ``count`` new upper samples from the generating distribution."""
        if self.draw_upper is None:
            raise NotImplementedError(f"{self.problem.name} has no upper-sample distribution")
        return self.draw_upper(rng, count)

    def gap_metric(self, x) -> Optional[float]:
        """Distance of ``x`` to the ground-truth upper variable, when known."""
        if "x_true" not in self.truth:
            return None
        return float(np.linalg.norm(np.asarray(x) - np.asarray(self.truth["x_true"]).reshape(-1)))


def check_strong_convexity(problem: Problem, samples: SampleSet, rng: np.random.Generator,
                           probes: int = 5, scale: float = 1.0, max_samples: int = 20) -> float:
    """Smallest per-sample lower-Hessian eigenvalue at random probe points.

    Raises ``ValueError`` when it is not positive.
    """
    q = samples.q
    idx = rng.choice(q, size=min(q, max_samples), replace=False)
    lo = np.inf
    for _ in range(probes):
        x = scale * rng.standard_normal(problem.d_x)
        y = scale * rng.standard_normal(problem.d_y)
        for j in idx:
            H = problem.hess_yy_g(x, y, samples.lower_batch([j]))
            lo = min(lo, float(np.linalg.eigvalsh(H)[0]))
    if not lo > 0:
        raise ValueError(f"{problem.name}: lower objective not strongly convex (min eig {lo:.3e})")
    return lo
