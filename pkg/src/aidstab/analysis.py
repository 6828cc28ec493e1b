"""Exact oracles and closed-form bound calculators.

* :func:`exact_hypergradient` assembles the implicit-function hypergradient
  ``grad Phi = mean grad_x f - C^T H^{-1} mean grad_y f`` at ``y*(x)``;
* finite-difference oracles for Phi and for whole inner loops;
* expectations of the AID estimate over sample indices;
* the bias / variance bounds of the AID estimate, the coupled-run
  stability bound and its polynomial exponent, and the step-size
  conditions for the convergence guarantee.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.special
import scipy.stats

from .core import SampleSet, Schedule, step_size
from .problems.base import Problem, SingularHessianError
from .problems.constants import ProblemConstants


# ---------------------------------------------------------------------------
# Exact hypergradient
# ---------------------------------------------------------------------------


@dataclass
class HypergradientDetail:
    grad: np.ndarray
    y_star: np.ndarray
    cond: float
    min_eig: float


def hypergradient_detail(problem: Problem, samples: SampleSet, x, y_star=None) -> HypergradientDetail:
    """Exact hypergradient together with the conditioning of the lower Hessian."""
    x = np.asarray(x, float)
    lower, upper = samples.all_lower(), samples.all_upper()
    ys = problem.y_star(x, lower) if y_star is None else np.asarray(y_star, float)
    H = problem.hess_yy_g(x, ys, lower)
    ev = np.linalg.eigvalsh(H)
    if not ev[0] > 0:
        raise SingularHessianError(float(ev[0]))
    factor = scipy.linalg.cho_factor(H)
    w = scipy.linalg.cho_solve(factor, problem.grad_y_f(x, ys, upper))
    grad = problem.grad_x_f(x, ys, upper) - problem.cross_xy_g_vp(x, ys, lower, w)
    return HypergradientDetail(grad, ys, float(ev[-1] / ev[0]), float(ev[0]))


def exact_hypergradient(problem: Problem, samples: SampleSet, x, y_star=None) -> np.ndarray:
    """``grad Phi(x)`` for ``Phi(x) = mean_i f(x, y*(x), xi_i)``.

    Raises :class:`SingularHessianError` when the full-batch lower Hessian
    at ``y*(x)`` is not positive definite.
    """
    return hypergradient_detail(problem, samples, x, y_star).grad


def phi(problem: Problem, samples: SampleSet, x) -> float:
    return problem.upper_value(np.asarray(x, float), samples)


def fd_gradient(fun, x, eps: float = 1e-6) -> np.ndarray:
    """Central differences of a scalar function."""
    x = np.asarray(x, float)
    out = np.empty_like(x)
    for i in range(x.shape[0]):
        e = np.zeros_like(x)
        e[i] = eps
        out[i] = (fun(x + e) - fun(x - e)) / (2 * eps)
    return out


def fd_hypergradient(problem: Problem, samples: SampleSet, x, eps: float = 1e-6) -> np.ndarray:
    return fd_gradient(lambda v: phi(problem, samples, v), x, eps)


def relative_error(a, b) -> float:
    a = np.atleast_1d(np.asarray(a, float))
    b = np.atleast_1d(np.asarray(b, float))
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


# ---------------------------------------------------------------------------
# Expectation of the AID estimate Delta = grad_x f(xi) - C(zeta_{K+2}) z_K
# ---------------------------------------------------------------------------


def _per_sample(samples: SampleSet):
    ups = [samples.upper_batch([i]) for i in range(samples.n)]
    los = [samples.lower_batch([j]) for j in range(samples.q)]
    return ups, los


def _delta(problem, x, y, up, los_seq, lo_x, z0, eta_z):
    b = problem.grad_y_f(x, y, up)
    z = np.array(z0, float)
    for lo in los_seq:
        z = z - eta_z * (problem.hess_yy_g_vp(x, y, lo, z) - b)
    return problem.grad_x_f(x, y, up) - problem.cross_xy_g_vp(x, y, lo_x, z)


def enumerate_delta_moments(problem: Problem, samples: SampleSet, x, y, K: int, eta_z: float,
                            z0=None, limit: int = 10**6):
    """Mean and ``E|Delta - E Delta|^2`` by summing over every index tuple
    ``(xi, zeta_1..zeta_K, zeta_{K+2})`` with equal weight."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    z0 = np.zeros(problem.d_y) if z0 is None else np.asarray(z0, float)
    n, q = samples.n, samples.q
    count = n * q ** (K + 1)
    if count > limit:
        raise ValueError(f"{count} index tuples exceed the enumeration limit {limit}")
    ups, los = _per_sample(samples)
    s1 = np.zeros(problem.d_x)
    s2 = 0.0
    vals = []
    for i in range(n):
        for seq in itertools.product(range(q), repeat=K):
            for j in range(q):
                d = _delta(problem, x, y, ups[i], [los[k] for k in seq], los[j], z0, eta_z)
                vals.append(d)
    vals = np.array(vals)
    mean = vals.mean(axis=0)
    var = float(np.mean(np.sum((vals - mean) ** 2, axis=1)))
    return mean, var


def expected_delta(problem: Problem, samples: SampleSet, x, y, K: int, eta_z: float, z0=None,
                   method: str = "auto", mc_draws: int = 20000, seed: int = 0):
    """``E Delta`` over the sampled indices of one outer step.

    ``method``:

    * ``"enumerate"``: sum over all index tuples (exact, exponential in K);
    * ``"exact"``: the mean of each factor separately, which is exact because
      the indices are independent and ``Delta`` is multilinear in the
      per-draw quantities (``E z_k = (I - eta_z E H) E z_{k-1} + eta_z E b``
      needs ``H_k`` independent of ``z_{k-1}`` and ``b``; the ``xi`` shared
      by ``b`` and ``grad_x f`` enters ``Delta`` through the sum of a term in
      ``grad_x f`` and a term linear in ``b``, so the expectation splits);
    * ``"mc"``: Monte Carlo average; returns ``(mean, standard_error)``.
    * ``"auto"``: enumerate when ``n q^(K+1) <= 10^4`` else exact.

    Returns ``(mean, stderr)`` with ``stderr = 0`` for the exact methods.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    z0 = np.zeros(problem.d_y) if z0 is None else np.asarray(z0, float)
    if method == "auto":
        method = "enumerate" if samples.n * samples.q ** (K + 1) <= 10**4 else "exact"
    if method == "enumerate":
        return enumerate_delta_moments(problem, samples, x, y, K, eta_z, z0)[0], 0.0
    if method == "exact":
        lower, upper = samples.all_lower(), samples.all_upper()
        b = problem.grad_y_f(x, y, upper)
        z = z0.copy()
        for _ in range(K):
            z = z - eta_z * (problem.hess_yy_g_vp(x, y, lower, z) - b)
        return problem.grad_x_f(x, y, upper) - problem.cross_xy_g_vp(x, y, lower, z), 0.0
    if method == "mc":
        rng = np.random.default_rng(seed)
        ups, los = _per_sample(samples)
        vals = np.array([
            _delta(problem, x, y, ups[rng.integers(samples.n)],
                   [los[k] for k in rng.integers(samples.q, size=K)],
                   los[rng.integers(samples.q)], z0, eta_z)
            for _ in range(mc_draws)
        ])
        return vals.mean(axis=0), vals.std(axis=0, ddof=1) / math.sqrt(mc_draws)
    raise ValueError(f"unknown method {method!r}")


# ---------------------------------------------------------------------------
# Closed-form bounds
# ---------------------------------------------------------------------------


def aid_bias_bound(c: ProblemConstants, y_dist: float, K: int, eta_z: float, z0_norm: float = 0.0) -> float:
    """Upper bound on ``|E Delta - grad Phi(x)|^2``:
    ``2 (L1 + D_z L2)^2 |y - y*|^2 + 2 L1^2 (1 - eta_z mu)^(2K) (D_z + L0/mu)^2``."""
    Dz = c.D_z(z0_norm)
    contraction = (1.0 - eta_z * c.mu) ** (2 * K)
    return 2 * (c.L1 + Dz * c.L2) ** 2 * y_dist**2 + 2 * c.L1**2 * contraction * (Dz + c.L0 / c.mu) ** 2


def aid_variance_bound(c: ProblemConstants, K: int, eta_z: float, z0_norm: float = 0.0) -> float:
    """Upper bound on ``E |Delta - E Delta|^2``."""
    Dz = c.D_z(z0_norm)
    L0, L1, mu = c.L0, c.L1, c.mu
    inner = K * L1**2 * Dz**2 + 2 * K * eta_z**2 * L1**2 * L0**2 + 2 * K * L0**2 / mu**2
    return L0**2 + 2 * L1**2 * inner + 2 * Dz**2 * L1**2


def L_Phi(c: ProblemConstants) -> float:
    """Smoothness constant of Phi."""
    L0, L1, L2, mu = c.L0, c.L1, c.L2, c.mu
    return (mu + L1) * (L1 * mu**2 + L0 * L2 * mu + L1**2 * mu + L2 * L0) / mu**3


def stability_constants(c: ProblemConstants, n: int, z0_norm: float = 0.0) -> tuple[float, float, float]:
    """``(D_z, C_m, C_c)`` entering the stability bound for ``n`` upper samples."""
    Dz = c.D_z(z0_norm)
    L0, L1, L2, mu = c.L0, c.L1, c.L2, c.mu
    frac = (n - 1) / n
    Cm = 2 * frac * L1 + 2 * L2 * Dz + (L1 / mu) * (frac * L1 + Dz * L2)
    Cc = 2 * L0 + 2 * L1 * L0 / mu
    return Dz, Cm, Cc


def _steps(s, T):
    if isinstance(s, Schedule) or not np.ndim(s):
        return np.array([step_size(s, t) for t in range(1, T + 1)])
    arr = np.asarray(s, float)
    if arr.shape != (T,):
        raise ValueError(f"step array has shape {arr.shape}, expected ({T},)")
    return arr


def theorem1_log_bound(eta_x, eta_y, eta_m, c: ProblemConstants, T: int, n: int, z0_norm: float = 0.0) -> float:
    """Natural log of the coupled-run stability bound (finite for any T)."""
    if T < 1 or n < 1:
        raise ValueError("need T >= 1 and n >= 1")
    ex, ey = _steps(eta_x, T), _steps(eta_y, T)
    em = np.clip(_steps(eta_m, T), 0.0, 1.0)
    _, Cm, Cc = stability_constants(c, n, z0_norm)
    log_r = np.log1p(ex * em * Cm + em * Cm + ey * c.L1)
    # suffix[t] = sum_{k > t} log r_k  (0-based: k = t+1..T-1)
    suffix = np.concatenate([np.cumsum(log_r[::-1])[::-1][1:], [0.0]])
    with np.errstate(divide="ignore"):
        log_a = np.log((1 + ex) * em * Cc / n)
    return float(scipy.special.logsumexp(log_a + suffix))


def theorem1_stability_bound(eta_x, eta_y, eta_m, c: ProblemConstants, T: int, n: int,
                             z0_norm: float = 0.0) -> float:
    """``sum_t (1+eta_x) eta_m (C_c/n) prod_{k>t} (1 + eta_x eta_m C_m + eta_m C_m + eta_y L1)``.

    Schedules may be :class:`Schedule`, floats, or length-T arrays.  The
    sum is accumulated in log space; values beyond float range return
    ``inf`` (see :func:`theorem1_log_bound` for the finite log).
    """
    log_eps = theorem1_log_bound(eta_x, eta_y, eta_m, c, T, n, z0_norm)
    return math.exp(log_eps) if log_eps < 709.0 else math.inf


def corollary1_exponent(c: ProblemConstants, alpha: float, beta: float, n: int, z0_norm: float = 0.0) -> float:
    """``q = (2 C_m alpha + L1 beta) / (2 C_m alpha + L1 beta + 1)`` for
    ``eta_x = eta_m = alpha / t`` and ``eta_y = beta / t``."""
    _, Cm, _ = stability_constants(c, n, z0_norm)
    p = 2 * Cm * alpha + c.L1 * beta
    return p / (p + 1)


def corollary1_bound(c: ProblemConstants, alpha: float, beta: float, T: int, n: int,
                     z0_norm: float = 0.0) -> float:
    """Function-value stability bound ``(1 + 1/p) (2 alpha C_c)^(1/(p+1)) T^q / n``
    for ``f`` valued in ``[0, 1]``, obtained by the optimal burn-in split."""
    _, Cm, Cc = stability_constants(c, n, z0_norm)
    p = 2 * Cm * alpha + c.L1 * beta
    q = p / (p + 1)
    return (1 + 1 / p) * (2 * alpha * Cc) ** (1 / (p + 1)) * T**q / n


def theorem1_asymptotic_exponent(c: ProblemConstants, alpha: float, beta: float, n: int,
                                 z0_norm: float = 0.0) -> float:
    """Growth exponent ``alpha C_m + beta L1`` of the parameter-divergence sum in T
    for ``eta_x = eta_m = alpha / t``, ``eta_y = beta / t``."""
    _, Cm, _ = stability_constants(c, n, z0_norm)
    return alpha * Cm + beta * c.L1


# ---------------------------------------------------------------------------
# Step-size conditions
# ---------------------------------------------------------------------------


@dataclass
class Condition:
    name: str
    satisfied: bool
    margin: float
    gating: bool = True


def _nonincreasing(vals, name, tol=1e-15):
    diffs = vals[:-1] - vals[1:]
    margin = float(diffs.min()) if diffs.size else 0.0
    return Condition(name, margin >= -tol * max(1.0, float(np.abs(vals).max())), margin)


def theorem2_conditions(eta_x, eta_y, eta_m, c: ProblemConstants, eta_z: float, T: int,
                        z0_norm: float = 0.0) -> list[Condition]:
    """Step-size conditions of the convergence guarantee, checked on ``t = 1..T``.

    The ratio condition is evaluated twice: the stricter
    ``mu / (8 L1 (L1 + D_z L2))`` gates admissibility, the looser
    ``mu / (4 L1 (L1 + D_z L2))`` is reported only.
    """
    ex, ey = _steps(eta_x, T), _steps(eta_y, T)
    em = np.clip(_steps(eta_m, T), 0.0, 1.0)
    Dz = c.D_z(z0_norm)
    LP = L_Phi(c)
    ratio = ex / ey
    strict = c.mu / (8 * c.L1 * (c.L1 + Dz * c.L2))
    loose = c.mu / (4 * c.L1 * (c.L1 + Dz * c.L2))
    conds = [
        Condition("eta_z <= 1/L1", eta_z <= 1 / c.L1, 1 / c.L1 - eta_z),
        Condition("eta_x <= 1/(2 L_Phi)", bool(np.all(ex <= 1 / (2 * LP))), float(np.min(1 / (2 * LP) - ex))),
        Condition("eta_x/eta_y <= mu/(8 L1 (L1 + D_z L2))", bool(np.all(ratio <= strict)),
                  float(np.min(strict - ratio))),
        Condition("eta_x/eta_y <= mu/(4 L1 (L1 + D_z L2))", bool(np.all(ratio <= loose)),
                  float(np.min(loose - ratio)), gating=False),
        _nonincreasing(em, "eta_m non-increasing"),
        _nonincreasing(em / ex, "eta_m/eta_x non-increasing"),
        _nonincreasing(em / ey, "eta_m/eta_y non-increasing"),
    ]
    return conds


def admissible(conditions) -> bool:
    return all(cd.satisfied for cd in conditions if cd.gating)


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------


@dataclass
class BoundReport:
    eps_stab: float
    log_eps_stab: float
    overflow: bool
    q_exponent: float
    L_Phi: float
    D_z: float
    C_m: float
    C_c: float
    conditions: list = field(default_factory=list)
    constants: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)

    @property
    def admissible(self) -> bool:
        return admissible(self.conditions)

    def to_text(self) -> str:
        lines = ["bound report", "------------"]
        for k, v in self.constants.items():
            lines.append(f"{k:>12} = {v}")
        lines += [
            f"{'L_Phi':>12} = {self.L_Phi:.10g}",
            f"{'D_z':>12} = {self.D_z:.10g}",
            f"{'C_m':>12} = {self.C_m:.10g}",
            f"{'C_c':>12} = {self.C_c:.10g}",
            f"{'eps_stab':>12} = {self.eps_stab:.10g}" + ("  (overflow)" if self.overflow else ""),
            f"{'log eps':>12} = {self.log_eps_stab:.10g}",
            f"{'q exponent':>12} = {self.q_exponent:.10g}",
            "",
            "conditions:",
        ]
        for cd in self.conditions:
            tag = "ok  " if cd.satisfied else "FAIL"
            extra = "" if cd.gating else "  (reported only)"
            lines.append(f"  [{tag}] {cd.name:<42} margin {cd.margin:+.6g}{extra}")
        lines.append(f"admissible: {'yes' if self.admissible else 'no'}")
        lines += [f"note: {f}" for f in self.flags]
        return "\n".join(lines) + "\n"

    def to_kv(self) -> str:
        out = [f"eps_stab={self.eps_stab!r}", f"log_eps_stab={self.log_eps_stab!r}",
               f"overflow={int(self.overflow)}", f"q_exponent={self.q_exponent!r}",
               f"L_Phi={self.L_Phi!r}", f"D_z={self.D_z!r}", f"C_m={self.C_m!r}", f"C_c={self.C_c!r}",
               f"admissible={int(self.admissible)}"]
        for cd in self.conditions:
            out.append(f"condition.{cd.name}={int(cd.satisfied)},{cd.margin!r},{int(cd.gating)}")
        return "\n".join(out) + "\n"


def _alpha_of(s):
    if isinstance(s, Schedule) and s.kind == "diminishing":
        return s.a
    return None


def bound_report(eta_x, eta_y, eta_m, c: ProblemConstants, eta_z: float, T: int, n: int,
                 z0_norm: float = 0.0, K: int | None = None) -> BoundReport:
    Dz, Cm, Cc = stability_constants(c, n, z0_norm)
    log_eps = theorem1_log_bound(eta_x, eta_y, eta_m, c, T, n, z0_norm)
    overflow = log_eps >= 709.0
    flags = []
    alpha, beta = _alpha_of(eta_x), _alpha_of(eta_y)
    if alpha is not None and beta is not None:
        q = corollary1_exponent(c, alpha, beta, n, z0_norm)
    else:
        q = float("nan")
        flags.append("q exponent applies to alpha/t schedules only")
    if z0_norm > 0 and K is not None:
        alt = (1 - c.mu * eta_z) ** K * z0_norm + c.L0 / c.mu
        flags.append(f"z0 != 0: D_z = {Dz:.6g}; contracted form gives {alt:.6g}")
    if not c.valid:
        flags.append(f"constants invalid: {c.reason}")
    return BoundReport(
        eps_stab=math.exp(log_eps) if not overflow else math.inf,
        log_eps_stab=log_eps, overflow=overflow, q_exponent=q, L_Phi=L_Phi(c),
        D_z=Dz, C_m=Cm, C_c=Cc,
        conditions=theorem2_conditions(eta_x, eta_y, eta_m, c, eta_z, T, z0_norm),
        constants={k: c.to_dict()[k] for k in ("L0", "L1", "L2", "mu", "D0", "D1")},
        flags=flags,
    )


# ---------------------------------------------------------------------------
# Rate fits
# ---------------------------------------------------------------------------


@dataclass
class RateFit:
    slope: float
    intercept: float
    ci_low: float
    ci_high: float
    points: int


def loglog_fit(xs, ys, level: float = 0.95) -> RateFit:
    """Least-squares slope of ``log y`` against ``log x`` with a t-interval."""
    lx = np.log(np.asarray(xs, float))
    ly = np.log(np.asarray(ys, float))
    if np.unique(lx).size < 2:
        raise ValueError("need at least two distinct abscissae for a slope")
    res = scipy.stats.linregress(lx, ly)
    dof = lx.size - 2
    half = float(scipy.stats.t.ppf(0.5 + level / 2, dof) * res.stderr) if dof > 0 else math.inf
    return RateFit(float(res.slope), float(res.intercept), res.slope - half, res.slope + half, lx.size)


def convergence_rate_summary(trace_set, level: float = 0.95) -> RateFit:
    """Fit ``min_t |grad Phi(x_t)|^2`` against the horizon on log-log axes.

    ``trace_set`` maps each horizon T to a list of per-seed runs: traces
    (anything with a ``grad_norm_sq`` sequence), 1-D curves, or scalars.
    The seed-averaged curve is formed per horizon and its minimum over t
    gives one point per horizon, so the fit has one point per T.
    """
    if len(trace_set) < 3:
        raise ValueError(f"need at least 3 horizons, got {len(trace_set)}")
    xs, ys = [], []
    for T, runs in sorted(trace_set.items()):
        curves = [np.atleast_1d(np.asarray(r.grad_norm_sq if hasattr(r, "grad_norm_sq") else r, float))
                  for r in runs]
        if not curves:
            raise ValueError(f"no runs for horizon {T}")
        length = min(len(c) for c in curves)
        mean_curve = np.mean([c[:length] for c in curves], axis=0)
        xs.append(T)
        ys.append(float(np.nanmin(mean_curve)))
    return loglog_fit(xs, ys, level)


# ---------------------------------------------------------------------------
# Iterate invariants along a run
# ---------------------------------------------------------------------------


@dataclass
class LemmaReport:
    """Hull constants seen along a run and the number of invariant violations."""

    L0: float
    L1: float
    mu: float
    D_z: float
    eta_z_ok: bool
    eta_y_ok: bool
    z_checks: int = 0
    z_violations: int = 0
    m_checks: int = 0
    m_violations: int = 0
    y_checks: int = 0
    y_violations: int = 0
    worst: dict = field(default_factory=dict)

    @property
    def eligible(self) -> bool:
        """True when the run met the step-size premises of the invariants."""
        return self.mu > 0 and self.eta_z_ok and self.eta_y_ok

    @property
    def violations(self) -> int:
        return self.z_violations + self.m_violations + self.y_violations


class LemmaMonitor:
    """Step monitor for :func:`aid.aid_run` checking the iterate invariants.

    At every visited ``(x_{t-1}, y_{t-1})`` the monitor takes per-sample
    maxima over the whole pool of ``|grad_x f|``, ``|grad_y f|``, the
    eigenvalues of the lower Hessian and ``|cross_xy g|``; these form the
    trajectory-hull constants ``L0``, ``L1`` and ``mu``.  It also replays
    the y-step from a perturbed ``y`` with the same sample and the same
    ``x`` to measure the contraction factor.  :meth:`report` then checks

    * ``|z_t^k| <= D_z = |z0| + L0 / mu`` on every inner iterate,
    * ``|m_t|^2 <= 2 L0^2 + 2 L1^2 D_z^2`` on every outer iterate,
    * ``|y_t - y'_t| <= (1 - mu eta_y / 2) |y_{t-1} - y'_{t-1}|``,

    and whether the premises ``eta_z <= 1/L1`` and ``eta_y <= mu / L1^2``
    (or ``eta_y <= 1/L1`` when the lower Hessian does not depend on y) held.
    """

    def __init__(self, problem: Problem, samples: SampleSet, eta_z: float, perturb: float = 0.1,
                 seed: int = 0, rtol: float = 1e-9):
        self.problem = problem
        self.samples = samples
        self.eta_z = float(eta_z)
        self.perturb = float(perturb)
        self.rng = np.random.default_rng(seed)
        self.rtol = float(rtol)
        self.L0 = 0.0
        self.L1 = 0.0
        self.mu = math.inf
        self.z0_norm = 0.0
        self.max_z = []
        self.m_sq = []
        self.y_ratio = []
        self.eta_y = []
        self.quadratic_y = True

    def _hull(self, x, y):
        p, s = self.problem, self.samples
        for i in range(s.n):
            b = s.upper_batch([i])
            self.L0 = max(self.L0, float(np.linalg.norm(p.grad_x_f(x, y, b))),
                          float(np.linalg.norm(p.grad_y_f(x, y, b))))
        for j in range(s.q):
            b = s.lower_batch([j])
            ev = np.linalg.eigvalsh(p.hess_yy_g(x, y, b))
            self.mu = min(self.mu, float(ev[0]))
            C = np.atleast_2d(p.cross_xy_g(x, y, b))
            self.L1 = max(self.L1, float(np.abs(ev).max()), float(np.linalg.norm(C, 2)) if C.size else 0.0)

    def __call__(self, info) -> None:
        p, s = self.problem, self.samples
        x, y = info.prev.x, info.prev.y
        self._hull(x, y)
        if info.z_iterates:
            self.z0_norm = max(self.z0_norm, float(np.linalg.norm(info.z_iterates[0])))
            self.max_z.append(max(float(np.linalg.norm(z)) for z in info.z_iterates))
        self.m_sq.append(float(info.new.m @ info.new.m))
        u = self.rng.standard_normal(p.d_y)
        y2 = y + self.perturb * (1.0 + np.linalg.norm(y)) * u / np.linalg.norm(u)
        self._hull(x, y2)
        lower = s.lower_batch(info.zeta_y)
        if not np.allclose(p.hess_yy_g(x, y, lower), p.hess_yy_g(x, y2, lower)):
            self.quadratic_y = False
        y2_new = y2 - info.eta_y * p.grad_y_g(x, y2, lower)
        self.y_ratio.append(float(np.linalg.norm(info.new.y - y2_new) / np.linalg.norm(y - y2)))
        self.eta_y.append(info.eta_y)

    def report(self) -> LemmaReport:
        mu, L0, L1 = self.mu, self.L0, self.L1
        Dz = self.z0_norm + L0 / mu if mu > 0 else math.inf
        eta_y = np.asarray(self.eta_y, float)
        if mu > 0 and eta_y.size:
            cap = 1.0 / L1 if self.quadratic_y else mu / L1 ** 2
            eta_y_ok = bool(np.all(eta_y <= cap * (1 + 1e-12)))
        else:
            eta_y_ok = mu > 0
        rep = LemmaReport(L0, L1, mu, Dz, self.eta_z <= (1.0 / L1) * (1 + 1e-12) if L1 > 0 else True, eta_y_ok)
        tol = 1.0 + self.rtol
        zs = np.asarray(self.max_z, float)
        rep.z_checks = zs.size
        rep.z_violations = int(np.sum(zs > Dz * tol))
        m_cap = 2 * L0 ** 2 + 2 * L1 ** 2 * Dz ** 2
        ms = np.asarray(self.m_sq, float)
        rep.m_checks = ms.size
        rep.m_violations = int(np.sum(ms > m_cap * tol))
        ratios = np.asarray(self.y_ratio, float)
        caps = 1.0 - mu * eta_y / 2.0
        rep.y_checks = ratios.size
        rep.y_violations = int(np.sum(ratios > caps * tol))
        rep.worst = {
            "z_over_Dz": float(zs.max() / Dz) if zs.size else 0.0,
            "m_sq_over_cap": float(ms.max() / m_cap) if ms.size else 0.0,
            "y_ratio_over_cap": float(np.max(ratios / caps)) if ratios.size else 0.0,
        }
        return rep


# ---------------------------------------------------------------------------
# Full-batch estimators and their error against the exact hypergradient
# ---------------------------------------------------------------------------


def default_inner_step(problem: Problem, samples: SampleSet, x, y=None) -> float:
    """``1 / lambda_max`` of the full-batch lower Hessian at ``(x, y)`` (``y*`` by default)."""
    x = np.asarray(x, float)
    y = problem.y_star(x, samples.all_lower()) if y is None else np.asarray(y, float)
    top = float(np.linalg.eigvalsh(problem.hess_yy_g(x, y, samples.all_lower()))[-1])
    if not top > 0:
        raise SingularHessianError(top)
    return 1.0 / top


def aid_full_batch(problem: Problem, samples: SampleSet, x, K: int, eta_z: float, y=None, z0=None) -> np.ndarray:
    """Deterministic AID estimate with every draw replaced by the whole pool.

    ``y`` defaults to ``y*(x)``; ``K = 0`` returns ``grad_x f`` minus the
    cross term applied to ``z0`` (so just ``grad_x f`` for ``z0 = 0``).
    """
    from .aid import z_inner_loop

    x = np.asarray(x, float)
    y = problem.y_star(x, samples.all_lower()) if y is None else np.asarray(y, float)
    z0 = np.zeros(problem.d_y) if z0 is None else np.asarray(z0, float)
    every_u, every_l = np.arange(samples.n), np.arange(samples.q)
    z = z_inner_loop(problem, samples, x, y, every_u, [every_l] * K, z0, eta_z, K)
    return problem.grad_x_f(x, y, samples.all_upper()) - problem.cross_xy_g_vp(x, y, samples.all_lower(), z)


def itd_full_batch(problem: Problem, samples: SampleSet, x, K: int, eta_y, y0=None) -> np.ndarray:
    """Deterministic ITD estimate (whole pool at every inner step) from ``y0`` (zero by default)."""
    from .itd import itd_estimate

    y0 = np.zeros(problem.d_y) if y0 is None else np.asarray(y0, float)
    every_u, every_l = np.arange(samples.n), np.arange(samples.q)
    return itd_estimate(problem, samples, np.asarray(x, float), y0, eta_y, K, [every_l] * K, every_u)


@dataclass
class KSweepRow:
    K: int
    aid_rel_err: float
    itd_rel_err: float


def k_sweep(problem: Problem, samples: SampleSet, x, K_list, eta_z: float | None = None,
            eta_y: float | None = None, y0=None) -> list[KSweepRow]:
    """Relative errors of the full-batch AID and ITD estimates for each ``K``.

    Both inner step sizes default to ``1 / lambda_max`` of the lower Hessian
    at ``(x, y*(x))``.
    """
    exact = exact_hypergradient(problem, samples, x)
    step = None
    if eta_z is None or eta_y is None:
        step = default_inner_step(problem, samples, x)
    eta_z = step if eta_z is None else eta_z
    eta_y = step if eta_y is None else eta_y
    rows = []
    for K in K_list:
        a = aid_full_batch(problem, samples, x, int(K), eta_z)
        b = itd_full_batch(problem, samples, x, int(K), eta_y, y0)
        rows.append(KSweepRow(int(K), relative_error(a, exact), relative_error(b, exact)))
    return rows
