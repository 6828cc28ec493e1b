"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines inline;
they are also repeated in the terminal summary at the end of any run.
"""

import math
import time

import numpy as np
import pytest
from scipy import stats
from scipy.special import expit

from aidstab.aid import SolverConfig, aid_run, initial_state, z_inner_loop
from aidstab.analysis import (
    LemmaMonitor, aid_bias_bound, aid_full_batch, default_inner_step, convergence_rate_summary, enumerate_delta_moments,
    exact_hypergradient, fd_hypergradient, itd_full_batch, relative_error, theorem2_conditions,
)
from aidstab.core import Schedule
from aidstab.problems import (
    analytic_constants, make_data_weighting, make_quadratic, make_ridge, make_scalar_ridge, make_toy_transfer,
)
from aidstab.stability import stability_sweep

RESULTS: dict = {}


def report(capsys, number: int, ok: bool, detail: str) -> None:
    line = f"CRITERION {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[number] = line
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


# -- 1 -----------------------------------------------------------------------------


def test_criterion_01_hypergradient_exactness(capsys):
    start = time.perf_counter()
    worst = 0.0
    sr = make_scalar_ridge()
    toy = make_toy_transfer(n=100, q=200, seed=0)
    assert toy.problem.d_x == 100 and toy.problem.d_y == 10
    rng = np.random.default_rng(0)
    for _ in range(10):
        x = rng.uniform(0.0, 3.0, 1)
        worst = max(worst, relative_error(fd_hypergradient(sr.problem, sr.samples, x),
                                          exact_hypergradient(sr.problem, sr.samples, x)))
        x = 0.3 * rng.standard_normal(100)
        worst = max(worst, relative_error(fd_hypergradient(toy.problem, toy.samples, x),
                                          exact_hypergradient(toy.problem, toy.samples, x)))
    elapsed = time.perf_counter() - start
    report(capsys, 1, worst <= 1e-5 and elapsed < 10, f"max rel err {worst:.2e}, {elapsed:.1f} s")


# -- 2 -----------------------------------------------------------------------------


def test_criterion_02_inner_loop_closed_form(capsys):
    start = time.perf_counter()
    h = np.array([0.5, 1.0, 1.7])
    b = np.array([1.0, -2.0, 0.25])
    z0 = np.array([0.3, 0.1, -0.4])
    eta = 0.4
    inst = make_quadratic(h=h, c=b, d_x=1, n=1, q=1)
    worst = 0.0
    for K in (1, 5, 50):
        z = z_inner_loop(inst.problem, inst.samples, np.zeros(1), np.zeros(3), [0], [[0]] * K, z0, eta)
        P = (1 - eta * h) ** K
        worst = max(worst, float(np.max(np.abs(z - (P * z0 + (1 - P) * b / h)))))
    elapsed = time.perf_counter() - start
    report(capsys, 2, worst <= 1e-10 and elapsed < 1, f"max abs err {worst:.1e}, {elapsed:.3f} s")


# -- 3 -----------------------------------------------------------------------------


def test_criterion_03_bias_bound_dominance(capsys):
    inst = make_scalar_ridge()
    p, s = inst.problem, inst.samples
    x = np.array([1.0])
    ystar = p.y_star(x, s.all_lower())
    c = analytic_constants(p, s, 0.25, x_center=x, y_center=ystar, y_radius=1.5, max_samples=None)
    eta_z = 0.5 / c.L1
    grad = exact_hypergradient(p, s, x)
    worst, cases = 0.0, 0
    for K in (1, 5, 20):
        for dist in (0.0, 0.1, 1.0):
            for sign in (1.0, -1.0):
                mean, _ = enumerate_delta_moments(p, s, x, ystar + sign * dist, K, eta_z)
                measured = float(np.sum((mean - grad) ** 2))
                bound = aid_bias_bound(c, dist, K, eta_z)
                worst = max(worst, measured / bound)
                cases += 1
    report(capsys, 3, worst <= 1.0, f"{cases} cases, max measured/bound {worst:.3f}")


# -- 4 -----------------------------------------------------------------------------


def _lemma_instance(r, rng):
    fam = r % 4
    if fam == 0:
        d, dx = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        return fam, make_quadratic(h=rng.uniform(0.5, 2, d), B=rng.standard_normal((d, dx)), c=rng.standard_normal(d),
                                   s_u=1, s_l=1, n=8, q=8, seed=r, w_y=float(rng.uniform(0, 1)))
    if fam == 1:
        return fam, make_ridge(n=6, q=6, d=int(rng.integers(1, 4)), seed=r)
    if fam == 2:
        return fam, make_data_weighting(n=8, q=8, dim=3, seed=r)
    return fam, make_scalar_ridge()


def test_criterion_04_lemma_invariants(capsys):
    start = time.perf_counter()
    violations = ineligible = 0
    worst = np.zeros(3)
    for r in range(100):
        rng = np.random.default_rng(1000 + r)
        fam, inst = _lemma_instance(r, rng)
        p, s = inst.problem, inst.samples
        x0 = initial_state(p, SolverConfig(T=1, seed=r)).x
        if fam in (1, 3):
            x0 = np.array([1.0 + rng.uniform()])
        c = analytic_constants(p, s, radius=1.0, x_center=x0, y_radius=3.0, n_points=8, seed=r)
        assert c.valid, (r, c.reason)
        eta_z, eta_y = 0.5 / c.L1, 0.5 * c.mu / c.L1**2
        cfg = SolverConfig(T=40, K=int(rng.integers(1, 20)), eta_z=eta_z, eta_x=0.02, eta_y=eta_y, eta_m=0.5,
                           seed=r, x0=x0, oracles=False, record_every=40)
        mon = LemmaMonitor(p, s, eta_z, seed=r)
        aid_run(p, s, cfg, monitor=mon)
        rep = mon.report()
        ineligible += not rep.eligible
        violations += rep.violations
        worst = np.maximum(worst, [rep.worst["z_over_Dz"], rep.worst["m_sq_over_cap"], rep.worst["y_ratio_over_cap"]])
    elapsed = time.perf_counter() - start
    ok = violations == 0 and ineligible == 0 and elapsed < 60
    report(capsys, 4, ok, f"100 runs, {violations} violations, {ineligible} ineligible, worst ratios "
                          f"z {worst[0]:.3f} m {worst[1]:.3f} y {worst[2]:.5f}, {elapsed:.1f} s")


# -- 5 and 6 ---------------------------------------------------------------------------

N_GRID = (100, 200, 400)


@pytest.fixture(scope="module")
def toy_stability():
    start = time.perf_counter()
    sched = Schedule.from_grid(10, 1000)
    cfg = SolverConfig(T=2000, K=10, eta_z=0.01, oracles=False)

    def constants(inst, n):
        return analytic_constants(inst.problem, inst.samples, 1.0)

    rep = stability_sweep(make_toy_transfer, N_GRID, {"diminishing": (sched, sched, sched)}, [2000], pairs=20,
                          cfg=cfg, q=2000, probes=100, constants=constants)
    return rep, time.perf_counter() - start


def test_criterion_05_stability_scaling(capsys, toy_stability):
    rep, elapsed = toy_stability
    means = [rep.cell(n, 2000, "diminishing").stat("divergence") for n in N_GRID]
    valid = all(len(rep.cell(n, 2000, "diminishing").valid_pairs()) == 20 for n in N_GRID)
    ratios = [means[1] / means[0], means[2] / means[1]]
    ok = (valid and means[0] > means[1] > means[2] and all(0.3 <= r <= 0.9 for r in ratios) and elapsed < 600)
    report(capsys, 5, ok, "mean divergence " + ", ".join(f"n={n}: {m:.4g}" for n, m in zip(N_GRID, means))
           + f"; ratios {ratios[0]:.3f}, {ratios[1]:.3f}; {elapsed:.0f} s")


def test_criterion_06_bound_dominance(capsys, toy_stability):
    rep, _ = toy_stability
    parts, ok = [], True
    for n in N_GRID:
        cell = rep.cell(n, 2000, "diminishing")
        emp = cell.stat("divergence")
        ok &= bool(np.isfinite(cell.log_eps_stab)) and emp <= cell.eps_stab
        log10_bound = cell.log_eps_stab / math.log(10)
        parts.append(f"n={n}: {emp:.3g} <= 10^{log10_bound:.0f}")
    report(capsys, 6, ok, "; ".join(parts))


# -- 7 ---------------------------------------------------------------------------------


def _hit(problem, samples, sched, T_max, seed, frac):
    cfg = SolverConfig(T=T_max, K=10, eta_z=0.01, eta_x=sched, eta_y=sched, eta_m=sched, seed=seed,
                       record_every=20)
    return aid_run(problem, samples, cfg, stop=lambda tr: tr.phi[-1] <= frac * tr.phi[0])


def test_criterion_07_diminishing_smaller_gap(capsys):
    start = time.perf_counter()
    frac = 0.2
    wins, missed, diffs = 0, 0, []
    for seed in range(20):
        inst = make_toy_transfer(n=500, seed=seed)
        p, s = inst.problem, inst.samples
        const = _hit(p, s, 0.01, 20000, seed, frac)
        dimin = _hit(p, s, Schedule.from_grid(10, 1000), 200000, seed, frac)
        reached = const.phi[-1] <= frac * const.phi[0] and dimin.phi[-1] <= frac * dimin.phi[0]
        missed += not reached
        g_c, g_d = inst.gap_metric(const.x[-1]), inst.gap_metric(dimin.x[-1])
        diffs.append(g_c - g_d)
        wins += reached and g_d < g_c
    elapsed = time.perf_counter() - start
    ok = wins >= 14 and elapsed < 900
    report(capsys, 7, ok, f"diminishing gap smaller in {wins}/20 seeds ({missed} missed eps), "
                          f"median gap difference {np.median(diffs):.3f}, {elapsed:.0f} s")


# -- 8 ---------------------------------------------------------------------------------


def test_criterion_08_convergence_rate(capsys):
    start = time.perf_counter()
    Q, _ = np.linalg.qr(np.random.default_rng(3).standard_normal((3, 3)))
    kw = dict(h=(0.6, 0.8, 1.0), B=0.8 * Q, c=(1.0, -1.0, 0.5), w_y=1.0, s_u=1.0, s_l=1.0, n=50, q=50)
    curves, admissible = {}, True
    for T in (1000, 4000, 16000):
        K = math.ceil(math.log(T) / -math.log(0.7))
        sx, sy = Schedule.horizon_scaled(0.7, T), Schedule.horizon_scaled(10, T)
        curves[T] = []
        for seed in range(5):
            inst = make_quadratic(seed=seed, **kw)
            c = analytic_constants(inst.problem, inst.samples, 4.0, y_radius=6.0)
            admissible &= c.valid and all(cd.satisfied for cd in theorem2_conditions(sx, sy, sy, c, 0.5, T)
                                          if cd.gating)
            cfg = SolverConfig(T=T, K=K, eta_z=0.5, eta_x=sx, eta_y=sy, eta_m=sy, seed=seed,
                               x0=np.array([2.0, 2.0, 2.0]))
            curves[T].append(aid_run(inst.problem, inst.samples, cfg).array("grad_norm_sq"))
    fit = convergence_rate_summary(curves)
    elapsed = time.perf_counter() - start
    ok = admissible and -0.8 <= fit.slope <= -0.3 and elapsed < 1200
    report(capsys, 8, ok, f"slope {fit.slope:.3f} (95% CI {fit.ci_low:.3f}, {fit.ci_high:.3f}), "
                          f"conditions {'pass' if admissible else 'FAIL'}, {elapsed:.0f} s")


# -- 9 ---------------------------------------------------------------------------------


def test_criterion_09_itd_aid_agreement(capsys):
    rng = np.random.default_rng(9)
    inst = make_quadratic(h=(0.5, 0.8, 1.0), B=rng.standard_normal((3, 3)), c=(1.0, -1.0, 0.5), w_y=1.0,
                          s_u=1.0, s_l=1.0, n=20, q=20, seed=1)
    p, s = inst.problem, inst.samples
    worst_aid = worst_itd = 0.0
    for _ in range(10):
        x = rng.standard_normal(3)
        exact = exact_hypergradient(p, s, x)
        eta = default_inner_step(p, s, x)
        worst_aid = max(worst_aid, relative_error(aid_full_batch(p, s, x, 64, eta), exact))
        worst_itd = max(worst_itd, relative_error(itd_full_batch(p, s, x, 64, eta), exact))
    ok = worst_aid <= 1e-3 and worst_itd <= 1e-3
    report(capsys, 9, ok, f"max rel err AID {worst_aid:.1e}, ITD {worst_itd:.1e}")


# -- 10 --------------------------------------------------------------------------------


def test_criterion_10_data_weighting(capsys):
    gaps = []
    for seed in range(10):
        inst = make_data_weighting(seed=seed)
        cfg = SolverConfig(T=5000, K=10, eta_z=0.01, eta_x=1.0, eta_y=0.05, eta_m=0.5, seed=seed,
                           record_every=5000, oracles=False)
        tr = aid_run(inst.problem, inst.samples, cfg)
        w = expit(tr.x[-1])
        bad = inst.truth["corrupted"]
        gaps.append(w[~bad].mean() - w[bad].mean())
    test = stats.ttest_1samp(gaps, 0.0, alternative="greater")
    ok = np.mean(gaps) > 0 and test.pvalue < 0.05
    report(capsys, 10, ok, f"mean clean-minus-corrupted weight {np.mean(gaps):.3f}, p = {test.pvalue:.1e}")
