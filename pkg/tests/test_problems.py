import numpy as np
import pytest
from conftest import central_diff, probe_point, rel_err, small_instances

from aidstab.analysis import exact_hypergradient, fd_hypergradient
from aidstab.core import DimensionError, SampleSet
from aidstab.problems import (
    GENERATORS, Problem, ProblemConstants, QuadraticProblem, analytic_constants, check_strong_convexity,
    load_instance, make_data_weighting, make_instance, make_mixture, make_quadratic, make_scalar_ridge,
    make_toy_transfer, save_instance,
)
from aidstab.problems.mixture import TEST_TARGET, noise_population

NAMES = list(small_instances())
PROBES = 20


def _one(samples, side, j):
    return samples.upper_batch([j]) if side == "upper" else samples.lower_batch([j])


@pytest.mark.parametrize("name", NAMES)
def test_first_derivatives_match_finite_differences(instances, name):
    inst = instances[name]
    p, s = inst.problem, inst.samples
    rng = np.random.default_rng(100)
    for _ in range(PROBES):
        x, y = probe_point(p, rng, name)
        up = _one(s, "upper", rng.integers(s.n))
        lo = _one(s, "lower", rng.integers(s.q))
        assert rel_err(p.grad_x_f(x, y, up), central_diff(lambda v: p.f(v, y, up), x)) <= 1e-5
        assert rel_err(p.grad_y_f(x, y, up), central_diff(lambda v: p.f(x, v, up), y)) <= 1e-5
        assert rel_err(p.grad_y_g(x, y, lo), central_diff(lambda v: p.g(x, v, lo), y)) <= 1e-5


@pytest.mark.parametrize("name", NAMES)
def test_second_derivative_products_match_finite_differences(instances, name):
    inst = instances[name]
    p, s = inst.problem, inst.samples
    rng = np.random.default_rng(200)
    for _ in range(PROBES):
        x, y = probe_point(p, rng, name)
        lo = _one(s, "lower", rng.integers(s.q))
        v = rng.standard_normal(p.d_y)
        hv = p.hess_yy_g_vp(x, y, lo, v)
        fd_h = central_diff(lambda w: p.grad_y_g(x, w, lo), y) @ v
        assert rel_err(hv, fd_h) <= 1e-4
        cv = p.cross_xy_g_vp(x, y, lo, v)
        fd_c = central_diff(lambda u: p.grad_y_g(u, y, lo) @ v, x)
        assert rel_err(cv, fd_c) <= 1e-4 or np.linalg.norm(cv - fd_c) <= 1e-8


@pytest.mark.parametrize("name", NAMES)
def test_hessian_product_is_symmetric(instances, name):
    inst = instances[name]
    p, s = inst.problem, inst.samples
    rng = np.random.default_rng(300)
    x, y = probe_point(p, rng, name)
    lo = s.all_lower()
    u, v = rng.standard_normal(p.d_y), rng.standard_normal(p.d_y)
    assert u @ p.hess_yy_g_vp(x, y, lo, v) == pytest.approx(v @ p.hess_yy_g_vp(x, y, lo, u), rel=1e-12)


@pytest.mark.parametrize("name", NAMES)
def test_y_star_is_a_root(instances, name):
    inst = instances[name]
    p, s = inst.problem, inst.samples
    rng = np.random.default_rng(400)
    for _ in range(5):
        x, _ = probe_point(p, rng, name)
        ys = p.y_star(x, s.all_lower())
        assert np.linalg.norm(p.grad_y_g(x, ys, s.all_lower())) <= 1e-8


@pytest.mark.parametrize("name", NAMES)
def test_exact_hypergradient_matches_finite_differences(instances, name):
    inst = instances[name]
    p, s = inst.problem, inst.samples
    rng = np.random.default_rng(500)
    for _ in range(5):
        x, _ = probe_point(p, rng, name)
        assert rel_err(exact_hypergradient(p, s, x), fd_hypergradient(p, s, x)) <= 1e-5


@pytest.mark.parametrize("name", NAMES)
def test_rayleigh_quotients_within_constants(instances, name):
    inst = instances[name]
    p, s = inst.problem, inst.samples
    rng = np.random.default_rng(600)
    center, _ = probe_point(p, rng, name)
    radius = 0.05 if name in ("mixture", "ridge", "scalar_ridge") else 0.5
    c = analytic_constants(p, s, radius, x_center=center, n_points=12, max_samples=None)
    assert c.valid, c.reason
    for _ in range(PROBES):
        d = rng.standard_normal(p.d_x)
        x = center + radius * rng.uniform() * d / np.linalg.norm(d)
        y = rng.standard_normal(p.d_y) * 0.5
        lo = _one(s, "lower", rng.integers(s.q))
        v = rng.standard_normal(p.d_y)
        r = v @ p.hess_yy_g_vp(x, y, lo, v) / (v @ v)
        # probe-set sup: allow the slack of a finite sample of the ball
        assert c.mu * 0.8 - 1e-12 <= r <= c.L1 * 1.2 + 1e-12


def test_dimension_mismatch_is_reported(instances):
    p, s = instances["ridge"].problem, instances["ridge"].samples
    with pytest.raises(DimensionError):
        p.f(np.ones(2), np.zeros(p.d_y), s.all_upper())
    with pytest.raises(DimensionError):
        p.grad_y_g(np.ones(1), np.zeros(p.d_y + 1), s.all_lower())
    with pytest.raises(DimensionError):
        p.hess_yy_g_vp(np.ones(1), np.zeros(p.d_y), s.all_lower(), np.zeros(p.d_y + 1))


def test_strong_convexity_check():
    inst = make_toy_transfer(n=5, q=20, seed=0)
    assert check_strong_convexity(inst.problem, inst.samples, np.random.default_rng(0)) > 0


# -- scalar ridge demo -------------------------------------------------------


def test_ridge_demo_values():
    inst = make_scalar_ridge()
    p, s = inst.problem, inst.samples
    x = np.array([1.0])
    assert p.f(x, np.zeros(1), s.all_upper()) == 0.0
    np.testing.assert_allclose(p.grad_y_g(x, np.array([0.5]), s.all_lower()), [0.0])
    np.testing.assert_allclose(p.hess_yy_g_vp(x, np.zeros(1), s.all_lower(), np.array([3.0])), [6.0])
    np.testing.assert_allclose(p.cross_xy_g_vp(x, np.array([0.5]), s.all_lower(), np.array([0.5])), [0.25])
    np.testing.assert_allclose(p.y_star(x, s.all_lower()), [0.5])


def test_identity_lower_hessian():
    q = make_quadratic(h=(1.0, 1.0), n=1, q=1)
    p, s = q.problem, q.samples
    v = np.array([0.3, -2.0])
    np.testing.assert_allclose(p.hess_yy_g_vp(np.zeros(2), np.zeros(2), s.all_lower(), v), v)
    pure = QuadraticProblem(h=(1.0, 1.0))
    zero_lower = SampleSet(upper=(np.zeros((1, 2)),), lower=(np.zeros((1, 2)),))
    np.testing.assert_allclose(pure.grad_y_g(np.zeros(2), np.zeros(2), zero_lower.all_lower()), 0.0)
    # g independent of x: zero cross product
    np.testing.assert_allclose(pure.cross_xy_g_vp(np.ones(2), np.ones(2), zero_lower.all_lower(), v), 0.0)


def test_identity_hessian_constants():
    inst = make_quadratic(h=(1.0, 1.0, 1.0), n=1, q=1)
    c = analytic_constants(inst.problem, inst.samples, 1.0)
    assert c.mu == pytest.approx(1.0) and c.L2 == pytest.approx(0.0, abs=1e-9)
    assert max(c.parts["L1_gyy"], c.parts["L1_gxy"]) == pytest.approx(1.0)


def test_ridge_constants_on_interval():
    inst = make_scalar_ridge()
    c = analytic_constants(inst.problem, inst.samples, 0.75, x_center=np.array([1.25]), y_radius=0.0)
    assert c.mu == pytest.approx(1.5)
    assert c.parts["L1_gyy"] == pytest.approx(3.0)


def test_single_lower_sample_has_no_variance():
    inst = make_scalar_ridge()
    c = analytic_constants(inst.problem, inst.samples, 0.5, x_center=np.array([1.0]))
    assert c.D0 == 0.0 and c.D1 == 0.0


def test_constants_invalid_when_not_strongly_convex():
    c = ProblemConstants(1.0, 1.0, 0.0, 0.0)
    assert not c.valid and "mu" in c.reason
    assert not ProblemConstants(1.0, 1.0, 0.0, 2.0).valid
    assert not ProblemConstants(np.inf, 1.0, 0.0, 1.0).valid
    c = ProblemConstants(2.0, 1.0, 0.0, 0.5)
    assert c.D_z() == 4.0 and c.D_z(1.0) == 5.0


# -- toy transfer --------------------------------------------------------------


def test_toy_shapes_and_orthogonal_truth():
    inst = make_toy_transfer(n=30, seed=3)
    A1, b1 = inst.samples.lower
    A2, b2 = inst.samples.upper
    assert A1.shape == (2000, 10) and A2.shape == (30, 10)
    X = inst.truth["x_true"].reshape(10, 10)
    np.testing.assert_allclose(X.T @ X, np.eye(10), atol=1e-12)


def test_toy_zero_noise_truth_has_zero_residual():
    inst = make_toy_transfer(n=20, q=50, seed=1, noise=False)
    p, s = inst.problem, inst.samples
    X, y = inst.truth["x_true"], inst.truth["y_true"]
    assert p.f(X, y, s.all_upper()) == pytest.approx(0.0, abs=1e-24)
    assert p.g(X, y, s.all_lower()) - p.rho2 * (y @ y) == pytest.approx(0.0, abs=1e-24)


def test_toy_lower_data_shared_across_n():
    a = make_toy_transfer(n=100, seed=4)
    b = make_toy_transfer(n=400, seed=4)
    np.testing.assert_array_equal(a.samples.lower[0], b.samples.lower[0])
    np.testing.assert_array_equal(a.truth["x_true"], b.truth["x_true"])


def test_toy_closed_form_y_star():
    inst = make_toy_transfer(n=10, seed=5)
    p, s = inst.problem, inst.samples
    x = np.random.default_rng(0).standard_normal(100)
    assert np.linalg.norm(p.grad_y_g(x, p.y_star(x, s.all_lower()), s.all_lower())) <= 1e-8


def test_toy_gap_metric_is_frobenius_distance():
    inst = make_toy_transfer(n=10, seed=6)
    assert inst.gap_metric(inst.truth["x_true"]) == 0.0
    assert inst.gap_metric(np.zeros(100)) == pytest.approx(np.sqrt(10))


# -- mixture counterexample --------------------------------------------------


def test_mixture_population_and_corrupted_optima():
    pop = make_mixture()
    p = pop.problem
    ys = p.y_star(np.array([0.0]), pop.samples.all_lower())
    np.testing.assert_allclose(ys, [2.5, 1.5])
    assert p.f(np.array([0.0]), ys, pop.samples.all_upper()) == pytest.approx(0.5)
    bad = make_mixture(corrupted=True)
    yb = bad.problem.y_star(np.array([1.0]), bad.samples.all_lower())
    np.testing.assert_allclose(yb, [2.0, 1.0])
    assert bad.problem.f(np.array([1.0]), yb, bad.samples.all_upper()) == 0.0
    np.testing.assert_array_equal(pop.samples.upper[0][0], TEST_TARGET)
    assert noise_population().shape == (16, 4)


# -- data weighting --------------------------------------------------------------


def test_data_weighting_equal_weights_reduce_to_ridge():
    inst = make_data_weighting(n=20, q=15, corrupt_frac=0.0, seed=2)
    p, s = inst.problem, inst.samples
    x = np.full(p.d_x, 0.3)
    w = 1.0 / (1.0 + np.exp(-0.3))
    A, b, _ = s.all_lower()
    lam = p.rho2 / w
    ridge = np.linalg.solve(A.T @ A / A.shape[0] + lam * np.eye(p.d_y), A.T @ b / A.shape[0])
    np.testing.assert_allclose(p.y_star(x, s.all_lower()), ridge, rtol=1e-10)
    A2, b2 = s.all_upper()
    assert p.upper_value(x, s) == pytest.approx(np.mean((A2 @ ridge - b2) ** 2), rel=1e-12)


def test_data_weighting_single_sample_signs():
    inst = make_data_weighting(n=5, q=1, corrupt_frac=0.0, seed=9, dim=2)
    p, s = inst.problem, inst.samples
    for x0 in (-1.0, 0.0, 2.0):
        x = np.array([x0])
        exact = exact_hypergradient(p, s, x)
        fd = fd_hypergradient(p, s, x)
        assert np.sign(exact[0]) == np.sign(fd[0])
        assert rel_err(exact, fd) <= 1e-5


def test_data_weighting_corruption_fraction():
    inst = make_data_weighting(n=10, q=40, corrupt_frac=0.5, seed=1)
    assert inst.truth["corrupted"].sum() == 20
    with pytest.raises(ValueError):
        make_data_weighting(corrupt_frac=1.5)


# -- registry and serialisation ------------------------------------------------


@pytest.mark.parametrize("name", NAMES)
def test_instance_file_round_trip(instances, name, tmp_path):
    inst = instances[name]
    path = tmp_path / f"{name}.json"
    save_instance(inst, path)
    back = load_instance(path)
    assert back.problem.to_dict() == inst.problem.to_dict()
    for a, b in zip(inst.samples.upper + inst.samples.lower, back.samples.upper + back.samples.lower):
        np.testing.assert_array_equal(a, b)
        assert a.dtype == b.dtype
    for k, v in inst.truth.items():
        np.testing.assert_array_equal(np.asarray(v), np.asarray(back.truth[k]))
    x = probe_point(inst.problem, np.random.default_rng(1), name)[0]
    assert back.problem.upper_value(x, back.samples) == inst.problem.upper_value(x, inst.samples)


def test_generators_are_deterministic():
    for name in ("toy_transfer", "ridge", "data_weighting"):
        kw = {"n": 7, "q": 9, "seed": 3}
        a, b = make_instance(name, **kw), make_instance(name, **kw)
        for u, v in zip(a.samples.upper + a.samples.lower, b.samples.upper + b.samples.lower):
            np.testing.assert_array_equal(u, v)
    assert set(GENERATORS) >= {"toy_transfer", "ridge", "scalar_ridge", "mixture", "data_weighting", "quadratic"}
    with pytest.raises(KeyError):
        make_instance("nope")


def test_base_problem_is_abstract():
    class Bare(Problem):
        d_x, d_y = 1, 1

    with pytest.raises(NotImplementedError):
        Bare().f(np.zeros(1), np.zeros(1), ())
