import numpy as np
import pytest

from aidstab.problems import (
    make_data_weighting, make_mixture, make_quadratic, make_ridge, make_scalar_ridge, make_toy_transfer,
)


def central_diff(fun, v, eps=1e-6):
    v = np.asarray(v, float)
    out = []
    for i in range(v.shape[0]):
        e = np.zeros_like(v)
        e[i] = eps
        out.append((np.asarray(fun(v + e)) - np.asarray(fun(v - e))) / (2 * eps))
    return np.array(out).T


def rel_err(a, b):
    a, b = np.atleast_1d(np.asarray(a, float)), np.atleast_1d(np.asarray(b, float))
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12))


def small_instances():
    """Every bundled problem family at desk-test size."""
    rng = np.random.default_rng(5)
    return {
        "scalar_ridge": make_scalar_ridge(),
        "ridge": make_ridge(n=6, q=7, d=3, seed=1),
        "toy_transfer": make_toy_transfer(n=8, q=12, seed=2, dim=4),
        "mixture": make_mixture(),
        "data_weighting": make_data_weighting(n=6, q=5, seed=3, dim=3),
        "quadratic": make_quadratic(h=(0.5, 1.5), B=rng.standard_normal((2, 3)), c=(1.0, -2.0), s_u=1.0,
                                    s_l=1.0, n=4, q=5, seed=4, w_y=0.5),
    }


@pytest.fixture(scope="session")
def instances():
    return small_instances()


def probe_point(problem, rng, name):
    """Random (x, y) where every bundled lower problem is strongly convex."""
    x = rng.standard_normal(problem.d_x)
    if name in ("ridge", "scalar_ridge"):
        x = np.abs(x) + 0.5
    if name == "mixture":
        x = rng.uniform(0.1, 0.9, 1)
    return x, rng.standard_normal(problem.d_y)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[k])
