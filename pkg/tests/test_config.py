import pytest
from hypothesis import given
from hypothesis import strategies as st

from aidstab.config import (
    OUT_DIR_ENV, ExperimentConfig, parse_config, resolve_out_dir, schedule_of, schedule_triples,
)
from aidstab.core import ConfigError, Schedule

TEXT = """\
# a comment
problem.name = ridge
problem.n = 10
problem.q = 12
solver.T = 100
solver.eta_x = constant:0.01
solver.eta_y = "grid:10:1000"
solver.eta_m = 0.5
schedules.fast = [0.1, 0.2, 1.0]
schedules.slow = horizon:0.5
run.seeds = [1, 2]
output.dir = out/x
"""


def test_parse_values_and_defaults():
    cfg = parse_config(TEXT)
    assert cfg.get("problem.n") == 10
    assert cfg.get("solver.eta_x") == "constant:0.01"
    assert cfg.get("solver.eta_y") == "grid:10:1000"
    assert cfg.get("solver.K") == 10
    assert cfg.get("run.seeds") == [1, 2]
    assert cfg.section("problem") == {"name": "ridge", "n": 10, "q": 12}


def test_round_trip():
    cfg = parse_config(TEXT)
    again = parse_config(cfg.dumps())
    assert again == cfg
    assert again.dumps() == cfg.dumps()


@given(T=st.integers(0, 10**6), K=st.integers(0, 500), eta=st.floats(1e-6, 10.0),
       seeds=st.lists(st.integers(-5, 100), min_size=1, max_size=5))
def test_round_trip_property(T, K, eta, seeds):
    cfg = ExperimentConfig({"problem.name": "scalar_ridge", "solver.T": T, "solver.K": K, "solver.eta_x": eta,
                            "run.seeds": seeds})
    assert parse_config(cfg.dumps()) == cfg


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown key 'solver.bogus'"):
        parse_config("solver.bogus = 1")
    with pytest.raises(ConfigError, match="unknown key 'problem.zeta'"):
        parse_config("problem.name = ridge\nproblem.zeta = 1")


def test_errors_name_line_and_key():
    with pytest.raises(ConfigError, match=r"cfg:3: key 'solver.K' must be integer >= 0"):
        parse_config("problem.name = ridge\n\nsolver.K = -1", source="cfg")
    with pytest.raises(ConfigError, match=r"cfg:2: duplicate key 'solver.T'"):
        parse_config("solver.T = 1\nsolver.T = 2", source="cfg")
    with pytest.raises(ConfigError, match=r"cfg:1: expected 'key = value'"):
        parse_config("solver.T 1", source="cfg")
    with pytest.raises(ConfigError, match="solver.eta_x"):
        parse_config("solver.eta_x = fast")


def test_missing_required_key_named():
    with pytest.raises(ConfigError, match="missing required key 'solver.T'"):
        parse_config("problem.name = ridge").require("solver.T")


def test_schedule_values():
    assert schedule_of(0.5, 10) == 0.5
    assert schedule_of("grid:10:1000", 10) == Schedule.from_grid(10, 1000)
    assert schedule_of("horizon:0.5", 100)(1) == pytest.approx(0.05)
    triples = schedule_triples(parse_config(TEXT))
    assert triples == {"fast": (0.1, 0.2, 1.0), "slow": ("horizon:0.5",) * 3}
    plain = parse_config("solver.eta_x = 0.3")
    assert schedule_triples(plain) == {"default": (0.3, 0.01, 1.0)}


def test_out_dir_precedence(monkeypatch):
    cfg = parse_config(TEXT)
    monkeypatch.delenv(OUT_DIR_ENV, raising=False)
    assert resolve_out_dir(cfg, None) == "out/x"
    monkeypatch.setenv(OUT_DIR_ENV, "/tmp/env")
    assert resolve_out_dir(cfg, None) == "/tmp/env"
    assert resolve_out_dir(cfg, "flag") == "flag"


def test_with_values_revalidates():
    cfg = parse_config(TEXT)
    assert cfg.with_values(solver__T=5).get("solver.T") == 5
    with pytest.raises(ConfigError):
        cfg.with_values(solver__T=-5)
