"""Experiment configuration files.

Grammar (one assignment per line)::

    # comment
    section.key = value

Blank lines and lines starting with ``#`` are ignored.  Keys are dotted
identifiers from :data:`KEYS`, or ``problem.<parameter>`` for generator
parameters, or ``schedules.<label>`` for named step-size schedules.  A
value is parsed as JSON when possible (numbers, ``true``/``false``,
``null``, quoted strings, lists, objects) and is otherwise kept as a bare
string, so ``solver.eta_x = constant:0.01`` and
``solver.eta_x = "constant:0.01"`` are equivalent.  Every key may appear
at most once.  :meth:`ExperimentConfig.dumps` writes every value as JSON,
so parsing the dump yields an equal configuration.
"""

from __future__ import annotations

import inspect
import json
import os
import re
from dataclasses import dataclass, field

from .core import ConfigError, Schedule, parse_schedule
from .problems.io import GENERATORS

OUT_DIR_ENV = "AIDSTAB_OUT_DIR"

_KEY_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*(\.[A-Za-z_][A-Za-z0-9_]*)+$")


def _int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _nonneg_int(v):
    return _int(v) and v >= 0


def _pos_int(v):
    return _int(v) and v >= 1


def _int_list(v):
    return isinstance(v, list) and len(v) > 0 and all(_int(e) for e in v)


def _pos_int_list(v):
    return _int_list(v) and all(e >= 1 for e in v)


def _num_list(v):
    return isinstance(v, list) and all(_num(e) for e in v)


def _str(v):
    return isinstance(v, str) and v != ""


def _bool(v):
    return isinstance(v, bool)


def _schedule(v):
    if _num(v):
        return True
    if not isinstance(v, str):
        return False
    try:
        parse_schedule(v, horizon=1)
    except ConfigError:
        return False
    return True


def _schedule_triple(v):
    if _schedule(v):
        return True
    return isinstance(v, list) and len(v) == 3 and all(_schedule(e) for e in v)


def _vector_or_none(v):
    return v is None or _num_list(v)


def _swap(v):
    return v == "random" or _nonneg_int(v)


def _points(v):
    return isinstance(v, list) and len(v) > 0 and all(_num_list(p) if isinstance(p, list) else _num(p) for p in v)


# key -> (validator, description of the expected value, default)
KEYS = {
    "problem.name": (_str, f"one of {sorted(GENERATORS)}", None),
    "solver.name": (lambda v: v in ("aid", "itd"), "aid or itd", "aid"),
    "solver.T": (_nonneg_int, "integer >= 0", None),
    "solver.K": (_nonneg_int, "integer >= 0", 10),
    "solver.eta_z": (lambda v: _num(v) and v > 0, "positive number", 0.01),
    "solver.eta_x": (_schedule, "number or schedule string", 0.01),
    "solver.eta_y": (_schedule, "number or schedule string", 0.01),
    "solver.eta_m": (_schedule, "number or schedule string", 1.0),
    "solver.batch": (_pos_int, "integer >= 1", 1),
    "solver.full_batch": (_bool, "true or false", False),
    "solver.record_every": (_pos_int, "integer >= 1", 1),
    "solver.x0": (_vector_or_none, "list of numbers", None),
    "solver.y0": (_vector_or_none, "list of numbers", None),
    "solver.z0": (_vector_or_none, "list of numbers", None),
    "run.seeds": (_int_list, "non-empty list of integers", [0]),
    "sweep.n": (_pos_int_list, "non-empty list of integers >= 1", None),
    "sweep.T": (_pos_int_list, "non-empty list of integers >= 1", None),
    "stability.pairs": (_pos_int, "integer >= 1", 20),
    "stability.probes": (_pos_int, "integer >= 1", 100),
    "stability.swap": (_swap, "integer index or \"random\"", 0),
    "stability.force_identical": (_bool, "true or false", False),
    "stability.bound": (_bool, "true or false", True),
    "constants.radius": (lambda v: _num(v) and v > 0, "positive number", 1.0),
    "constants.y_radius": (lambda v: v is None or (_num(v) and v > 0), "positive number", None),
    "constants.points": (_pos_int, "integer >= 1", 20),
    "constants.L0": (_num, "number", None),
    "constants.L1": (_num, "number", None),
    "constants.L2": (_num, "number", None),
    "constants.mu": (_num, "number", None),
    "constants.D0": (_num, "number", 0.0),
    "constants.D1": (_num, "number", 0.0),
    "grad_check.points": (_pos_int, "integer >= 1", 5),
    "grad_check.x": (_points, "list of points", None),
    "grad_check.scale": (lambda v: _num(v) and v >= 0, "number >= 0", 1.0),
    "grad_check.K": (lambda v: isinstance(v, list) and len(v) > 0 and all(_nonneg_int(e) for e in v),
                     "non-empty list of integers >= 0", [1, 2, 4, 8, 16, 32, 64]),
    "grad_check.eta_z": (lambda v: v is None or (_num(v) and v > 0), "positive number", None),
    "grad_check.eta_y": (lambda v: v is None or (_num(v) and v > 0), "positive number", None),
    "grad_check.fd_rtol": (lambda v: _num(v) and v > 0, "positive number", 1e-5),
    "output.dir": (_str, "directory path", "out"),
}

WILDCARD_SECTIONS = ("problem", "schedules")


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


@dataclass
class ExperimentConfig:
    """Validated key/value configuration (see the module docstring for the grammar)."""

    values: dict = field(default_factory=dict)
    source: str = "<config>"

    def __post_init__(self):
        for key, val in self.values.items():
            _validate(key, val, self.values, self.source)
        name = self.values.get("problem.name")
        if name is not None:
            _validate_problem_params(self.values, self.source)

    def __eq__(self, other):
        return isinstance(other, ExperimentConfig) and self.values == other.values

    def __contains__(self, key):
        return key in self.values

    def get(self, key: str, default=None):
        if key in self.values:
            return self.values[key]
        if key in KEYS and KEYS[key][2] is not None:
            return KEYS[key][2]
        return default

    def require(self, key: str):
        if key not in self.values:
            raise ConfigError(f"{self.source}: missing required key '{key}'")
        return self.values[key]

    def section(self, prefix: str) -> dict:
        """``{rest: value}`` for every key ``prefix.rest``, in file order."""
        p = prefix + "."
        return {k[len(p):]: v for k, v in self.values.items() if k.startswith(p)}

    def dumps(self) -> str:
        return "".join(f"{k} = {json.dumps(v)}\n" for k, v in self.values.items())

    def with_values(self, **updates) -> "ExperimentConfig":
        vals = dict(self.values)
        vals.update({k.replace("__", "."): v for k, v in updates.items()})
        return ExperimentConfig(vals, self.source)


def _validate(key: str, val, values: dict, source: str, line: int | None = None) -> None:
    where = f"{source}:{line}" if line is not None else source
    if not _KEY_RE.match(key):
        raise ConfigError(f"{where}: malformed key {key!r}")
    section = key.split(".", 1)[0]
    if key in KEYS:
        check, expected, _ = KEYS[key]
        if key == "problem.name" and val not in GENERATORS:
            raise ConfigError(f"{where}: key 'problem.name' must be {expected}, got {val!r}")
        if not check(val):
            raise ConfigError(f"{where}: key '{key}' must be {expected}, got {val!r}")
        return
    if section == "schedules":
        if key.count(".") != 1:
            raise ConfigError(f"{where}: malformed schedule label in key {key!r}")
        if not _schedule_triple(val):
            raise ConfigError(f"{where}: key '{key}' must be a schedule or a list of three "
                              f"schedules (eta_x, eta_y, eta_m), got {val!r}")
        return
    if section == "problem":
        return
    raise ConfigError(f"{where}: unknown key '{key}'")


def _validate_problem_params(values: dict, source: str) -> None:
    gen = GENERATORS[values["problem.name"]]
    allowed = set(inspect.signature(gen).parameters)
    for key in values:
        if key.startswith("problem.") and key != "problem.name":
            name = key.split(".", 1)[1]
            if name not in allowed:
                raise ConfigError(f"{source}: unknown key '{key}' (generator "
                                  f"{values['problem.name']!r} accepts {sorted(allowed)})")


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    """Parse configuration text; errors name the source line and key."""
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, _, rhs = line.partition("=")
        key, rhs = key.strip(), rhs.strip()
        if rhs == "":
            raise ConfigError(f"{source}:{lineno}: key '{key}' has no value")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key '{key}'")
        val = _parse_value(rhs)
        _validate(key, val, values, source, lineno)
        values[key] = val
    return ExperimentConfig(values, source)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read(), source=str(path))


def schedule_of(value, horizon: int):
    """A float step size or a :class:`Schedule` for the run horizon."""
    if isinstance(value, Schedule):
        return value
    if _num(value):
        return float(value)
    return parse_schedule(value, horizon=horizon)


def schedule_triples(cfg: ExperimentConfig) -> dict:
    """Label -> raw ``(eta_x, eta_y, eta_m)`` values.

    ``schedules.<label>`` entries take precedence; a single schedule is used
    for all three step sizes.  Without them the ``solver.eta_*`` keys form
    one schedule labelled ``default``.
    """
    named = cfg.section("schedules")
    if not named:
        return {"default": (cfg.get("solver.eta_x"), cfg.get("solver.eta_y"), cfg.get("solver.eta_m"))}
    return {label: tuple(v) if isinstance(v, list) else (v, v, v) for label, v in named.items()}


def resolve_out_dir(cfg: ExperimentConfig, flag: str | None) -> str:
    """``--out-dir`` flag, then the environment override, then ``output.dir``."""
    if flag:
        return flag
    env = os.environ.get(OUT_DIR_ENV)
    if env:
        return env
    return cfg.get("output.dir")
