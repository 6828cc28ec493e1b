"""Instance registry and JSON serialisation for exact replay.

The file holds the problem parameters, every sample array (nested lists,
row-major) and any ground truth::

    {"format": 1,
     "problem": {"name": ..., <constructor parameters>},
     "generator": {"name": ..., <generator parameters>},
     "upper": [array, ...], "lower": [array, ...],
     "upper_dtypes": [...], "lower_dtypes": [...],
     "truth": {key: array, ...}}

Floats are written with ``repr`` precision, so a reload is bit-exact.
"""

from __future__ import annotations

import json

import numpy as np

from ..core import SampleSet
from .base import Instance
from .data_weighting import DataWeightingProblem, make_data_weighting
from .mixture import MixtureProblem, make_mixture
from .quadratic import QuadraticProblem, make_quadratic
from .ridge import RidgeHyperProblem, make_ridge, make_scalar_ridge
from .toy_transfer import ToyTransferProblem, make_toy_transfer

GENERATORS = {
    "toy_transfer": make_toy_transfer,
    "ridge": make_ridge,
    "scalar_ridge": make_scalar_ridge,
    "mixture": make_mixture,
    "data_weighting": make_data_weighting,
    "quadratic": make_quadratic,
}

_PROBLEMS = {
    "toy_transfer": ToyTransferProblem,
    "ridge": RidgeHyperProblem,
    "mixture": MixtureProblem,
    "data_weighting": DataWeightingProblem,
    "quadratic": QuadraticProblem,
}


def make_instance(name: str, **params) -> Instance:
    """Build a bundled instance by generator name."""
    if name not in GENERATORS:
        raise KeyError(f"unknown problem {name!r}; choose from {sorted(GENERATORS)}")
    inst = GENERATORS[name](**params)
    inst.params = dict(inst.params, generator=name)
    return inst


def problem_from_dict(d: dict):
    d = dict(d)
    name = d.pop("name")
    return _PROBLEMS[name](**d)


def instance_to_dict(inst: Instance) -> dict:
    s = inst.samples
    return {
        "format": 1,
        "problem": inst.problem.to_dict(),
        "generator": {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in inst.params.items()},
        "upper": [a.tolist() for a in s.upper],
        "lower": [a.tolist() for a in s.lower],
        "upper_dtypes": [a.dtype.str for a in s.upper],
        "lower_dtypes": [a.dtype.str for a in s.lower],
        "truth": {k: np.asarray(v).tolist() for k, v in inst.truth.items()},
        "truth_dtypes": {k: np.asarray(v).dtype.str for k, v in inst.truth.items()},
    }


def instance_from_dict(d: dict) -> Instance:
    upper = tuple(np.array(a, dtype=t) for a, t in zip(d["upper"], d["upper_dtypes"]))
    lower = tuple(np.array(a, dtype=t) for a, t in zip(d["lower"], d["lower_dtypes"]))
    truth = {k: np.array(v, dtype=d["truth_dtypes"][k]) for k, v in d["truth"].items()}
    params = dict(d.get("generator", {}))
    draw = None
    gen = params.get("generator")
    if gen in GENERATORS:
        # regenerate only to recover the sampling distribution of fresh upper samples
        kwargs = {k: v for k, v in params.items() if k not in ("generator", "kind")}
        try:
            draw = GENERATORS[gen](**kwargs).draw_upper
        except TypeError:
            draw = None
    return Instance(problem_from_dict(d["problem"]), SampleSet(upper, lower), truth, draw, params)


def save_instance(inst: Instance, path) -> None:
    with open(path, "w") as fh:
        json.dump(instance_to_dict(inst), fh)


def load_instance(path) -> Instance:
    with open(path) as fh:
        return instance_from_dict(json.load(fh))
