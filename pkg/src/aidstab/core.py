"""Shared numeric plumbing: errors, sample sets, step-size schedules, RNG streams."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class ConfigError(ValueError):
    """Invalid solver or experiment configuration."""


class DimensionError(ValueError):
    """A vector does not have the dimension a problem expects."""


class DivergenceError(FloatingPointError):
    """An iterate became non-finite during a run."""

    def __init__(self, quantity: str, t: int):
        super().__init__(f"non-finite {quantity} at outer iteration t={t}")
        self.quantity = quantity
        self.t = t
        self.trace = None


def as_param(values, dim: int | None = None, name: str = "vector") -> np.ndarray:
    """Return ``values`` as a flat float64 array, checking its dimension."""
    arr = np.asarray(values, dtype=np.float64).reshape(-1)
    if dim is not None and arr.shape[0] != dim:
        raise DimensionError(f"{name} has dimension {arr.shape[0]}, expected {dim}")
    return arr


# ---------------------------------------------------------------------------
# Samples
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SampleSet:
    """Upper (validation) and lower (training) samples.

    Each side is a tuple of arrays sharing a leading axis; sample ``i`` is
    the tuple of ``arr[i]``.  Problems receive *batches*: the tuple of
    ``arr[idx]`` for an index array ``idx``, and average over it.
    """

    upper: tuple
    lower: tuple

    def __post_init__(self):
        object.__setattr__(self, "upper", tuple(np.asarray(a) for a in self.upper))
        object.__setattr__(self, "lower", tuple(np.asarray(a) for a in self.lower))
        for side, arrays in (("upper", self.upper), ("lower", self.lower)):
            if not arrays:
                raise ValueError(f"{side} samples are empty")
            sizes = {a.shape[0] for a in arrays}
            if len(sizes) != 1:
                raise ValueError(f"{side} arrays disagree on sample count: {sizes}")
        if self.n < 1 or self.q < 1:
            raise ValueError("need n >= 1 and q >= 1")

    @property
    def n(self) -> int:
        return self.upper[0].shape[0]

    @property
    def q(self) -> int:
        return self.lower[0].shape[0]

    def upper_batch(self, idx) -> tuple:
        idx = np.atleast_1d(idx)
        return tuple(a[idx] for a in self.upper)

    def lower_batch(self, idx) -> tuple:
        idx = np.atleast_1d(idx)
        return tuple(a[idx] for a in self.lower)

    def all_upper(self) -> tuple:
        return self.upper

    def all_lower(self) -> tuple:
        return self.lower

    def replace_upper(self, index: int, sample: tuple) -> "SampleSet":
        """Copy with upper sample ``index`` replaced by ``sample``."""
        if not 0 <= index < self.n:
            raise IndexError(f"swap index {index} outside [0, {self.n})")
        new = []
        for arr, val in zip(self.upper, sample):
            arr = arr.copy()
            arr[index] = val
            new.append(arr)
        return SampleSet(tuple(new), self.lower)


# ---------------------------------------------------------------------------
# Schedules
# ---------------------------------------------------------------------------

SCHEDULE_KINDS = ("constant", "diminishing", "horizon")


@dataclass(frozen=True)
class Schedule:
    """Step-size schedule evaluated at outer iteration ``t >= 1``.

    * ``constant``: ``value``
    * ``diminishing``: ``a / (t + c)``
    * ``horizon``: ``b / sqrt(T)`` for every ``t``
    """

    kind: str
    a: float = 0.0
    c: float = 0.0
    horizon: int = 0

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ConfigError(f"unknown schedule kind {self.kind!r}")
        if self.kind == "horizon" and self.horizon < 1:
            raise ConfigError("horizon-scaled schedule needs horizon T >= 1")

    @classmethod
    def constant(cls, value: float) -> "Schedule":
        return cls("constant", a=float(value))

    @classmethod
    def diminishing(cls, a: float, c: float) -> "Schedule":
        return cls("diminishing", a=float(a), c=float(c))

    @classmethod
    def horizon_scaled(cls, b: float, horizon: int) -> "Schedule":
        return cls("horizon", a=float(b), horizon=int(horizon))

    @classmethod
    def from_grid(cls, initial_rate: float, constant: float) -> "Schedule":
        """``initial_rate / (iteration + constant)`` with iteration = t - 1.

        The first outer step therefore uses ``initial_rate / constant``.
        """
        return cls.diminishing(initial_rate, constant - 1.0)

    def __call__(self, t: int) -> float:
        return schedule_eval(self, t)

    def spec(self) -> str:
        """Compact text form, inverse of :func:`parse_schedule`."""
        if self.kind == "constant":
            return f"constant:{self.a!r}"
        if self.kind == "diminishing":
            return f"diminishing:{self.a!r}:{self.c!r}"
        return f"horizon:{self.a!r}:{self.horizon}"


def schedule_eval(s: Schedule, t: int) -> float:
    if t < 1:
        raise ConfigError(f"schedules are defined for t >= 1, got t={t}")
    if s.kind == "constant":
        val = s.a
    elif s.kind == "diminishing":
        val = s.a / (t + s.c)
    else:
        val = s.a / math.sqrt(s.horizon)
    if not (val > 0.0 and math.isfinite(val)):
        raise ConfigError(f"schedule {s.spec()} gives non-positive step {val} at t={t}")
    return val


def parse_schedule(text: str, horizon: int | None = None) -> Schedule:
    """Parse ``constant:0.01``, ``diminishing:a:c``, ``grid:rate:constant``,
    ``horizon:b:T`` or ``horizon:b`` (``b / sqrt(horizon)`` for the given run
    horizon)."""
    parts = str(text).strip().split(":")
    kind = parts[0]
    try:
        if kind == "constant" and len(parts) == 2:
            return Schedule.constant(float(parts[1]))
        if kind == "diminishing" and len(parts) == 3:
            return Schedule.diminishing(float(parts[1]), float(parts[2]))
        if kind == "grid" and len(parts) == 3:
            return Schedule.from_grid(float(parts[1]), float(parts[2]))
        if kind == "horizon" and len(parts) == 3:
            return Schedule.horizon_scaled(float(parts[1]), int(parts[2]))
        if kind == "horizon" and len(parts) == 2:
            if horizon is None:
                raise ConfigError(f"schedule {text!r} needs the run horizon")
            return Schedule.horizon_scaled(float(parts[1]), int(horizon))
    except ValueError as exc:
        raise ConfigError(f"bad schedule {text!r}: {exc}") from None
    raise ConfigError(f"bad schedule {text!r}")


def step_size(s, t: int) -> float:
    """Evaluate a :class:`Schedule`, or pass a plain float through."""
    if isinstance(s, Schedule):
        return schedule_eval(s, t)
    return float(s)


# ---------------------------------------------------------------------------
# Random streams
# ---------------------------------------------------------------------------

# sub-seed offsets
STREAM_DATA = 0
STREAM_Z = 1
STREAM_Y = 2
STREAM_X = 3
STREAM_ITD = 4
STREAM_INIT = 5
STREAM_SWAP = 6
STREAM_PROBE = 7
STREAM_SWAP_POS = 8


@dataclass
class RngStream:
    """Single-owner index stream derived from ``(seed, offset)``."""

    seed: int
    offset: int = 0
    counter: int = 0
    _gen: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        self._gen = np.random.default_rng([int(self.seed) & (2**64 - 1), int(self.offset)])

    def substream(self, offset: int) -> "RngStream":
        return RngStream(self.seed, offset)

    @property
    def generator(self) -> np.random.Generator:
        """The underlying generator, for non-index draws (data generation)."""
        return self._gen

    def indices(self, pool_size: int, count: int) -> np.ndarray:
        out = self._gen.integers(0, pool_size, size=count)
        self.counter += count
        return out


def sample_indices(r: RngStream, pool_size: int, count: int) -> list[int]:
    """Uniform i.i.d. draws with replacement from ``range(pool_size)``."""
    if pool_size < 1 or count < 1:
        raise ValueError("pool_size and count must be >= 1")
    return r.indices(pool_size, count).tolist()


@dataclass
class Streams:
    """The per-purpose sub-streams one solver run consumes."""

    z: RngStream
    y: RngStream
    x: RngStream
    itd: RngStream

    @classmethod
    def from_seed(cls, seed: int) -> "Streams":
        return cls(
            RngStream(seed, STREAM_Z),
            RngStream(seed, STREAM_Y),
            RngStream(seed, STREAM_X),
            RngStream(seed, STREAM_ITD),
        )


def draw_batches(r: RngStream, pool_size: int, count: int, batch: int,
                 full_batch: bool = False) -> Sequence[np.ndarray]:
    """``count`` index batches of size ``batch``; the whole pool when ``full_batch``."""
    if full_batch:
        every = np.arange(pool_size)
        return [every] * count
    return r.indices(pool_size, count * batch).reshape(count, batch)
