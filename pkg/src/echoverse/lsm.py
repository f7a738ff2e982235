"""Liquid state machines on refractory spike trains.

Reservoir coordinates are linear exponential-decay filters

    (B_i u)_t = sum_{s in u, s <= t} b_i(s - t) * exp(s - t)

followed by a polynomial readout.  The kernel ``b_i`` is read on the lag
``s - t`` so every filter is time-invariant; at ``t = 0`` this is the plain
``sum_s b_i(s) e^s``.  Spike trains are compared through their smoothed
versions (a triangular bump on every spike) in a fading-weighted L1 metric.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.integrate import trapezoid

from ._rng import stream
from .errors import DimensionError, RefractoryError
from .polynomial import Polynomial
from .signals import DEFAULT_FADING, FadingFunction

__all__ = [
    "SpikeTrain",
    "DecayFilter",
    "LsmSystem",
    "SampledSignal",
    "validate_spike_train",
    "decay_filter_eval",
    "decay_filter_trace",
    "bump_half_width",
    "smooth_spike_train",
    "spike_distance",
    "lsm_states",
    "run_lsm",
    "separation_witness",
    "random_spike_train",
    "random_lsm",
]

DEFAULT_HORIZON = 50.0


def _check_train(times: Sequence[float], delta: float, horizon: float) -> tuple:
    if not delta > 0:
        raise ValueError(f"refractory gap must be positive, got {delta}")
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    times = tuple(float(s) for s in times)
    for s in times:
        if not -horizon <= s <= 0.0:
            raise ValueError(f"spike at {s!r} outside [{-horizon!r}, 0]")
    for a, b in zip(times, times[1:]):
        if b <= a:
            raise ValueError(f"spike times not strictly increasing at ({a!r}, {b!r})")
        if b - a <= delta:
            raise RefractoryError(a, b, delta)
    return times


@dataclass(frozen=True)
class SpikeTrain:
    """Strictly increasing spike times in ``[-horizon, 0]`` with gaps > ``delta``."""

    times: tuple
    delta: float
    horizon: float = DEFAULT_HORIZON

    def __post_init__(self):
        object.__setattr__(self, "times", _check_train(self.times, self.delta, self.horizon))

    def __len__(self) -> int:
        return len(self.times)

    def shifted(self, offset: float, horizon: float | None = None) -> "SpikeTrain":
        return SpikeTrain(tuple(s + offset for s in self.times), self.delta, horizon or self.horizon)

    def to_text(self) -> str:
        lines = [f"# delta={self.delta!r} horizon={self.horizon!r}"]
        lines += [repr(s) for s in self.times]
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8", newline="\n")

    @classmethod
    def load(cls, path) -> "SpikeTrain":
        delta, horizon, times = read_spike_file(path)
        return validate_spike_train(times, delta, horizon)


_HEADER = re.compile(r"#\s*delta=(\S+)\s+horizon=(\S+)")


def read_spike_file(path) -> tuple[float, float, list[float]]:
    """Parse a spike file without validating the refractory condition."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ValueError(f"{path}: empty spike file")
    m = _HEADER.match(lines[0].strip())
    if m is None:
        raise ValueError(f"{path}:1: expected header '# delta=<gap> horizon=<T>'")
    times = []
    for lineno, line in enumerate(lines[1:], start=2):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            times.append(float(line))
        except ValueError:
            raise ValueError(f"{path}:{lineno}: not a spike time: {line!r}") from None
    return float(m.group(1)), float(m.group(2)), times


def validate_spike_train(times: Sequence[float], delta: float, horizon: float = DEFAULT_HORIZON) -> SpikeTrain:
    """Accept a refractory spike train or raise naming the offending pair."""
    return SpikeTrain(tuple(times), delta, horizon)


# -- decay filters -----------------------------------------------------------


@dataclass(frozen=True)
class DecayFilter:
    """Kernel ``b`` of an exponential-decay filter, read on lags ``<= 0``.

    kinds: ``constant`` (``value``), ``cosine``
    (``amplitude * cos(freq * lag + phase)``) and ``table`` (piecewise linear
    through ``(lags, values)``, held constant outside).
    """

    kind: str = "constant"
    value: float = 1.0
    amplitude: float = 1.0
    freq: float = 1.0
    phase: float = 0.0
    lags: tuple = ()
    values: tuple = ()

    def __post_init__(self):
        if self.kind == "table":
            lags = np.asarray(self.lags, dtype=float)
            vals = np.asarray(self.values, dtype=float)
            if lags.shape != vals.shape or lags.size == 0 or np.any(np.diff(lags) <= 0):
                raise ValueError("table kernel needs matching, strictly increasing lags and values")
        elif self.kind not in ("constant", "cosine"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")

    @classmethod
    def constant(cls, value: float = 1.0) -> "DecayFilter":
        return cls("constant", value=value)

    @classmethod
    def cosine(cls, freq: float, phase: float = 0.0, amplitude: float = 1.0) -> "DecayFilter":
        return cls("cosine", amplitude=amplitude, freq=freq, phase=phase)

    @classmethod
    def table(cls, lags: Sequence[float], values: Sequence[float]) -> "DecayFilter":
        return cls("table", lags=tuple(map(float, lags)), values=tuple(map(float, values)))

    @property
    def sup_norm(self) -> float:
        if self.kind == "constant":
            return abs(self.value)
        if self.kind == "cosine":
            return abs(self.amplitude)
        return float(np.max(np.abs(self.values)))

    def kernel(self, lag):
        lag = np.asarray(lag, dtype=float)
        if self.kind == "constant":
            return np.full(lag.shape, float(self.value))
        if self.kind == "cosine":
            return self.amplitude * np.cos(self.freq * lag + self.phase)
        return np.interp(lag, self.lags, self.values)


def decay_filter_eval(u: SpikeTrain, b: DecayFilter, t: float = 0.0) -> float:
    """``sum_{s <= t} b(s - t) exp(s - t)`` over the spikes of ``u``."""
    s = np.asarray(u.times, dtype=float)
    lag = s[s <= t] - t
    if lag.size == 0:
        return 0.0
    return float(np.sum(b.kernel(lag) * np.exp(lag)))


def decay_filter_trace(u: SpikeTrain, b: DecayFilter, grid) -> np.ndarray:
    return np.array([decay_filter_eval(u, b, t) for t in np.asarray(grid, dtype=float)])


# -- smoothing and the spike-train metric --------------------------------------


@dataclass(frozen=True)
class SampledSignal:
    grid: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    dt: float


def bump_half_width(delta: float, mode: str | float = "disjoint") -> float:
    """``min(1, delta/2)`` for ``"disjoint"``, 1 for ``"unit"``, else the number."""
    if mode == "disjoint":
        return min(1.0, delta / 2.0)
    if mode == "unit":
        return 1.0
    w = float(mode)
    if not 0 < w <= 1:
        raise ValueError(f"bump half-width must lie in (0, 1], got {w}")
    return w


def _grid(horizon: float, dt: float) -> np.ndarray:
    steps = int(round(horizon / dt))
    if not math.isclose(steps * dt, horizon, rel_tol=1e-9):
        raise ValueError(f"step {dt} does not divide the horizon {horizon}")
    return np.linspace(-horizon, 0.0, steps + 1)


def smooth_spike_train(
    u: SpikeTrain, dt: float | None = None, width: str | float = "disjoint", half_width: float | None = None
) -> SampledSignal:
    """Sum of unit triangular bumps centred on the spikes, sampled every ``dt``."""
    if dt is None:
        dt = u.delta / 10.0
    if dt > u.delta / 4.0:
        raise ValueError(f"step {dt} too coarse for refractory gap {u.delta} (need dt <= delta/4)")
    w = half_width if half_width is not None else bump_half_width(u.delta, width)
    grid = _grid(u.horizon, dt)
    values = np.zeros_like(grid)
    for s in u.times:
        values += np.maximum(0.0, 1.0 - np.abs(grid - s) / w)
    return SampledSignal(grid, values, dt)


def spike_distance(
    u: SpikeTrain,
    v: SpikeTrain,
    omega: FadingFunction = DEFAULT_FADING,
    dt: float | None = None,
    width: str | float = "disjoint",
) -> float:
    """Trapezoidal ``int_{-T_h}^0 |f_u - f_v| omega(t) dt`` of the smoothed trains."""
    if u.horizon != v.horizon:
        raise DimensionError(f"horizons differ: {u.horizon} vs {v.horizon}")
    delta = min(u.delta, v.delta)
    if dt is None:
        dt = delta / 10.0
    w = bump_half_width(delta, width)
    fu = smooth_spike_train(u, dt, half_width=w)
    fv = smooth_spike_train(v, dt, half_width=w)
    return float(trapezoid(np.abs(fu.values - fv.values) * omega(fu.grid), fu.grid))


# -- liquid state machines -----------------------------------------------------


@dataclass(frozen=True)
class LsmSystem:
    filters: tuple
    readout: Polynomial
    dt: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "filters", tuple(self.filters))
        if not self.filters:
            raise ValueError("an LSM needs at least one filter")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.readout.nvars != len(self.filters):
            raise DimensionError(f"readout reads {self.readout.nvars} variables, {len(self.filters)} filters")

    @property
    def N(self) -> int:
        return len(self.filters)


def lsm_states(sys: LsmSystem, u: SpikeTrain, grid) -> np.ndarray:
    """Filter outputs, shape ``(len(grid), N)``."""
    return np.column_stack([decay_filter_trace(u, b, grid) for b in sys.filters])


def run_lsm(sys: LsmSystem, u: SpikeTrain, grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if np.any(grid > 0) or np.any(grid < -u.horizon):
        raise ValueError("sample times must lie within the spike train's horizon")
    return sys.readout(lsm_states(sys, u, grid))


def separation_witness(u: SpikeTrain, v: SpikeTrain, tol: float = 1e-9, tries: int = 64, seed: int = 0) -> DecayFilter:
    """A kernel whose filter tells ``u`` and ``v`` apart at ``t = 0``.

    Tries the constant kernel, then seeded random cosines.
    """
    candidates = [DecayFilter.constant(1.0)]
    rng = stream(seed, "separation-witness")
    for _ in range(tries):
        candidates.append(DecayFilter.cosine(rng.uniform(0.1, 5.0), rng.uniform(0, 2 * np.pi)))
    for b in candidates:
        if abs(decay_filter_eval(u, b) - decay_filter_eval(v, b)) > tol:
            return b
    raise ValueError("no witness found; the trains agree on every tried kernel")


def random_spike_train(
    rng: np.random.Generator, delta: float = 1.0, horizon: float = DEFAULT_HORIZON, rate: float = 0.5
) -> SpikeTrain:
    """Dead-time Poisson train: gaps are ``delta`` plus an exponential wait."""
    times = []
    s = -horizon + rng.exponential(1.0 / rate)
    while s <= 0.0:
        times.append(s)
        s += delta * (1.0 + 1e-9) + rng.exponential(1.0 / rate)
    return SpikeTrain(tuple(times), delta, horizon)


def random_lsm(N: int, seed: int = 0, dt: float = 0.1, readout: Polynomial | None = None) -> LsmSystem:
    """One constant kernel plus ``N - 1`` seeded random cosine kernels."""
    rng = stream(seed, "lsm", N)
    filters = [DecayFilter.constant(1.0)]
    for _ in range(N - 1):
        filters.append(DecayFilter.cosine(rng.uniform(0.1, 3.0), rng.uniform(0, 2 * np.pi)))
    if readout is None:
        readout = Polynomial.linear(np.full(N, 1.0 / N))
    return LsmSystem(tuple(filters), readout, dt)
