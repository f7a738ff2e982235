"""Bounded time series, fading-memory metrics and the filter/functional duality.

An :class:`Orbit` is a finite window of a discrete-time signal whose last
sample sits at ``t = 0``; row ``k`` of ``values`` is the sample at
``t = k - (L - 1)``.  Filters map orbits to equally long real sequences,
functionals map orbits to a single number, and the two are interchangeable
for causal time-invariant filters by reading the output at ``t = 0``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ._rng import stream
from .errors import BoundError, DimensionError

__all__ = [
    "Orbit",
    "FadingFunction",
    "Filter",
    "Functional",
    "FadingModulus",
    "time_delay",
    "fading_distance",
    "filter_to_functional",
    "functional_to_filter",
    "estimate_fading_modulus",
    "identity_filter",
    "delay_filter",
    "moving_average_filter",
    "leaky_integrator_filter",
    "lag_product_filter",
    "builtin_filters",
]


@dataclass(frozen=True, eq=False)
class Orbit:
    """Uniformly bounded multivariate series on ``t = -(L-1), ..., 0``.

    ``values`` may be given as a 1-D sequence (scalar orbit) or an ``(L, n)``
    array.  When ``bound`` is omitted the orbit's own sup-norm is used
    (or 1.0 for an all-zero orbit).
    """

    values: np.ndarray
    bound: float | None = None

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.ndim != 2 or vals.shape[0] < 1 or vals.shape[1] < 1:
            raise DimensionError(f"orbit values must have shape (L, n) with L, n >= 1, got {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("orbit values must be finite")
        vals.setflags(write=False)
        peak = float(np.max(np.abs(vals)))
        bound = self.bound
        if bound is None:
            bound = peak if peak > 0 else 1.0
        bound = float(bound)
        if not bound > 0:
            raise ValueError(f"bound must be positive, got {bound}")
        if peak > bound:
            raise BoundError(f"orbit sup-norm {peak!r} exceeds bound {bound!r}")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "bound", bound)

    @property
    def length(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def times(self) -> np.ndarray:
        return np.arange(-(self.length - 1), 1)

    @property
    def scalar(self) -> np.ndarray:
        """The single component of a scalar orbit."""
        if self.dim != 1:
            raise DimensionError(f"expected a scalar orbit, got dimension {self.dim}")
        return self.values[:, 0]

    def __len__(self) -> int:
        return self.length

    def at(self, t: int) -> np.ndarray:
        if not -(self.length - 1) <= t <= 0:
            raise IndexError(f"t={t} outside [{-(self.length - 1)}, 0]")
        return self.values[t - 1] if t < 0 else self.values[-1]

    def prefix(self, t: int) -> "Orbit":
        """The orbit truncated so that its last sample is the one at ``t``."""
        return time_delay(self, -t)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Orbit):
            return NotImplemented
        return self.values.shape == other.values.shape and bool(np.all(self.values == other.values))

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"Orbit(L={self.length}, n={self.dim}, K={self.bound:g})"

    # -- CSV ---------------------------------------------------------------

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t"] + [f"x{i + 1}" for i in range(self.dim)])
        for t, row in zip(self.times, self.values):
            writer.writerow([int(t)] + [repr(float(x)) for x in row])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8", newline="\n")
        return text

    @classmethod
    def from_csv(cls, path, bound: float | None = None) -> "Orbit":
        return cls.from_csv_text(Path(path).read_text(encoding="utf-8"), bound=bound)

    @classmethod
    def from_csv_text(cls, text: str, bound: float | None = None) -> "Orbit":
        """Parse ``t,x1,...,xn`` rows with t ascending to 0."""
        rows = [r for r in csv.reader(io.StringIO(text)) if r]
        if not rows or rows[0][0].strip() != "t":
            raise ValueError("orbit CSV must start with a header 't,x1,...,xn'")
        n = len(rows[0]) - 1
        ts, vals = [], []
        for lineno, row in enumerate(rows[1:], start=2):
            if len(row) != n + 1:
                raise DimensionError(f"line {lineno}: expected {n + 1} fields, got {len(row)}")
            ts.append(int(row[0]))
            vals.append([float(x) for x in row[1:]])
        if not ts:
            raise ValueError("orbit CSV has no samples")
        if ts[-1] != 0 or ts != list(range(ts[0], 1)):
            raise ValueError("orbit CSV times must be consecutive and end at t=0")
        return cls(np.array(vals), bound=bound)


def time_delay(u: Orbit, tau: int) -> Orbit:
    """Delayed orbit ``(u^tau)_t = u_{t - tau}``, re-anchored to end at 0."""
    tau = int(tau)
    if tau < 0:
        raise ValueError(f"delay must be non-negative, got {tau}")
    if tau >= u.length:
        raise DimensionError(f"delay {tau} leaves nothing of an orbit of length {u.length}")
    return Orbit(u.values[: u.length - tau], bound=u.bound)


# -- fading functions --------------------------------------------------------


@dataclass(frozen=True)
class FadingFunction:
    """Monotone weight on ``t <= 0`` with value 1 at the origin.

    ``exp``: ``exp(rate * t)``; ``power``: ``(1 - t) ** -exponent``;
    ``table``: ``table[k]`` at ``t = -k``, linearly interpolated between
    integer times and undefined beyond the table.
    """

    kind: str = "exp"
    rate: float = 0.1
    exponent: float = 1.0
    table: tuple = ()

    def __post_init__(self):
        if self.kind == "exp":
            if not self.rate > 0:
                raise ValueError(f"exponential rate must be positive, got {self.rate}")
        elif self.kind == "power":
            if not self.exponent > 0:
                raise ValueError(f"power exponent must be positive, got {self.exponent}")
        elif self.kind == "table":
            tab = np.asarray(self.table, dtype=float)
            if tab.ndim != 1 or tab.size == 0 or tab[0] != 1.0:
                raise ValueError("table fading function needs table[0] == 1")
            if np.any(tab <= 0) or np.any(tab > 1) or np.any(np.diff(tab) > 0):
                raise ValueError("table weights must lie in (0, 1] and not increase into the past")
            object.__setattr__(self, "table", tuple(float(x) for x in tab))
        else:
            raise ValueError(f"unknown fading function kind {self.kind!r}")

    @classmethod
    def exponential(cls, rate: float = 0.1) -> "FadingFunction":
        return cls("exp", rate=rate)

    @classmethod
    def power(cls, exponent: float) -> "FadingFunction":
        return cls("power", exponent=exponent)

    @classmethod
    def from_table(cls, weights: Sequence[float]) -> "FadingFunction":
        return cls("table", table=tuple(weights))

    @classmethod
    def from_config(cls, cfg: dict) -> "FadingFunction":
        kind = cfg.get("kind", "exp")
        if kind == "exp":
            return cls.exponential(float(cfg.get("rate", 0.1)))
        if kind == "power":
            return cls.power(float(cfg["exponent"]))
        if kind == "table":
            return cls.from_table(cfg["table"])
        raise ValueError(f"unknown fading function kind {kind!r}")

    def to_config(self) -> dict:
        if self.kind == "exp":
            return {"kind": "exp", "rate": self.rate}
        if self.kind == "power":
            return {"kind": "power", "exponent": self.exponent}
        return {"kind": "table", "table": list(self.table)}

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t > 0):
            raise ValueError("fading functions are defined on t <= 0 only")
        if self.kind == "exp":
            return np.exp(self.rate * t)
        if self.kind == "power":
            return (1.0 - t) ** (-self.exponent)
        tab = np.asarray(self.table)
        if np.any(-t > tab.size - 1):
            raise ValueError(f"table fading function only covers t >= {-(tab.size - 1)}")
        return np.interp(-t, np.arange(tab.size), tab)

    def check(self, grid) -> bool:
        """Invariants on an evaluated grid: ``w(0) = 1``, monotone, in (0, 1]."""
        grid = np.sort(np.asarray(grid, dtype=float))
        w = self(grid)
        return bool(
            float(self(0.0)) == 1.0 and np.all(w > 0) and np.all(w <= 1) and np.all(np.diff(w) >= 0)
        )


DEFAULT_FADING = FadingFunction.exponential(0.1)


def fading_distance(u: Orbit, v: Orbit, omega: FadingFunction = DEFAULT_FADING) -> float:
    """Weighted sup distance ``sup_t |u_t - v_t|_inf * omega(t)``."""
    if u.values.shape != v.values.shape:
        raise DimensionError(f"orbit shapes differ: {u.values.shape} vs {v.values.shape}")
    gap = np.max(np.abs(u.values - v.values), axis=1)
    return float(np.max(gap * omega(u.times)))


# -- filters and functionals -------------------------------------------------


def _resolve_bound(bound, input_bound: float) -> float | None:
    if bound is None:
        return None
    return float(bound(input_bound)) if callable(bound) else float(bound)


@dataclass(frozen=True)
class Filter:
    """Map from an orbit to a real sequence of the same length.

    ``bound`` is either a number or a function of the input bound ``K``
    giving ``K'``; outputs are checked against it on every call.
    """

    func: Callable[[Orbit], np.ndarray]
    name: str = "filter"
    causal: bool = True
    time_invariant: bool = True
    bound: float | Callable[[float], float] | None = None

    def __call__(self, u: Orbit) -> np.ndarray:
        out = np.asarray(self.func(u), dtype=float)
        if out.shape != (u.length,):
            raise DimensionError(f"{self.name}: output shape {out.shape}, expected ({u.length},)")
        limit = _resolve_bound(self.bound, u.bound)
        if limit is not None and np.max(np.abs(out)) > limit:
            raise BoundError(f"{self.name}: output exceeds bound {limit!r}")
        return out


@dataclass(frozen=True)
class Functional:
    """Map from an orbit to a real number."""

    func: Callable[[Orbit], float]
    name: str = "functional"
    bound: float | Callable[[float], float] | None = None

    def __call__(self, u: Orbit) -> float:
        value = float(self.func(u))
        limit = _resolve_bound(self.bound, u.bound)
        if limit is not None and abs(value) > limit:
            raise BoundError(f"{self.name}: value {value!r} exceeds bound {limit!r}")
        return value


def filter_to_functional(B: Filter) -> Functional:
    """``H_B(u) = (B u)_0``."""
    if not (B.causal and B.time_invariant):
        raise ValueError(f"{B.name} must be causal and time-invariant")
    return Functional(lambda u: B(u)[-1], name=f"at0({B.name})", bound=B.bound)


def functional_to_filter(H: Functional) -> Filter:
    """``(B_H u)_t = H(u^{-t})``: apply ``H`` to every prefix of ``u``."""

    def run(u: Orbit) -> np.ndarray:
        return np.array([H(time_delay(u, -t)) for t in u.times])

    return Filter(run, name=f"sliding({H.name})", bound=H.bound)


# -- built-in filters --------------------------------------------------------
# Each output sample is computed from the samples up to its own index only,
# with the same floating-point operations regardless of what follows, so the
# duality round trips hold exactly.


def identity_filter(component: int = 0) -> Filter:
    return Filter(lambda u: u.values[:, component].copy(), name="identity", bound=lambda K: K)


def delay_filter(lag: int = 1, component: int = 0) -> Filter:
    """``y_t = u_{t - lag}``; samples before the window read as 0."""

    def run(u):
        x = u.values[:, component]
        out = np.zeros_like(x)
        out[lag:] = x[: x.size - lag]
        return out

    return Filter(run, name=f"delay{lag}", bound=lambda K: K)


def moving_average_filter(window: int = 3, component: int = 0) -> Filter:
    """Mean of the last ``window`` samples, zero-padded on the left."""

    def run(u):
        x = np.concatenate([np.zeros(window - 1), u.values[:, component]])
        return np.lib.stride_tricks.sliding_window_view(x, window).sum(axis=1) / window

    return Filter(run, name=f"mavg{window}", bound=lambda K: K)


def leaky_integrator_filter(decay: float = 0.5, component: int = 0) -> Filter:
    """``y_t = decay * y_{t-1} + (1 - decay) * u_t`` started from rest."""

    def run(u):
        x = u.values[:, component]
        out = np.empty_like(x)
        y = 0.0
        for k, xk in enumerate(x):
            y = decay * y + (1.0 - decay) * xk
            out[k] = y
        return out

    return Filter(run, name=f"leaky{decay:g}", bound=lambda K: K)


def lag_product_filter(lags: Sequence[int] = (0, 1), component: int = 0) -> Filter:
    """``y_t = prod_k u_{t - lag_k}``; samples before the window read as 0."""
    lags = tuple(int(l) for l in lags)

    def run(u):
        x = u.values[:, component]
        out = np.ones_like(x)
        for lag in lags:
            shifted = np.zeros_like(x)
            shifted[lag:] = x[: x.size - lag]
            out = out * shifted
        return out

    return Filter(run, name="lagprod" + "_".join(map(str, lags)), bound=lambda K: K ** len(lags))


def builtin_filters() -> list[Filter]:
    return [
        identity_filter(),
        delay_filter(1),
        moving_average_filter(3),
        leaky_integrator_filter(0.5),
        lag_product_filter((0, 1)),
    ]


# -- empirical fading probe --------------------------------------------------


@dataclass(frozen=True)
class FadingModulus:
    """Pairs ``(d_omega(u, v), |H(u) - H(v)|)`` from single-sample perturbations."""

    distances: np.ndarray
    gaps: np.ndarray
    times: np.ndarray = field(repr=False)

    def envelope(self, eps: float) -> float:
        """Largest recorded gap among pairs at distance ``<= eps``."""
        mask = self.distances <= eps
        return float(self.gaps[mask].max()) if mask.any() else 0.0

    def slow_fading(self, eps: float | None = None, ratio: float = 0.5) -> bool:
        """True if pairs closer than ``eps`` still show a gap of at least
        ``ratio`` times the largest gap seen anywhere.

        ``eps`` defaults to ``1e-6`` of the largest sampled distance.
        """
        top = float(self.gaps.max())
        if top == 0.0:
            return False
        if eps is None:
            eps = 1e-6 * float(self.distances.max())
        return self.envelope(eps) >= ratio * top

    def rows(self):
        return list(zip(self.distances.tolist(), self.gaps.tolist()))


def estimate_fading_modulus(
    H: Functional,
    omega: FadingFunction = DEFAULT_FADING,
    samples: int = 200,
    seed: int = 0,
    length: int = 30,
    bound: float = 1.0,
    dim: int = 1,
) -> FadingModulus:
    """Probe how ``H`` reacts to perturbations at known fading distances.

    Each pair shares a random base orbit and differs in one sample, at a
    random time, by a log-uniform amount in ``(1e-6 K, K]``, so the pair's
    distance is ``|delta| * omega(t)`` by construction.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = stream(seed, "fading-modulus")
    times = np.arange(-(length - 1), 1)
    dist = np.empty(samples)
    gaps = np.empty(samples)
    where = np.empty(samples, dtype=int)
    for i in range(samples):
        base = rng.uniform(-bound, bound, size=(length, dim))
        k = int(rng.integers(length))
        c = int(rng.integers(dim))
        delta = bound * 10.0 ** (-rng.uniform(0.0, 6.0))
        if abs(base[k, c] + delta) > bound:
            delta = -delta
        pert = base.copy()
        pert[k, c] += delta
        u, v = Orbit(base, bound), Orbit(pert, bound)
        dist[i] = fading_distance(u, v, omega)
        gaps[i] = abs(H(u) - H(v))
        where[i] = times[k]
    return FadingModulus(dist, gaps, where)


def orbit_from_function(fn: Callable[[int], float], length: int, bound: float | None = None) -> Orbit:
    """Sample ``fn(t)`` on ``t = -(length-1), ..., 0``."""
    ts = range(-(length - 1), 1)
    return Orbit(np.array([fn(t) for t in ts], dtype=float), bound=bound)
