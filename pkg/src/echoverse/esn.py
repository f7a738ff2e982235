"""Discrete-time echo state networks with polynomial readouts.

The reservoir update is ``x_{t+1} = sigma(A x_t + B u_{t+1} + xi)`` with a
componentwise squashing ``sigma`` and the output is ``p(x_{t+1})``.  Two
networks driven by the same input can be merged into one block-diagonal
network whose readout is the sum or product of the two readouts.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import block_diag

from ._rng import stream
from .errors import DimensionError
from .polynomial import Polynomial
from .signals import Orbit

__all__ = [
    "EsnSystem",
    "ContractionReport",
    "SQUASHING",
    "spectral_radius",
    "operator_norm",
    "check_esp_condition",
    "contraction_report",
    "esn_step",
    "run_esn",
    "reservoir_states",
    "default_washout",
    "esp_convergence_test",
    "esn_sum",
    "esn_product",
    "random_esn",
]


def _clip(z):
    return np.clip(z, -1.0, 1.0)


# tag -> (function, Lipschitz constant)
SQUASHING = {
    "tanh": (np.tanh, 1.0),
    "clip": (_clip, 1.0),
}


@dataclass(frozen=True, eq=False)
class EsnSystem:
    A: np.ndarray
    B: np.ndarray
    xi: np.ndarray
    readout: Polynomial
    sigma: str = "tanh"

    def __post_init__(self):
        A = np.array(self.A, dtype=float, ndmin=2)
        B = np.array(self.B, dtype=float, ndmin=2)
        xi = np.array(self.xi, dtype=float, ndmin=1)
        if A.shape[0] != A.shape[1]:
            raise DimensionError(f"A must be square, got {A.shape}")
        N = A.shape[0]
        if B.shape[0] != N:
            raise DimensionError(f"B must have {N} rows, got {B.shape}")
        if xi.shape != (N,):
            raise DimensionError(f"xi must have shape ({N},), got {xi.shape}")
        if self.readout.nvars != N:
            raise DimensionError(f"readout reads {self.readout.nvars} variables, reservoir has {N}")
        if self.sigma not in SQUASHING:
            raise ValueError(f"unknown squashing function {self.sigma!r}")
        for arr in (A, B, xi):
            arr.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "xi", xi)

    @property
    def N(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.B.shape[1]

    @property
    def lipschitz(self) -> float:
        return SQUASHING[self.sigma][1]

    def with_readout(self, readout: Polynomial) -> "EsnSystem":
        return EsnSystem(self.A, self.B, self.xi, readout, self.sigma)

    def to_json(self) -> dict:
        return {
            "kind": "esn",
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "xi": self.xi.tolist(),
            "sigma": self.sigma,
            "readout": self.readout.to_json(),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "EsnSystem":
        A = np.array(doc["A"], dtype=float, ndmin=2)
        return cls(
            A,
            np.array(doc["B"], dtype=float, ndmin=2),
            np.array(doc["xi"], dtype=float, ndmin=1),
            Polynomial.from_json(doc.get("readout", []), A.shape[0]),
            doc.get("sigma", "tanh"),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "EsnSystem":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def spectral_radius(A) -> float:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"spectral radius needs a square matrix, got shape {A.shape}")
    if A.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(A))))


def operator_norm(A) -> float:
    """Largest singular value."""
    return float(np.linalg.norm(np.asarray(A, dtype=float), 2))


def check_esp_condition(sys: EsnSystem) -> bool:
    """Spectral criterion ``L * rho(A) < 1`` (strict)."""
    return sys.lipschitz * spectral_radius(sys.A) < 1.0


@dataclass(frozen=True)
class ContractionReport:
    spectral_rate: float  # L * rho(A)
    operator_rate: float  # L * ||A||_2

    @property
    def spectral_pass(self) -> bool:
        return self.spectral_rate < 1.0

    @property
    def contraction_pass(self) -> bool:
        return self.operator_rate < 1.0

    @property
    def spectral_only(self) -> bool:
        """Spectral criterion holds but the map is not a one-step contraction."""
        return self.spectral_pass and not self.contraction_pass


def contraction_report(sys: EsnSystem) -> ContractionReport:
    L = sys.lipschitz
    return ContractionReport(L * spectral_radius(sys.A), L * operator_norm(sys.A))


def esn_step(x, u, sys: EsnSystem) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if x.shape != (sys.N,):
        raise DimensionError(f"state must have shape ({sys.N},), got {x.shape}")
    if u.shape != (sys.n,):
        raise DimensionError(f"input must have shape ({sys.n},), got {u.shape}")
    squash = SQUASHING[sys.sigma][0]
    return squash(sys.A @ x + sys.B @ u + sys.xi)


def reservoir_states(sys: EsnSystem, inputs: np.ndarray, x0=None) -> np.ndarray:
    """States after each input row, shape ``(L, N)``."""
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim == 1:
        inputs = inputs[:, None]
    if inputs.shape[1] != sys.n:
        raise DimensionError(f"input dimension {inputs.shape[1]} != {sys.n}")
    x = np.zeros(sys.N) if x0 is None else np.array(x0, dtype=float)
    if x.shape != (sys.N,):
        raise DimensionError(f"initial state must have shape ({sys.N},)")
    squash = SQUASHING[sys.sigma][0]
    drive = inputs @ sys.B.T + sys.xi
    out = np.empty((inputs.shape[0], sys.N))
    for t in range(inputs.shape[0]):
        x = squash(sys.A @ x + drive[t])
        out[t] = x
    return out


def default_washout(sys: EsnSystem) -> int:
    """``max(100, 10 / -log r)`` with ``r`` the one-step contraction rate."""
    r = contraction_report(sys).operator_rate
    if 0.0 < r < 1.0:
        return max(100, math.ceil(10.0 / -math.log(r)))
    return 100


def run_esn(sys: EsnSystem, u: Orbit, washout: int | None = None, x0=None) -> tuple[Orbit, Orbit]:
    """Drive ``sys`` with ``u`` and return (states, outputs) after the washout.

    Both returned orbits end at ``t = 0`` together with ``u``.
    """
    if washout is None:
        washout = default_washout(sys)
    if not 0 <= washout < u.length:
        raise ValueError(f"washout {washout} must lie in [0, {u.length})")
    if not check_esp_condition(sys):
        warnings.warn("spectral echo-state criterion fails for this reservoir", RuntimeWarning, stacklevel=2)
    states = reservoir_states(sys, u.values, x0)[washout:]
    outputs = sys.readout(states)
    return Orbit(states, bound=1.0), Orbit(outputs)


def esp_convergence_test(sys: EsnSystem, u: Orbit, x0a, x0b) -> np.ndarray:
    """Euclidean distance between two trajectories after each input sample."""
    xa = reservoir_states(sys, u.values, x0a)
    xb = reservoir_states(sys, u.values, x0b)
    return np.linalg.norm(xa - xb, axis=1)


def _direct_sum(s1: EsnSystem, s2: EsnSystem):
    if s1.n != s2.n:
        raise DimensionError(f"input dimensions differ: {s1.n} vs {s2.n}")
    if s1.sigma != s2.sigma:
        raise ValueError(f"squashing functions differ: {s1.sigma} vs {s2.sigma}")
    A = block_diag(s1.A, s2.A)
    B = np.vstack([s1.B, s2.B])
    xi = np.concatenate([s1.xi, s2.xi])
    N = s1.N + s2.N
    return A, B, xi, s1.readout.shift(0, N), s2.readout.shift(s1.N, N)


def esn_sum(s1: EsnSystem, s2: EsnSystem, lam: float = 1.0) -> EsnSystem:
    """Block-diagonal network whose output is ``out(s1) + lam * out(s2)``."""
    A, B, xi, p, q = _direct_sum(s1, s2)
    return EsnSystem(A, B, xi, p + q * float(lam), s1.sigma)


def esn_product(s1: EsnSystem, s2: EsnSystem) -> EsnSystem:
    """Block-diagonal network whose output is ``out(s1) * out(s2)``."""
    A, B, xi, p, q = _direct_sum(s1, s2)
    return EsnSystem(A, B, xi, p * q, s1.sigma)


def random_esn(
    N: int,
    n: int = 1,
    *,
    spectral_radius_target: float | None = 0.9,
    operator_norm_target: float | None = None,
    input_scale: float = 1.0,
    bias_scale: float = 0.0,
    sigma: str = "tanh",
    readout: Polynomial | None = None,
    seed: int = 0,
    rng: np.random.Generator | None = None,
) -> EsnSystem:
    """Reservoir with i.i.d. uniform[-1, 1] weights.

    ``A`` is rescaled to the requested spectral radius, or to the requested
    operator norm when ``operator_norm_target`` is given.  The default
    readout is the mean of the state coordinates.
    """
    if rng is None:
        rng = stream(seed, "esn", N, n)
    A = rng.uniform(-1.0, 1.0, size=(N, N))
    if operator_norm_target is not None:
        scale = operator_norm(A)
        target = operator_norm_target
    else:
        scale = spectral_radius(A)
        target = spectral_radius_target
    if scale > 0:
        A *= target / scale
    B = input_scale * rng.uniform(-1.0, 1.0, size=(N, n))
    xi = bias_scale * rng.uniform(-1.0, 1.0, size=N)
    if readout is None:
        readout = Polynomial.linear(np.full(N, 1.0 / N))
    return EsnSystem(A, B, xi, readout, sigma)
