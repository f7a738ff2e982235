"""Readout training and error-versus-capacity experiments.

A capacity ladder is a list of reservoir sizes (ESN state dimension, LSM
filter count, or number of multiplexed QRC registers).  At each rung a
seeded reservoir is driven by a training orbit, a polynomial readout of the
post-washout states is fitted by ridge regression, and the fit is scored on
an independent test orbit.
"""

from __future__ import annotations

import itertools
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, lstsq

from . import esn as esn_mod
from . import lsm as lsm_mod
from . import qrc as qrc_mod
from ._rng import stream
from .errors import DivergenceError
from .polynomial import Polynomial
from .signals import Orbit

__all__ = [
    "FeatureOverflowError",
    "MAX_FEATURES",
    "feature_exponents",
    "polynomial_features",
    "ridge_train",
    "nrmse",
    "TargetFilter",
    "target_eval",
    "DataSpec",
    "TrainReport",
    "approximation_experiment",
    "algebra_assisted_fit",
    "ProbeResult",
    "separation_probe",
    "FAMILIES",
]

MAX_FEATURES = 10**6
FAMILIES = ("esn", "qrc", "lsm")


class FeatureOverflowError(ValueError):
    pass


# -- features and ridge ------------------------------------------------------------


def _check_feature_count(N: int, degree: int) -> int:
    if degree < 0:
        raise ValueError("degree must be non-negative")
    count = math.comb(N + degree, degree)
    if count > MAX_FEATURES:
        raise FeatureOverflowError(f"{count} monomials for N={N}, degree={degree} exceeds {MAX_FEATURES}")
    return count


def feature_exponents(N: int, degree: int) -> list[tuple]:
    """Exponent vectors of :func:`polynomial_features`, in column order."""
    _check_feature_count(N, degree)
    out = []
    for k in range(degree + 1):
        for combo in itertools.combinations_with_replacement(range(N), k):
            exps = [0] * N
            for j in combo:
                exps[j] += 1
            out.append(tuple(exps))
    return out


def polynomial_features(x, degree: int) -> np.ndarray:
    """All monomials of total degree ``<= degree``: ``1, x1, .., xN, x1^2, x1 x2, ..``.

    ``x`` is one point ``(N,)`` or a batch ``(M, N)``; there are
    ``C(N + degree, degree)`` features.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    M, N = X.shape
    count = _check_feature_count(N, degree)
    out = np.empty((M, count))
    out[:, 0] = 1.0
    # level k holds (last variable index, column) of every degree-k monomial
    level = [(0, 0)]
    col = 1
    for _ in range(degree):
        nxt = []
        for last, src in level:
            for j in range(last, N):
                np.multiply(out[:, src], X[:, j], out=out[:, col])
                nxt.append((j, col))
                col += 1
        level = nxt
    return out[0] if single else out


def ridge_train(features, targets, reg: float = 1e-6) -> np.ndarray:
    """Minimize ``|Phi w - y|^2 + reg |w|^2`` via the normal equations.

    At ``reg = 0`` a (numerically) singular Gram matrix falls back to a
    least-squares pseudo-inverse solve with a warning.
    """
    Phi = np.asarray(features, dtype=float)
    y = np.asarray(targets, dtype=float)
    if Phi.ndim != 2 or Phi.shape[0] < 1 or Phi.shape[1] < 1:
        raise ValueError(f"features must be a non-empty (M, F) matrix, got {Phi.shape}")
    if y.shape != (Phi.shape[0],):
        raise ValueError(f"targets must have shape ({Phi.shape[0]},), got {y.shape}")
    if reg < 0:
        raise ValueError("regularization must be non-negative")
    G = Phi.T @ Phi
    G[np.diag_indices_from(G)] += reg
    rhs = Phi.T @ y
    try:
        factor = cho_factor(G, lower=True, check_finite=False)
        diag = np.abs(np.diag(factor[0]))
        # squared diagonal spread of the factor bounds cond(G) from below
        singular = reg == 0 and (diag.min() == 0 or (diag.max() / diag.min()) ** 2 > 1e12)
    except LinAlgError:
        factor, singular = None, True
    if singular or factor is None:
        if reg == 0:
            warnings.warn("singular normal equations; using the pseudo-inverse", RuntimeWarning, stacklevel=2)
            return lstsq(Phi, y, cond=1e-13, lapack_driver="gelsd")[0]
        # ridge system too ill-conditioned for Cholesky: solve the stacked form
        A = np.vstack([Phi, math.sqrt(reg) * np.eye(Phi.shape[1])])
        b = np.concatenate([y, np.zeros(Phi.shape[1])])
        return lstsq(A, b, lapack_driver="gelsd")[0]
    return cho_solve(factor, rhs, check_finite=False)


def nrmse(prediction, target) -> float:
    """RMSE over the target's standard deviation.

    A constant target has no spread; its RMS (or 1 if it is zero) is used
    as the scale instead.
    """
    prediction = np.asarray(prediction, dtype=float)
    target = np.asarray(target, dtype=float)
    rmse = math.sqrt(float(np.mean((prediction - target) ** 2)))
    scale = float(np.std(target))
    if scale <= 1e-12 * max(1.0, float(np.max(np.abs(target)))):
        scale = math.sqrt(float(np.mean(target**2))) or 1.0
    return rmse / scale


# -- targets ---------------------------------------------------------------------


@dataclass(frozen=True)
class TargetFilter:
    """Causal fading-memory target filters on scalar orbits.

    kinds and parameters:

    ``volterra2``  decay ``a``, ``linear``, ``quadratic``, ``memory``:
        ``linear * sum_k a^k u_{t-k} + quadratic * sum_{k,l} a^(k+l) u_{t-k} u_{t-l}``
        over ``k, l < memory``.
    ``narma``      ``order``: the order-m NARMA recurrence driven by the input
        mapped from ``[-K, K]`` to ``[0, 0.5]``.
    ``delay-product``  ``lags``: ``prod_k u_{t - lag_k}``.
    ``constant``   ``value``.

    Samples before the window read as zero.
    """

    kind: str = "volterra2"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("volterra2", "narma", "delay-product", "constant"):
            raise ValueError(f"unknown target kind {self.kind!r}")

    def get(self, key, default):
        return self.params.get(key, default)

    def __call__(self, u: Orbit) -> np.ndarray:
        return target_eval(self, u)

    def to_config(self) -> dict:
        return {"kind": self.kind, **self.params}

    @classmethod
    def from_config(cls, cfg: dict) -> "TargetFilter":
        cfg = dict(cfg)
        kind = cfg.pop("kind")
        if "lags" in cfg:
            cfg["lags"] = [int(l) for l in cfg["lags"]]
        return cls(kind, cfg)


def _volterra2(x, a, c1, c2, memory):
    kernel = a ** np.arange(memory)
    s = np.convolve(x, kernel)[: x.size]
    return c1 * s + c2 * s * s


def _narma(v, order, limit=10.0):
    y = np.zeros(v.size)
    for k in range(v.size):
        prev = y[k - 1] if k >= 1 else 0.0
        hist = y[max(0, k - order) : k].sum()
        lagged = v[k - order + 1] if k - order + 1 >= 0 else 0.0
        y[k] = 0.3 * prev + 0.05 * prev * hist + 1.5 * lagged * v[k] + 0.1
        if abs(y[k]) > limit:
            raise DivergenceError(f"NARMA-{order} diverged at sample {k} (|y| = {abs(y[k]):.3g} > {limit})")
    return y


def target_eval(f: TargetFilter, u: Orbit) -> np.ndarray:
    x = u.scalar
    if f.kind == "volterra2":
        return _volterra2(
            x, float(f.get("decay", 0.5)), float(f.get("linear", 1.0)), float(f.get("quadratic", 1.0)),
            int(f.get("memory", 30)),
        )
    if f.kind == "narma":
        v = 0.25 * (x / u.bound + 1.0)
        return _narma(v, int(f.get("order", 10)))
    if f.kind == "delay-product":
        out = np.ones_like(x)
        for lag in f.get("lags", (0, 1)):
            shifted = np.zeros_like(x)
            shifted[lag:] = x[: x.size - lag]
            out = out * shifted
        return out
    return np.full(x.size, float(f.get("value", 1.0)))


def narma_fixed_point(order: int, v: float) -> float:
    """Stable fixed point of NARMA-``order`` under constant (rescaled) input ``v``."""
    a = 0.05 * order
    c = 1.5 * v * v + 0.1
    return (0.7 - math.sqrt(0.49 - 4 * a * c)) / (2 * a)


# -- experiments -----------------------------------------------------------------


@dataclass(frozen=True)
class DataSpec:
    train: int = 2000
    test: int = 500
    washout: int = 100
    bound: float = 1.0


@dataclass(frozen=True)
class TrainReport:
    family: str
    capacity: int
    degree: int
    seed: int
    repeat: int
    target: str
    n_features: int
    train_nrmse: float
    test_nrmse: float
    weight_norm: float

    def as_row(self) -> dict:
        return asdict(self)


DEFAULT_RESERVOIR = {
    "esn": {"spectral_radius": 0.5, "input_scale": 0.2, "bias_scale": 0.0, "sigma": "tanh"},
    "qrc": {"qubits": 2, "tau": 1.0},
    "lsm": {"delta": 1.0, "rate": 0.5, "spike_dt": 1.0},
}


def _inputs(family: str, data: DataSpec, seed: int, repeat: int):
    """Training and test drives; spike trains for the LSM, orbits otherwise."""
    out = []
    for split, n in (("train", data.train), ("test", data.test)):
        rng = stream(seed, "data", split, repeat)
        L = data.washout + n
        if family == "qrc":
            out.append(Orbit(rng.uniform(0.0, 1.0, L), bound=1.0))
        elif family == "lsm":
            cfg = DEFAULT_RESERVOIR["lsm"]
            out.append(lsm_mod.random_spike_train(rng, cfg["delta"], float(L - 1), cfg["rate"]))
        else:
            out.append(Orbit(rng.uniform(-data.bound, data.bound, L), bound=data.bound))
    return out


def _lsm_orbit(train: lsm_mod.SpikeTrain, L: int) -> tuple[np.ndarray, Orbit]:
    """Integer sample times and the smoothed train sampled on them."""
    grid = np.arange(-(L - 1), 1, dtype=float)
    w = lsm_mod.bump_half_width(train.delta)
    vals = np.zeros(L)
    for s in train.times:
        vals += np.maximum(0.0, 1.0 - np.abs(grid - s) / w)
    return grid, Orbit(vals, bound=1.0)


class _Reservoir:
    """Seeded reservoir at one ladder rung, reduced to a state map."""

    def __init__(self, family: str, capacity: int, seed: int, repeat: int, params: dict):
        self.family = family
        cfg = {**DEFAULT_RESERVOIR[family], **params}
        if family == "esn":
            self.system = esn_mod.random_esn(
                capacity,
                spectral_radius_target=float(cfg["spectral_radius"]),
                input_scale=float(cfg["input_scale"]),
                bias_scale=float(cfg["bias_scale"]),
                sigma=cfg["sigma"],
                rng=stream(seed, "reservoir", "esn", capacity, repeat),
            )
        elif family == "qrc":
            # register j is the same at every rung, so rungs are nested
            self.system = qrc_mod.multiplex(
                [
                    qrc_mod.QrcSystem(
                        qrc_mod.default_ising(int(cfg["qubits"]), seed=_register_seed(seed, repeat, j), tau=float(cfg["tau"])),
                        np.ones(int(cfg["qubits"])),
                    )
                    for j in range(capacity)
                ]
            )
        elif family == "lsm":
            self.system = lsm_mod.random_lsm(capacity, seed=_register_seed(seed, repeat, capacity))
        else:
            raise ValueError(f"unknown reservoir family {family!r}")

    def states(self, drive, washout: int) -> tuple[np.ndarray, Orbit]:
        """Post-washout states and the orbit the target is evaluated on."""
        if self.family == "esn":
            return esn_mod.reservoir_states(self.system, drive.values)[washout:], drive
        if self.family == "qrc":
            z = np.hstack([qrc_mod.qrc_trajectory(q, drive.scalar)[:, q.true_nodes] for q in self.system.registers])
            return z[washout:], drive
        L = int(round(drive.horizon)) + 1
        grid, orbit = _lsm_orbit(drive, L)
        return _lsm_states_fast(self.system, drive, grid)[washout:], orbit


def _register_seed(seed: int, repeat: int, index: int) -> int:
    return int(stream(seed, "register", repeat, index).integers(2**63))


def _lsm_states_fast(sys: lsm_mod.LsmSystem, u: lsm_mod.SpikeTrain, grid: np.ndarray) -> np.ndarray:
    s = np.asarray(u.times)
    lag = s[None, :] - grid[:, None]
    mask = lag <= 0
    decay = np.where(mask, np.exp(np.where(mask, lag, 0.0)), 0.0)
    return np.column_stack([(b.kernel(lag) * decay).sum(axis=1) for b in sys.filters])


def _fit(family, capacity, degree, seed, repeat, target, data, reg, params, drives=None) -> TrainReport:
    res = _Reservoir(family, capacity, seed, repeat, params)
    train_drive, test_drive = drives if drives is not None else _inputs(family, data, seed, repeat)
    x_tr, u_tr = res.states(train_drive, data.washout)
    x_te, u_te = res.states(test_drive, data.washout)
    phi_tr = polynomial_features(x_tr, degree)
    phi_te = polynomial_features(x_te, degree)
    if target == "self":
        # a readout the reservoir realizes exactly: random weights on its own features
        w_true = stream(seed, "self-target", family, capacity, repeat).normal(size=phi_tr.shape[1])
        y_tr, y_te, label = phi_tr @ w_true, phi_te @ w_true, "self"
    else:
        y_tr = target(u_tr)[data.washout :]
        y_te = target(u_te)[data.washout :]
        label = target.kind
    w = ridge_train(phi_tr, y_tr, reg)
    return TrainReport(
        family,
        int(capacity),
        int(degree),
        int(seed),
        int(repeat),
        label,
        int(phi_tr.shape[1]),
        nrmse(phi_tr @ w, y_tr),
        nrmse(phi_te @ w, y_te),
        float(np.linalg.norm(w)),
    )


def approximation_experiment(
    family: str,
    ladder: Sequence[int],
    target: TargetFilter | str,
    data: DataSpec = DataSpec(),
    seed: int = 0,
    degree: int = 2,
    reg: float = 1e-6,
    repeats: int = 1,
    reservoir: dict | None = None,
    workers: int = 1,
    drives=None,
) -> list[TrainReport]:
    """One report per (rung, repeat), ordered by rung then repeat.

    ``target`` is a :class:`TargetFilter` or ``"self"`` for a random
    polynomial readout of the reservoir's own states.  Draws are keyed by
    ``(seed, rung, repeat)``, so results do not depend on ``workers``.
    ``drives`` replaces the generated (train, test) inputs; their first
    ``data.washout`` samples are still discarded.
    """
    if family not in FAMILIES:
        raise ValueError(f"unknown reservoir family {family!r}")
    ladder = [int(c) for c in ladder]
    if not ladder or any(c < 1 for c in ladder) or any(b <= a for a, b in zip(ladder, ladder[1:])):
        raise ValueError(f"capacity ladder must be non-empty and strictly increasing, got {ladder}")
    if isinstance(target, str) and target != "self":
        raise ValueError(f"unknown target {target!r}")
    jobs = [(c, r) for c in ladder for r in range(repeats)]
    params = dict(reservoir or {})

    def job(cr):
        return _fit(family, cr[0], degree, seed, cr[1], target, data, reg, params, drives)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(job, jobs))
    return [job(cr) for cr in jobs]


def algebra_assisted_fit(
    s1: esn_mod.EsnSystem, s2: esn_mod.EsnSystem, data: DataSpec = DataSpec(), seed: int = 0
) -> TrainReport:
    """Fit the product of two ESN outputs on the states of their direct sum.

    With linear readouts the product is a degree-2 polynomial of the joint
    state, so a degree-2 least-squares fit at zero regularization recovers it.
    """
    joint = esn_mod.esn_product(s1, s2)
    degree = max(joint.readout.degree, 1)
    rows = []
    for split, n in (("train", data.train), ("test", data.test)):
        rng = stream(seed, "data", split, 0)
        u = Orbit(rng.uniform(-data.bound, data.bound, data.washout + n), bound=data.bound)
        y = esn_mod.run_esn(s1, u, data.washout)[1].scalar * esn_mod.run_esn(s2, u, data.washout)[1].scalar
        x = esn_mod.reservoir_states(joint, u.values)[data.washout :]
        rows.append((polynomial_features(x, degree), y))
    (phi_tr, y_tr), (phi_te, y_te) = rows
    w = ridge_train(phi_tr, y_tr, 0.0)
    return TrainReport(
        "esn", joint.N, degree, seed, 0, "esn-product", phi_tr.shape[1],
        nrmse(phi_tr @ w, y_tr), nrmse(phi_te @ w, y_te), float(np.linalg.norm(w)),
    )


def readout_from_weights(weights, N: int, degree: int) -> Polynomial:
    """The fitted readout as a :class:`Polynomial` in the state variables."""
    return Polynomial.from_coefficients(list(weights), feature_exponents(N, degree))


# -- separation ------------------------------------------------------------------


@dataclass(frozen=True)
class ProbeResult:
    gap: float
    witness: int | None  # first instance index with a gap above tolerance


def _probe_instances(family: str, size: int, seed: int, tries: int):
    for k in range(tries):
        if family == "esn":
            yield esn_mod.random_esn(size, spectral_radius_target=0.9, rng=stream(seed, "probe", "esn", size, k))
        elif family == "qrc":
            yield qrc_mod.QrcSystem(qrc_mod.default_ising(size, seed=_register_seed(seed, k, size)), np.ones(size))
        elif family == "lsm":
            yield lsm_mod.random_lsm(size, seed=_register_seed(seed, k, size))
        else:
            raise ValueError(f"unknown reservoir family {family!r}")


def _final_state(system, u) -> np.ndarray:
    if isinstance(system, esn_mod.EsnSystem):
        return esn_mod.reservoir_states(system, u.values)[-1]
    if isinstance(system, qrc_mod.QrcSystem):
        return qrc_mod.qrc_trajectory(system, u.scalar)[-1][system.true_nodes]
    return np.array([lsm_mod.decay_filter_eval(u, b, 0.0) for b in system.filters])


def separation_probe(
    family: str, pairs, seed: int = 0, size: int = 10, tries: int = 8, tol: float = 1e-12, instances=None
) -> list[ProbeResult]:
    """Largest state-coordinate gap at ``t = 0`` over seeded instances, per pair.

    A coordinate of the final state is itself a reservoir functional, so a
    positive gap witnesses that the family separates the pair.  Orbits (ESN,
    QRC) or spike trains (LSM) are accepted; ``instances`` overrides the
    seeded draw.
    """
    systems = list(instances) if instances is not None else list(_probe_instances(family, size, seed, tries))
    results = []
    for u, v in pairs:
        best, witness = 0.0, None
        for k, system in enumerate(systems):
            gap = float(np.max(np.abs(_final_state(system, u) - _final_state(system, v))))
            if gap > tol and witness is None:
                witness = k
            best = max(best, gap)
        results.append(ProbeResult(best, witness))
    return results
