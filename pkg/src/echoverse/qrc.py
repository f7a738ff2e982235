"""Qubit-register quantum reservoir in the Pauli-vector representation.

A density operator ``rho`` on N qubits is stored as the real vector
``r[i] = Tr[P_i rho] / 2**N`` over the Pauli products ``P_i``.  Index ``i``
is read as N base-4 digits with qubit 1 most significant and digits
``0, 1, 2, 3 -> I, X, Y, Z``; qubit 1 is also the leftmost Kronecker factor.
With this normalization ``rho = sum_i r[i] P_i``.

One reservoir step evolves under ``exp(-iH tau)`` and then overwrites qubit 1
with the input state ``(I + (1 - 2u) Z) / 2``; both are real matrices on
``r``.  The readout reads the single-Z components ("true nodes").
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.linalg import eigh, hadamard

from ._rng import stream
from .errors import DimensionError, StateError
from .polynomial import Polynomial
from .signals import Orbit

__all__ = [
    "PAULI_LABELS",
    "pauli_index",
    "pauli_digits",
    "pauli_label",
    "pauli_matrix",
    "pauli_coefficients",
    "density_to_vector",
    "vector_to_density",
    "maximally_mixed",
    "encoding_matrix",
    "apply_encoding",
    "HamiltonianSpec",
    "default_ising",
    "channel_matrix",
    "QrcSystem",
    "true_node_indices",
    "qrc_step",
    "qrc_trajectory",
    "run_qrc",
    "qrc_convergence",
    "constant_input_fixed_point",
    "StateDiagnostics",
    "validate_state",
    "MultiplexedSystem",
    "multiplex",
    "multiplex_sum",
    "multiplex_product",
    "run_multiplexed",
    "random_qrc",
]

PAULI_LABELS = "IXYZ"

_SINGLE = np.array(
    [
        [[1, 0], [0, 1]],
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)

# digit -> (bit-flip, phase-flip) of sigma = i^(x z) X^x Z^z
_X_OF_DIGIT = (0, 1, 1, 0)
_Z_OF_DIGIT = (0, 0, 1, 1)


# -- indexing ---------------------------------------------------------------------


def pauli_index(digits) -> int:
    """Index of a Pauli product from per-qubit digits (qubit 1 first).

    ``digits`` may be ints in 0..3, two-bit strings such as ``"11"``, or a
    label string such as ``"ZI"``.
    """
    if isinstance(digits, str) and set(digits) <= set(PAULI_LABELS):
        digits = [PAULI_LABELS.index(c) for c in digits]
    index = 0
    for d in digits:
        if isinstance(d, str):
            if d not in ("00", "01", "10", "11"):
                raise ValueError(f"Pauli digit pair must be 00, 01, 10 or 11, got {d!r}")
            d = int(d, 2)
        d = int(d)
        if not 0 <= d <= 3:
            raise ValueError(f"Pauli digit must lie in 0..3, got {d}")
        index = 4 * index + d
    return index


def pauli_digits(index: int, N: int) -> tuple:
    if not 0 <= index < 4**N:
        raise ValueError(f"Pauli index {index} out of range for {N} qubits")
    out = []
    for _ in range(N):
        index, d = divmod(index, 4)
        out.append(d)
    return tuple(reversed(out))


def pauli_label(index: int, N: int) -> str:
    return "".join(PAULI_LABELS[d] for d in pauli_digits(index, N))


def pauli_matrix(index: int, N: int) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for d in pauli_digits(index, N):
        out = np.kron(out, _SINGLE[d])
    return out


@lru_cache(maxsize=None)
def _symplectic(N: int):
    """For every Pauli index: bit-flip mask x, phase mask z and i**(#Y)."""
    x = np.zeros(4**N, dtype=np.int64)
    z = np.zeros(4**N, dtype=np.int64)
    ny = np.zeros(4**N, dtype=np.int64)
    for i in range(4**N):
        for q, d in enumerate(pauli_digits(i, N)):
            bit = 1 << (N - 1 - q)
            x[i] |= bit * _X_OF_DIGIT[d]
            z[i] |= bit * _Z_OF_DIGIT[d]
            ny[i] += d == 2
    phase = 1j ** ny
    for arr in (x, z, phase):
        arr.setflags(write=False)
    return x, z, phase


def _dim(N: int) -> int:
    return 1 << N


def _qubits_of(dim: int) -> int:
    N = dim.bit_length() - 1
    if dim < 1 or (1 << N) != dim:
        raise DimensionError(f"dimension {dim} is not a power of two")
    return N


def pauli_coefficients(M) -> np.ndarray:
    """``Tr[P_i M]`` for every Pauli product, in index order.

    Uses ``(X^x Z^z)_{ab} = delta_{a, b^x} (-1)^{z.b}``: for each flip mask
    the diagonal ``M[b, b^x]`` is Walsh-Hadamard transformed over ``b``.
    """
    M = np.asarray(M, dtype=complex)
    N = _qubits_of(M.shape[0])
    d = _dim(N)
    b = np.arange(d)
    shifted = M[b[None, :], b[None, :] ^ b[:, None]]  # [x, b] = M[b, b^x]
    table = shifted @ hadamard(d)  # [x, z]
    x, z, phase = _symplectic(N)
    return phase * table[x, z]


def _from_coefficients(r, N: int) -> np.ndarray:
    """``sum_i r[i] P_i`` as a dense matrix."""
    d = _dim(N)
    x, z, phase = _symplectic(N)
    coeff = np.zeros((d, d), dtype=complex)
    coeff[x, z] = np.asarray(r) * phase
    g = coeff @ hadamard(d)  # [x, b] = sum_z coeff (-1)^{z.b}
    b = np.arange(d)
    rho = np.empty((d, d), dtype=complex)
    rho[b[None, :] ^ b[:, None], b[None, :]] = g
    return rho


def density_to_vector(rho, tol: float = 1e-12) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise DimensionError(f"density matrix must be square, got {rho.shape}")
    N = _qubits_of(rho.shape[0])
    if np.max(np.abs(rho - rho.conj().T)) > tol:
        raise StateError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1.0) > tol:
        raise StateError(f"density matrix has trace {np.trace(rho).real!r}, expected 1")
    return pauli_coefficients(rho).real / _dim(N)


def vector_to_density(r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    N = _qubits_of(int(round(math.sqrt(r.size))))
    if r.size != 4**N:
        raise DimensionError(f"Pauli vector length {r.size} is not a power of four")
    return _from_coefficients(r, N)


def maximally_mixed(N: int) -> np.ndarray:
    r = np.zeros(4**N)
    r[0] = 1.0 / _dim(N)
    return r


# -- input encoding ---------------------------------------------------------------


def _check_input(u: float) -> float:
    u = float(u)
    if not 0.0 <= u <= 1.0:
        raise ValueError(f"reservoir input must lie in [0, 1], got {u!r}")
    return u


def encoding_matrix(u: float, N: int) -> np.ndarray:
    """Real matrix of ``rho -> (I + (1-2u) Z)/2 (x) Tr_1(rho)`` on Pauli vectors.

    Tracing out qubit 1 keeps only the components with I on it; the new
    qubit-1 state copies them onto I and, scaled by ``1 - 2u``, onto Z.
    """
    u = _check_input(u)
    block = 4 ** (N - 1)
    S = np.zeros((4**N, 4**N))
    rest = np.arange(block)
    S[rest, rest] = 1.0
    S[3 * block + rest, rest] = 1.0 - 2.0 * u
    return S


def apply_encoding(r: np.ndarray, u: float) -> np.ndarray:
    """``encoding_matrix(u, N) @ r`` without forming the matrix."""
    u = _check_input(u)
    block = r.size // 4
    out = np.zeros_like(r)
    out[:block] = r[:block]
    out[3 * block :] = (1.0 - 2.0 * u) * r[:block]
    return out


# -- Hamiltonian and channel ----------------------------------------------------


@dataclass(frozen=True, eq=False)
class HamiltonianSpec:
    """Transverse-field Ising ``sum_{i<j} J_ij X_i X_j + sum_l h_l Z_l`` or a
    dense Hermitian matrix, evolved for time ``tau`` per step."""

    kind: str = "ising"
    couplings: np.ndarray | None = None
    fields: np.ndarray | None = None
    dense: np.ndarray | None = None
    tau: float = 1.0

    def __post_init__(self):
        if self.kind == "ising":
            J = np.asarray(self.couplings, dtype=float)
            h = np.asarray(self.fields, dtype=float)
            if J.ndim != 2 or J.shape[0] != J.shape[1] or h.shape != (J.shape[0],):
                raise DimensionError("Ising spec needs an N x N coupling matrix and N fields")
            object.__setattr__(self, "couplings", J)
            object.__setattr__(self, "fields", h)
        elif self.kind == "dense":
            H = np.asarray(self.dense, dtype=complex)
            _qubits_of(H.shape[0])
            object.__setattr__(self, "dense", H)
        else:
            raise ValueError(f"unknown Hamiltonian kind {self.kind!r}")
        if not self.tau > 0:
            raise ValueError("evolution time tau must be positive")

    @property
    def N(self) -> int:
        if self.kind == "ising":
            return self.couplings.shape[0]
        return _qubits_of(self.dense.shape[0])

    def matrix(self) -> np.ndarray:
        if self.kind == "dense":
            return self.dense
        N = self.N
        X = [pauli_matrix(pauli_index([1 if q == l else 0 for q in range(N)]), N) for l in range(N)]
        Z = [pauli_matrix(pauli_index([3 if q == l else 0 for q in range(N)]), N) for l in range(N)]
        H = np.zeros((_dim(N), _dim(N)), dtype=complex)
        for i in range(N):
            H += self.fields[i] * Z[i]
            for j in range(i + 1, N):
                H += self.couplings[i, j] * (X[i] @ X[j])
        return H

    def scaled(self, tau: float) -> "HamiltonianSpec":
        return HamiltonianSpec(self.kind, self.couplings, self.fields, self.dense, tau)

    def to_json(self) -> dict:
        if self.kind == "ising":
            return {
                "kind": "ising",
                "couplings": self.couplings.tolist(),
                "fields": self.fields.tolist(),
                "tau": self.tau,
            }
        return {
            "kind": "dense",
            "real": self.dense.real.tolist(),
            "imag": self.dense.imag.tolist(),
            "tau": self.tau,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "HamiltonianSpec":
        tau = float(doc.get("tau", 1.0))
        if doc.get("kind", "ising") == "ising":
            return cls("ising", np.array(doc["couplings"]), np.array(doc["fields"]), tau=tau)
        H = np.array(doc["real"], dtype=float) + 1j * np.array(doc.get("imag", 0.0))
        return cls("dense", dense=H, tau=tau)


def default_ising(N: int, seed: int = 0, tau: float = 1.0, field: float = 1.0) -> HamiltonianSpec:
    """Fully connected Ising with ``J_ij ~ U[-1, 1] / sqrt(N)`` and uniform field."""
    rng = stream(seed, "ising", N)
    J = np.triu(rng.uniform(-1.0, 1.0, size=(N, N)), k=1) / math.sqrt(N)
    return HamiltonianSpec("ising", J + J.T, np.full(N, float(field)), tau=tau)


def channel_matrix(spec: HamiltonianSpec, tol: float = 1e-10) -> np.ndarray:
    """Real orthogonal matrix of ``rho -> V rho V^dag``, ``V = exp(-iH tau)``.

    ``U[i, j] = Tr[P_i V P_j V^dag] / 2**N``.
    """
    H = spec.matrix()
    if np.max(np.abs(H - H.conj().T)) > tol:
        raise ValueError("Hamiltonian is not Hermitian")
    N = spec.N
    d = _dim(N)
    energies, vecs = eigh(H)
    V = (vecs * np.exp(-1j * spec.tau * energies)) @ vecs.conj().T
    Vh = V.conj().T
    x, z, phase = _symplectic(N)
    b = np.arange(d)
    U = np.empty((4**N, 4**N))
    for j in range(4**N):
        P = np.zeros((d, d), dtype=complex)
        P[b ^ x[j], b] = phase[j] * (-1.0) ** _parity(z[j] & b)
        U[:, j] = pauli_coefficients(V @ P @ Vh).real / d
    return U


def _parity(v):
    v = np.asarray(v)
    out = np.zeros_like(v)
    while np.any(v):
        out ^= v & 1
        v = v >> 1
    return out


# -- reservoir ------------------------------------------------------------------


def true_node_indices(N: int) -> list[int]:
    """Indices of ``Z`` on qubit l and ``I`` elsewhere, l = 1..N."""
    return [3 * 4 ** (N - 1 - l) for l in range(N)]


@dataclass(frozen=True, eq=False)
class QrcSystem:
    """Register with Hamiltonian ``hamiltonian`` and readout ``w . z + const``.

    ``const`` extends the strictly linear true-node readout by an affine term.
    """

    hamiltonian: HamiltonianSpec
    weights: np.ndarray
    const: float = 0.0
    seed: int | None = None

    def __post_init__(self):
        w = np.array(self.weights, dtype=float, ndmin=1)
        if w.shape != (self.N,):
            raise DimensionError(f"need {self.N} readout weights, got {w.shape}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def N(self) -> int:
        return self.hamiltonian.N

    @cached_property
    def channel(self) -> np.ndarray:
        return channel_matrix(self.hamiltonian)

    @property
    def true_nodes(self) -> list[int]:
        return true_node_indices(self.N)

    @property
    def readout(self) -> Polynomial:
        return Polynomial.linear(self.weights, self.const)

    def with_readout(self, weights, const: float = 0.0) -> "QrcSystem":
        out = QrcSystem(self.hamiltonian, weights, const, self.seed)
        if "channel" in self.__dict__:
            out.__dict__["channel"] = self.channel
        return out

    def to_json(self) -> dict:
        doc = {
            "kind": "qrc",
            "N": self.N,
            "hamiltonian": self.hamiltonian.to_json(),
            "weights": self.weights.tolist(),
            "const": self.const,
        }
        if self.seed is not None:
            doc["seed"] = self.seed
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "QrcSystem":
        N = int(doc["N"])
        seed = doc.get("seed")
        if "hamiltonian" in doc:
            spec = HamiltonianSpec.from_json(doc["hamiltonian"])
        else:
            spec = default_ising(N, seed=int(seed or 0), tau=float(doc.get("tau", 1.0)))
        if spec.N != N:
            raise DimensionError(f"Hamiltonian acts on {spec.N} qubits, N is {N}")
        weights = doc.get("weights", [1.0] * N)
        return cls(spec, np.array(weights, dtype=float), float(doc.get("const", 0.0)), seed)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "QrcSystem":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def _check_vector(r, N: int, tol: float = 1e-10) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if r.shape != (4**N,):
        raise DimensionError(f"Pauli vector must have length {4**N}, got {r.shape}")
    if abs(r[0] - 1.0 / _dim(N)) > tol:
        raise StateError(f"trace component {r[0]!r}, expected {1.0 / _dim(N)!r}")
    return r


def qrc_step(r, u: float, sys: QrcSystem) -> np.ndarray:
    """``r' = S_u U r``: evolve, then load the input into qubit 1."""
    r = _check_vector(r, sys.N)
    return apply_encoding(sys.channel @ r, u)


def qrc_trajectory(sys: QrcSystem, inputs, r0=None) -> np.ndarray:
    """Pauli vectors after each input, shape ``(L, 4**N)``."""
    inputs = np.asarray(inputs, dtype=float).ravel()
    if inputs.size and (inputs.min() < 0.0 or inputs.max() > 1.0):
        raise ValueError("reservoir inputs must lie in [0, 1]")
    r = maximally_mixed(sys.N) if r0 is None else _check_vector(r0, sys.N)
    U = sys.channel
    out = np.empty((inputs.size, r.size))
    for t, u in enumerate(inputs):
        r = apply_encoding(U @ r, u)
        out[t] = r
    return out


def _scalar_inputs(u: Orbit) -> np.ndarray:
    x = u.scalar
    if x.min() < 0.0 or x.max() > 1.0:
        raise ValueError("quantum reservoir inputs must lie in [0, 1]")
    return x


def run_qrc(sys: QrcSystem, u: Orbit, washout: int = 50, r0=None) -> tuple[Orbit, Orbit]:
    """Drive from ``I / 2**N``; return true nodes and ``y = w . z + const``.

    Entry ``t`` of the outputs is the state right after ingesting ``u_t``.
    """
    x = _scalar_inputs(u)
    if not 0 <= washout < u.length:
        raise ValueError(f"washout {washout} must lie in [0, {u.length})")
    traj = qrc_trajectory(sys, x, r0)[washout:]
    z = traj[:, sys.true_nodes]
    y = z @ sys.weights + sys.const
    return Orbit(z, bound=1.0), Orbit(y)


def qrc_convergence(sys: QrcSystem, u: Orbit, r0a, r0b) -> np.ndarray:
    """Euclidean distance of two Pauli-vector trajectories after each input."""
    x = _scalar_inputs(u)
    return np.linalg.norm(qrc_trajectory(sys, x, r0a) - qrc_trajectory(sys, x, r0b), axis=1)


def constant_input_fixed_point(sys: QrcSystem, c: float) -> np.ndarray:
    """Solve ``r = S_c U r`` with ``r[0] = 1/2**N``."""
    M = encoding_matrix(c, sys.N) @ sys.channel
    n = M.shape[0]
    # the trace row is fixed; solve the remaining block for r[1:]
    A = np.eye(n - 1) - M[1:, 1:]
    rhs = M[1:, 0] / _dim(sys.N)
    tail = np.linalg.lstsq(A, rhs, rcond=None)[0]
    return np.concatenate([[1.0 / _dim(sys.N)], tail])


# -- diagnostics ------------------------------------------------------------------


@dataclass(frozen=True)
class StateDiagnostics:
    N: int
    trace_component: float
    min_eigenvalue: float
    hermiticity_residual: float
    tol: float = 1e-10

    @property
    def expected_trace(self) -> float:
        return 1.0 / _dim(self.N)

    @property
    def trace_ok(self) -> bool:
        return abs(self.trace_component - self.expected_trace) <= self.tol

    @property
    def positive_ok(self) -> bool:
        return self.min_eigenvalue >= -self.tol

    @property
    def hermitian_ok(self) -> bool:
        return self.hermiticity_residual <= self.tol

    @property
    def ok(self) -> bool:
        return self.trace_ok and self.positive_ok and self.hermitian_ok


def validate_state(r, tol: float = 1e-10) -> StateDiagnostics:
    r = np.asarray(r, dtype=float)
    rho = vector_to_density(r)
    N = _qubits_of(rho.shape[0])
    herm = float(np.max(np.abs(rho - rho.conj().T)))
    lam = float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0])
    return StateDiagnostics(N, float(r[0]), lam, herm, tol)


# -- spatial multiplexing ---------------------------------------------------------


@dataclass(frozen=True)
class MultiplexedSystem:
    """Uncoupled registers driven by the same input.

    ``readout`` is a polynomial in the concatenated true nodes of all
    registers (register k's nodes follow those of registers 0..k-1).
    """

    registers: tuple
    readout: Polynomial

    def __post_init__(self):
        object.__setattr__(self, "registers", tuple(self.registers))
        total = sum(q.N for q in self.registers)
        if self.readout.nvars != total:
            raise DimensionError(f"readout reads {self.readout.nvars} variables, registers expose {total}")

    @property
    def n_nodes(self) -> int:
        return self.readout.nvars


def _as_multiplexed(q) -> MultiplexedSystem:
    if isinstance(q, MultiplexedSystem):
        return q
    return MultiplexedSystem((q,), q.readout)


def multiplex(registers: Sequence[QrcSystem], readout: Polynomial | None = None) -> MultiplexedSystem:
    """Registers side by side; by default the readout sums their own readouts."""
    registers = tuple(registers)
    total = sum(q.N for q in registers)
    if readout is None:
        readout = Polynomial.zero(total)
        offset = 0
        for q in registers:
            readout = readout + q.readout.shift(offset, total)
            offset += q.N
    return MultiplexedSystem(registers, readout)


def _combine(q1, q2):
    m1, m2 = _as_multiplexed(q1), _as_multiplexed(q2)
    n1 = m1.n_nodes
    total = n1 + m2.n_nodes
    return m1.registers + m2.registers, m1.readout.shift(0, total), m2.readout.shift(n1, total)


def multiplex_sum(q1, q2, lam: float = 1.0) -> MultiplexedSystem:
    regs, p, q = _combine(q1, q2)
    return MultiplexedSystem(regs, p + q * float(lam))


def multiplex_product(q1, q2) -> MultiplexedSystem:
    regs, p, q = _combine(q1, q2)
    return MultiplexedSystem(regs, p * q)


def run_multiplexed(msys: MultiplexedSystem, u: Orbit, washout: int = 50) -> tuple[Orbit, Orbit]:
    """Concatenated true nodes of all registers and the combined output."""
    z = np.hstack([run_qrc(q, u, washout)[0].values for q in msys.registers])
    return Orbit(z, bound=1.0), Orbit(msys.readout(z))


def random_qrc(N: int, seed: int = 0, tau: float = 1.0, weights=None, const: float = 0.0) -> QrcSystem:
    """Default Ising register with seeded uniform[-1, 1] readout weights."""
    spec = default_ising(N, seed=seed, tau=tau)
    if weights is None:
        weights = stream(seed, "qrc-weights", N).uniform(-1.0, 1.0, size=N)
    return QrcSystem(spec, weights, const, seed)
