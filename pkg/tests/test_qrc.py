import math

import numpy as np
import pytest
from qoracle import (
    dense_trajectory,
    input_state,
    ising_matrix,
    labels,
    partial_trace_first,
    pauli,
    random_density,
    to_vector,
)
from scipy.linalg import expm

from echoverse.errors import DimensionError, StateError
from echoverse.polynomial import Polynomial
from echoverse.qrc import (
    HamiltonianSpec,
    QrcSystem,
    apply_encoding,
    channel_matrix,
    constant_input_fixed_point,
    default_ising,
    density_to_vector,
    encoding_matrix,
    maximally_mixed,
    multiplex,
    multiplex_product,
    multiplex_sum,
    pauli_coefficients,
    pauli_digits,
    pauli_index,
    pauli_label,
    pauli_matrix,
    qrc_convergence,
    qrc_step,
    qrc_trajectory,
    random_qrc,
    run_multiplexed,
    run_qrc,
    true_node_indices,
    validate_state,
    vector_to_density,
)
from echoverse.signals import Orbit


def zero_hamiltonian(N, tau=1.0):
    return HamiltonianSpec("dense", dense=np.zeros((2**N, 2**N)), tau=tau)


# -- Pauli basis ----------------------------------------------------------------


def test_index_examples():
    assert [pauli_index(c) for c in "IXYZ"] == [0, 1, 2, 3]
    assert [pauli_index([d]) for d in ("00", "01", "10", "11")] == [0, 1, 2, 3]
    assert pauli_index("ZI") == 12 == 0b1100
    assert pauli_label(12, 2) == "ZI"
    with pytest.raises(ValueError):
        pauli_index([4])
    with pytest.raises(ValueError):
        pauli_index(["12"])


def test_index_round_trip():
    rng = np.random.default_rng(0)
    for N in (1, 2, 3, 5):
        for i in rng.integers(0, 4**N, 20):
            assert pauli_index(pauli_digits(int(i), N)) == i


def test_pauli_matrices_match_kron_oracle():
    for N in (1, 2, 3):
        for i, s in enumerate(labels(N)):
            assert np.array_equal(pauli_matrix(i, N), pauli(s))


def test_fast_decomposition_matches_trace_oracle():
    rng = np.random.default_rng(1)
    for N in (1, 2, 3, 4):
        M = rng.normal(size=(2**N, 2**N)) + 1j * rng.normal(size=(2**N, 2**N))
        oracle = [np.trace(pauli(s) @ M) for s in labels(N)]
        assert np.allclose(pauli_coefficients(M), oracle, rtol=0, atol=1e-12)


def test_true_nodes_are_single_z():
    for N in (1, 2, 3, 4):
        nodes = true_node_indices(N)
        assert [pauli_label(i, N) for i in nodes] == ["I" * l + "Z" + "I" * (N - 1 - l) for l in range(N)]


# -- states --------------------------------------------------------------------------


def test_state_examples():
    for N in (1, 2, 3):
        r = density_to_vector(np.eye(2**N) / 2**N)
        assert r[0] == 1 / 2**N and np.all(r[1:] == 0)
    zero = np.diag([1.0, 0.0])
    assert np.allclose(density_to_vector(zero), [0.5, 0, 0, 0.5], atol=1e-15)
    bell = np.zeros(4)
    bell[[0, 3]] = 1 / math.sqrt(2)
    r = density_to_vector(np.outer(bell, bell))
    expected = dict(II=0.25, XX=0.25, YY=-0.25, ZZ=0.25)
    for i, s in enumerate(labels(2)):
        assert r[i] == pytest.approx(expected.get(s, 0.0), abs=1e-15)


def test_state_round_trip_and_oracle():
    rng = np.random.default_rng(2)
    for N in (1, 2, 3):
        rho = random_density(rng, N)
        r = density_to_vector(rho)
        assert np.allclose(r, to_vector(rho), rtol=0, atol=1e-14)
        assert np.allclose(vector_to_density(r), rho, rtol=0, atol=1e-12)
        assert np.allclose(sum(ri * pauli(s) for ri, s in zip(r, labels(N))), rho, atol=1e-12)


def test_state_errors():
    with pytest.raises(StateError):
        density_to_vector(np.diag([0.7, 0.7]))
    with pytest.raises(StateError):
        density_to_vector(np.array([[0.5, 1.0], [0.0, 0.5]]))
    with pytest.raises(DimensionError):
        density_to_vector(np.eye(3) / 3)


def test_validate_state():
    d = validate_state(maximally_mixed(2))
    assert d.ok and d.min_eigenvalue == pytest.approx(0.25)
    bad = maximally_mixed(2).copy()
    bad[0] = 0.3
    d = validate_state(bad)
    assert not d.trace_ok and d.expected_trace == 0.25
    neg = maximally_mixed(1).copy()
    neg[3] = 0.9
    assert not validate_state(neg).positive_ok


# -- encoding ---------------------------------------------------------------------------


def test_encoding_examples():
    rng = np.random.default_rng(3)
    r = density_to_vector(random_density(rng, 1))
    assert np.allclose(encoding_matrix(0.0, 1) @ r, [0.5, 0, 0, 0.5], rtol=0, atol=1e-15)
    assert np.allclose(encoding_matrix(0.5, 1) @ r, [0.5, 0, 0, 0], rtol=0, atol=1e-15)
    with pytest.raises(ValueError):
        encoding_matrix(1.5, 1)


def test_encoding_matches_partial_trace_oracle():
    rng = np.random.default_rng(4)
    for N in (2, 3):
        rho = random_density(rng, N)
        r = density_to_vector(rho)
        oracle = to_vector(np.kron(input_state(0.3), partial_trace_first(rho)))
        assert np.allclose(encoding_matrix(0.3, N) @ r, oracle, rtol=0, atol=1e-14)
        assert np.allclose(apply_encoding(r, 0.3), encoding_matrix(0.3, N) @ r, rtol=0, atol=0)


@pytest.mark.parametrize("N", [1, 2, 3])
def test_encoding_preserves_trace_and_positivity(N):
    rng = np.random.default_rng(N)
    for _ in range(200):
        r = density_to_vector(random_density(rng, N, rank=int(rng.integers(1, 2**N + 1))))
        out = apply_encoding(r, float(rng.uniform()))
        d = validate_state(out)
        assert d.trace_ok and d.positive_ok


# -- channel ----------------------------------------------------------------------------


def test_channel_examples():
    assert np.array_equal(channel_matrix(zero_hamiltonian(2)), np.eye(16))
    U = channel_matrix(HamiltonianSpec("dense", dense=(math.pi / 2) * pauli("X"), tau=1.0))
    assert np.allclose(U, np.diag([1, 1, -1, -1]), rtol=0, atol=1e-12)


def test_channel_matches_expm_oracle():
    rng = np.random.default_rng(5)
    for N in (1, 2, 3):
        spec = default_ising(N, seed=int(rng.integers(1000)), tau=0.7)
        H = ising_matrix(spec.couplings, spec.fields)
        assert np.allclose(spec.matrix(), H, atol=1e-15)
        V = expm(-1j * 0.7 * H)
        rho = random_density(rng, N)
        lhs = channel_matrix(spec) @ to_vector(rho)
        assert np.allclose(lhs, to_vector(V @ rho @ V.conj().T), rtol=0, atol=1e-12)


def test_channel_orthogonal_and_semigroup():
    for seed in range(5):
        spec = default_ising(2, seed=seed)
        U = channel_matrix(spec)
        assert np.max(np.abs(U.T @ U - np.eye(16))) <= 1e-10
        e0 = np.eye(16)[0]
        assert np.allclose(U @ e0, e0, atol=1e-14)
        U1, U2 = channel_matrix(spec.scaled(0.4)), channel_matrix(spec.scaled(0.9))
        assert np.max(np.abs(channel_matrix(spec.scaled(1.3)) - U2 @ U1)) <= 1e-10


def test_channel_rejects_non_hermitian():
    with pytest.raises(ValueError):
        channel_matrix(HamiltonianSpec("dense", dense=np.array([[0, 1], [0, 0]]), tau=1.0))


def test_default_ising_convention():
    spec = default_ising(3, seed=4)
    J = spec.couplings
    assert np.allclose(J, J.T) and np.all(np.diag(J) == 0)
    assert np.all(np.abs(J) <= 1 / math.sqrt(3))
    assert np.all(spec.fields == 1.0) and spec.tau == 1.0


# -- dynamics ---------------------------------------------------------------------------


def test_step_examples():
    q = QrcSystem(zero_hamiltonian(1), [1.0])
    rng = np.random.default_rng(6)
    r = density_to_vector(random_density(rng, 1))
    assert np.allclose(qrc_step(r, 0.0, q), [0.5, 0, 0, 0.5], atol=1e-15)
    with pytest.raises(StateError):
        qrc_step(np.zeros(4), 0.0, q)


def test_step_keeps_second_qubit_marginal_without_dynamics():
    rng = np.random.default_rng(7)
    rho1, rho2 = random_density(rng, 1), random_density(rng, 1)
    q = QrcSystem(zero_hamiltonian(2), [1.0, 1.0])
    out = vector_to_density(qrc_step(density_to_vector(np.kron(rho1, rho2)), 0.3, q))
    assert np.allclose(partial_trace_first(out), rho2, atol=1e-14)


def test_trajectory_matches_dense_simulation():
    rng = np.random.default_rng(8)
    for N in (2, 3):
        spec = default_ising(N, seed=N)
        q = QrcSystem(spec, np.ones(N))
        inputs = rng.uniform(0, 1, 20)
        traj = qrc_trajectory(q, inputs)
        dense = dense_trajectory(ising_matrix(spec.couplings, spec.fields), spec.tau, inputs)
        for r, rho in zip(traj, dense):
            assert np.max(np.abs(r - to_vector(rho))) <= 1e-10


def test_run_examples():
    rng = np.random.default_rng(9)
    u = Orbit(rng.uniform(0, 1, 30), bound=1.0)
    q = QrcSystem(zero_hamiltonian(1), [2.0])
    z, y = run_qrc(q, u, washout=0)
    # the reset channel leaves <Z>/2 = (1 - 2 u_t)/2 right after ingesting u_t
    assert np.allclose(z.scalar, (1 - 2 * u.scalar) / 2, rtol=0, atol=1e-15)
    assert np.allclose(y.scalar, 2.0 * z.scalar, rtol=0, atol=1e-15)
    assert np.all(run_qrc(q.with_readout([0.0]), u, washout=5)[1].scalar == 0)
    with pytest.raises(ValueError):
        run_qrc(q, Orbit([0.5, 1.5]), washout=0)


def test_constant_input_fixed_point():
    q = random_qrc(2, seed=3)
    fixed = constant_input_fixed_point(q, 0.3)
    assert fixed[0] == pytest.approx(0.25)
    traj = qrc_trajectory(q, np.full(400, 0.3))
    assert np.max(np.abs(traj[-1] - fixed)) <= 1e-8


def test_empirical_convergence_diagnostic():
    q = random_qrc(2, seed=1)
    u = Orbit(np.random.default_rng(0).uniform(0, 1, 200), bound=1.0)
    a = maximally_mixed(2)
    b = density_to_vector(np.diag([1.0, 0, 0, 0]).astype(complex))
    d = qrc_convergence(q, u, a, b)
    assert d[-1] < 1e-3 * d[0]


def test_readout_linearity():
    q = random_qrc(3, seed=2)
    u = Orbit(np.random.default_rng(1).uniform(0, 1, 60), bound=1.0)
    w1, w2, alpha = np.array([1.0, -2.0, 0.5]), np.array([0.3, 0.3, 0.1]), 1.7
    y = run_qrc(q.with_readout(alpha * w1 + w2), u)[1].scalar
    y1, y2 = run_qrc(q.with_readout(w1), u)[1].scalar, run_qrc(q.with_readout(w2), u)[1].scalar
    assert np.allclose(y, alpha * y1 + y2, rtol=0, atol=1e-12)


def test_json_round_trip(tmp_path):
    q = random_qrc(2, seed=11, const=0.5)
    q.save(tmp_path / "q.json")
    back = QrcSystem.load(tmp_path / "q.json")
    assert np.array_equal(back.channel, q.channel) and np.array_equal(back.weights, q.weights)
    assert back.const == 0.5
    seeded = QrcSystem.from_json({"kind": "qrc", "N": 2, "seed": 11})
    assert np.array_equal(seeded.hamiltonian.couplings, default_ising(2, seed=11).couplings)


# -- multiplexing --------------------------------------------------------------------------


def test_multiplex_identities():
    u = Orbit(np.random.default_rng(2).uniform(0, 1, 80), bound=1.0)
    q1 = random_qrc(2, seed=1)
    y1 = run_qrc(q1, u)[1].scalar
    one = QrcSystem(zero_hamiltonian(1), [0.0], const=1.0)
    assert np.allclose(run_multiplexed(multiplex_product(q1, one), u)[1].scalar, y1, rtol=0, atol=1e-12)
    q2 = random_qrc(1, seed=2)
    assert np.allclose(run_multiplexed(multiplex_sum(q1, q2, 0.0), u)[1].scalar, y1, rtol=0, atol=1e-12)


def test_multiplex_matches_independent_runs():
    u = Orbit(np.random.default_rng(3).uniform(0, 1, 120), bound=1.0)
    q1, q2 = random_qrc(2, seed=5), random_qrc(1, seed=6)
    y1, y2 = run_qrc(q1, u)[1].scalar, run_qrc(q2, u)[1].scalar
    z, yp = run_multiplexed(multiplex_product(q1, q2), u)
    assert z.dim == 3
    assert np.max(np.abs(yp.scalar - y1 * y2)) <= 1e-12
    ys = run_multiplexed(multiplex_sum(q1, q2, -0.7), u)[1].scalar
    assert np.max(np.abs(ys - (y1 - 0.7 * y2))) <= 1e-12
    # nesting: (q1 * q2) + q1
    nested = multiplex_sum(multiplex_product(q1, q2), q1)
    assert np.max(np.abs(run_multiplexed(nested, u)[1].scalar - (y1 * y2 + y1))) <= 1e-12


def test_multiplex_default_readout_and_errors():
    q1, q2 = random_qrc(1, seed=1), random_qrc(2, seed=2)
    m = multiplex([q1, q2])
    assert m.n_nodes == 3
    assert m.readout == Polynomial.linear(list(q1.weights) + list(q2.weights))
    with pytest.raises(DimensionError):
        multiplex([q1, q2], Polynomial.linear([1.0]))
