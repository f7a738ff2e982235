import math
from itertools import combinations_with_replacement

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from echoverse.errors import DivergenceError
from echoverse.esn import random_esn, reservoir_states
from echoverse.lab import (
    DataSpec,
    FeatureOverflowError,
    TargetFilter,
    algebra_assisted_fit,
    approximation_experiment,
    feature_exponents,
    narma_fixed_point,
    nrmse,
    polynomial_features,
    readout_from_weights,
    ridge_train,
    separation_probe,
    target_eval,
)
from echoverse.signals import Orbit

SMALL = DataSpec(train=300, test=150, washout=50)


# -- features ---------------------------------------------------------------------


def test_feature_examples():
    x = np.array([[2.0, 3.0]])
    assert polynomial_features(x, 0).tolist() == [[1.0]]
    assert polynomial_features(x, 2).tolist() == [[1.0, 2.0, 3.0, 4.0, 6.0, 9.0]]


def test_features_match_power_product_oracle():
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, (4, 3))
    phi = polynomial_features(x, 3)
    oracle = []
    for row in x:
        feats = [1.0]
        for d in range(1, 4):
            for combo in combinations_with_replacement(range(3), d):
                feats.append(math.prod(row[i] for i in combo))
        oracle.append(feats)
    assert np.allclose(phi, oracle, rtol=0, atol=1e-15)
    exps = feature_exponents(3, 3)
    for j, e in enumerate(exps):
        assert np.allclose(phi[:, j], np.prod(x ** np.array(e), axis=1), rtol=0, atol=1e-15)


@pytest.mark.parametrize("N", range(1, 7))
@pytest.mark.parametrize("d", range(0, 5))
def test_feature_count(N, d):
    assert polynomial_features(np.zeros((1, N)), d).shape[1] == math.comb(N + d, d)


def test_feature_overflow_guard():
    with pytest.raises(FeatureOverflowError):
        polynomial_features(np.zeros((1, 200)), 4)


def test_readout_from_weights_evaluates_like_features():
    rng = np.random.default_rng(1)
    x = rng.uniform(-1, 1, (5, 3))
    w = rng.normal(size=math.comb(5, 2))
    p = readout_from_weights(w, 3, 2)
    assert np.allclose(p(x), polynomial_features(x, 2) @ w, rtol=0, atol=1e-14)


# -- ridge regression -----------------------------------------------------------------


def test_ridge_square_interpolation():
    rng = np.random.default_rng(2)
    Phi = rng.normal(size=(8, 8))
    y = rng.normal(size=8)
    w = ridge_train(Phi, y, 0.0)
    assert np.max(np.abs(Phi @ w - y)) <= 1e-10


def test_ridge_regularization_limit():
    rng = np.random.default_rng(3)
    Phi, y = rng.normal(size=(40, 6)), rng.normal(size=40)
    w0 = ridge_train(Phi, y, 0.0)
    assert np.linalg.norm(ridge_train(Phi, y, 1e9)) <= 1e-6 * np.linalg.norm(w0)


def test_ridge_matches_explicit_normal_equations():
    rng = np.random.default_rng(4)
    Phi, y = rng.normal(size=(50, 10)), rng.normal(size=50)
    oracle = np.linalg.inv(Phi.T @ Phi + 0.1 * np.eye(10)) @ Phi.T @ y
    assert np.allclose(ridge_train(Phi, y, 0.1), oracle, rtol=0, atol=1e-9)


def test_ridge_singular_falls_back_with_warning():
    Phi = np.ones((10, 3))
    y = np.full(10, 2.0)
    with pytest.warns(RuntimeWarning):
        w = ridge_train(Phi, y, 0.0)
    assert np.allclose(Phi @ w, y, atol=1e-10)
    assert np.allclose(w, np.linalg.pinv(Phi) @ y, atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32), st.floats(1e-6, 10.0))
def test_ridge_gradient_vanishes(seed, reg):
    rng = np.random.default_rng(seed)
    Phi, y = rng.normal(size=(30, 7)), rng.normal(size=30)
    w = ridge_train(Phi, y, reg)
    grad = 2 * Phi.T @ (Phi @ w - y) + 2 * reg * w
    assert np.linalg.norm(grad) <= 1e-8 * (1 + np.linalg.norm(w))


def test_nrmse():
    y = np.array([1.0, 2.0, 3.0])
    assert nrmse(y, y) == 0.0
    assert nrmse(y + 1.0, y) == pytest.approx(1.0 / np.std(y))
    assert nrmse(np.full(3, 2.0), np.full(3, 2.0)) == 0.0
    assert nrmse(np.full(3, 2.5), np.full(3, 2.0)) == pytest.approx(0.25)


# -- targets ----------------------------------------------------------------------------


def test_target_examples():
    assert np.all(target_eval(TargetFilter("volterra2"), Orbit(np.zeros(20))) == 0)
    u = Orbit([0.5, 2.0, 3.0])
    assert target_eval(TargetFilter("delay-product", {"lags": (0, 1)}), u)[-1] == 6.0
    assert np.all(TargetFilter("constant", {"value": 0.3})(u) == 0.3)
    with pytest.raises(ValueError):
        TargetFilter("bogus")


def test_volterra2_against_double_sum():
    rng = np.random.default_rng(5)
    x = rng.uniform(-1, 1, 50)
    f = TargetFilter("volterra2", {"decay": 0.6, "linear": 0.7, "quadratic": -0.4, "memory": 30})
    out = f(Orbit(x, bound=1.0))
    for t in (0, 10, 49):
        lin = sum(0.6**k * x[t - k] for k in range(30) if t - k >= 0)
        quad = sum(
            0.6 ** (k + l) * x[t - k] * x[t - l] for k in range(30) for l in range(30) if t - k >= 0 and t - l >= 0
        )
        assert out[t] == pytest.approx(0.7 * lin - 0.4 * quad, abs=1e-12)


def test_narma_constant_input_fixed_point():
    # u = 0 on [-1, 1] maps to v = 0.25
    out = TargetFilter("narma", {"order": 2})(Orbit(np.zeros(300), bound=1.0))
    m, v = 2, 0.25
    # y = 0.3 y + 0.05 m y^2 + 1.5 v^2 + 0.1, smallest root
    roots = np.roots([0.05 * m, 0.3 - 1.0, 1.5 * v * v + 0.1])
    stable = min(r.real for r in roots)
    assert out[-1] == pytest.approx(stable, abs=1e-12)
    assert narma_fixed_point(2, v) == pytest.approx(stable, abs=1e-14)


def test_narma_divergence_flagged():
    with pytest.raises(DivergenceError):
        TargetFilter("narma", {"order": 30})(Orbit(np.ones(200), bound=1.0))


def test_target_config_round_trip():
    f = TargetFilter.from_config({"kind": "delay-product", "lags": [0, 2]})
    assert TargetFilter.from_config(f.to_config()) == f


# -- experiments ------------------------------------------------------------------------


def test_experiment_shape_and_determinism():
    f = TargetFilter("volterra2")
    a = approximation_experiment("esn", [5, 10], f, SMALL, seed=3, repeats=2)
    b = approximation_experiment("esn", [5, 10], f, SMALL, seed=3, repeats=2, workers=3)
    assert [(r.capacity, r.repeat) for r in a] == [(5, 0), (5, 1), (10, 0), (10, 1)]
    assert [r.as_row() for r in a] == [r.as_row() for r in b]
    assert all(r.train_nrmse >= 0 and r.test_nrmse >= 0 for r in a)
    c = approximation_experiment("esn", [5, 10], f, SMALL, seed=4, repeats=2)
    assert [r.test_nrmse for r in a] != [r.test_nrmse for r in c]


def test_experiment_rejects_bad_ladder():
    with pytest.raises(ValueError):
        approximation_experiment("esn", [10, 5], TargetFilter(), SMALL)
    with pytest.raises(ValueError):
        approximation_experiment("esn", [], TargetFilter(), SMALL)
    with pytest.raises(ValueError):
        approximation_experiment("spin", [5], TargetFilter(), SMALL)


# every register's qubit-1 node is (1 - 2u)/2^N right after encoding, so
# multiplexed copies share that feature and the normal equations are singular
@pytest.mark.filterwarnings("ignore:singular normal equations")
@pytest.mark.parametrize("family", ["esn", "qrc", "lsm"])
def test_constant_and_self_targets_are_realized(family):
    const = approximation_experiment(family, [2, 3], TargetFilter("constant", {"value": 0.4}), SMALL, degree=1)
    assert all(r.test_nrmse <= 1e-8 for r in const)
    own = approximation_experiment(family, [2, 3], "self", SMALL, degree=1, reg=0.0)
    assert all(r.test_nrmse <= 1e-8 for r in own)


def test_families_learn_something():
    f = TargetFilter("volterra2")
    for family in ("esn", "qrc", "lsm"):
        reports = approximation_experiment(family, [6], f, SMALL, degree=2)
        assert reports[0].test_nrmse < 1.0
    lsm = [r.test_nrmse for r in approximation_experiment("lsm", [1, 3, 6], f, SMALL, degree=2)]
    assert lsm[0] > lsm[1] > lsm[2]


def test_algebra_assisted_fit():
    s1 = random_esn(4, seed=1, input_scale=0.5)
    s2 = random_esn(3, seed=2, input_scale=0.5)
    rep = algebra_assisted_fit(s1, s2, DataSpec(train=600, test=200, washout=100), seed=0)
    assert rep.test_nrmse <= 1e-6


# -- separation --------------------------------------------------------------------------


def test_separation_identical_pair():
    u = Orbit(np.linspace(-1, 1, 20), bound=1.0)
    assert separation_probe("esn", [(u, u)])[0].gap == 0.0
    assert separation_probe("esn", [(u, u)])[0].witness is None


def test_separation_one_step_sensitivity():
    rng = np.random.default_rng(6)
    a = rng.uniform(-1, 1, 30)
    b = a.copy()
    b[-1] = -b[-1]
    u, v = Orbit(a, bound=1.0), Orbit(b, bound=1.0)
    s = random_esn(8, seed=4)
    res = separation_probe("esn", [(u, v)], instances=[s])[0]
    x = reservoir_states(s, a[:-1])[-1]
    direct = np.max(np.abs(np.tanh(s.A @ x + s.B[:, 0] * a[-1]) - np.tanh(s.A @ x + s.B[:, 0] * b[-1])))
    assert res.gap == pytest.approx(direct, abs=1e-15)
    assert res.gap > 0 and res.witness == 0


def test_separation_gap_fades_with_age():
    rng = np.random.default_rng(7)
    a = rng.uniform(-1, 1, 60)
    pairs = []
    for k in (0, 5, 10, 20, 40):
        b = a.copy()
        b[-1 - k] = -b[-1 - k]
        pairs.append((Orbit(a, bound=1.0), Orbit(b, bound=1.0)))
    s = random_esn(10, operator_norm_target=0.6, seed=2)
    gaps = [r.gap for r in separation_probe("esn", pairs, instances=[s])]
    assert all(g1 >= g2 for g1, g2 in zip(gaps, gaps[1:]))
    assert gaps[-1] <= 0.6**40 * 2


def test_separation_other_families():
    rng = np.random.default_rng(8)
    a = rng.uniform(0, 1, 20)
    b = a.copy()
    b[-1] = 1 - b[-1]
    res = separation_probe("qrc", [(Orbit(a, bound=1.0), Orbit(b, bound=1.0))], size=2, tries=2)[0]
    assert res.gap > 0
