"""Measurement operators: adjoint pairing, isometry statistics, serialization.

Brute-force oracles are computed inline with explicit loops so every identity
is checked against code that shares nothing with the einsum implementations.
"""

import numpy as np
import pytest

from pgflow.errors import RankTooHigh, ShapeMismatch
from pgflow.linalg import frob
from pgflow.measurement import (
    MeasOp,
    adjoint,
    apply,
    ea_bound,
    estimate_rip,
    gaussian_operator,
    identity_operator,
    measurement_error,
    operator_from_json,
    operator_to_json,
    rip_deviation,
)


def rng(seed):
    return np.random.default_rng(np.random.Philox(seed))


# ---------------------------------------------------------------- construction


def test_gaussian_operator_deterministic():
    a = gaussian_operator(4, 5, 30, seed=9)
    b = gaussian_operator(4, 5, 30, seed=9)
    assert np.array_equal(a.mats, b.mats)
    c = gaussian_operator(4, 5, 30, seed=10)
    assert not np.array_equal(a.mats, c.mats)


def test_gaussian_frame_variance():
    # entries are Normal(0, 1/N); with N*m*n = 48000 samples the empirical
    # second moment lands within a few percent
    op = gaussian_operator(8, 6, 1000, seed=0)
    assert op.mats.shape == (1000, 8, 6)
    second = float(np.mean(op.mats**2)) * op.N
    assert abs(second - 1.0) < 0.05


def test_identity_operator_shape():
    op = identity_operator(3, 4)
    assert op.N == 12 and op.kind == "identity" and op.mats is None


def test_operator_rejects_bad_dims():
    with pytest.raises(ShapeMismatch):
        gaussian_operator(0, 3, 5, seed=1)
    with pytest.raises(ShapeMismatch):
        identity_operator(3, 0)


# ------------------------------------------------------------- apply / adjoint


def test_apply_linear():
    op = gaussian_operator(5, 4, 20, seed=2)
    g = rng(0)
    X, Z = g.normal(size=(5, 4)), g.normal(size=(5, 4))
    lhs = apply(op, 2.0 * X - 3.0 * Z)
    rhs = 2.0 * apply(op, X) - 3.0 * apply(op, Z)
    assert np.allclose(lhs, rhs, atol=1e-13)


def test_apply_brute_force():
    op = gaussian_operator(3, 4, 7, seed=5)
    X = rng(1).normal(size=(3, 4))
    y = apply(op, X)
    for k in range(7):
        assert y[k] == pytest.approx(float(np.sum(op.mats[k] * X)), abs=1e-14)


def test_adjoint_pairing():
    # <A(X), y> = <X, A*(y)> for both kinds
    for op in [gaussian_operator(4, 6, 15, seed=3), identity_operator(4, 6)]:
        g = rng(2)
        X = g.normal(size=(4, 6))
        y = g.normal(size=(op.N,))
        lhs = float(apply(op, X) @ y)
        rhs = float(np.sum(X * adjoint(op, y)))
        assert lhs == pytest.approx(rhs, rel=1e-12)


def test_identity_apply_roundtrip():
    op = identity_operator(3, 5)
    X = rng(3).normal(size=(3, 5))
    assert np.array_equal(adjoint(op, apply(op, X)), X)


def test_apply_shape_checks():
    op = gaussian_operator(3, 4, 6, seed=0)
    with pytest.raises(ShapeMismatch):
        apply(op, np.zeros((4, 3)))
    with pytest.raises(ShapeMismatch):
        adjoint(op, np.zeros(5))


# ---------------------------------------------------------- measurement_error


def test_measurement_error_identity_is_exact_zero():
    op = identity_operator(4, 4)
    g = rng(4)
    E = measurement_error(op, g.normal(size=(4, 4)), g.normal(size=(4, 2)), g.normal(size=(4, 2)))
    assert np.array_equal(E, np.zeros((4, 4)))


def test_measurement_error_brute_force():
    op = gaussian_operator(4, 3, 11, seed=7)
    g = rng(5)
    Y = g.normal(size=(4, 3))
    U = g.normal(size=(4, 2))
    V = g.normal(size=(3, 2))
    Z = Y - U @ V.T
    # loop oracle for (A*A)(Z) - Z
    acc = np.zeros((4, 3))
    for k in range(11):
        acc += float(np.sum(op.mats[k] * Z)) * op.mats[k]
    assert np.allclose(measurement_error(op, Y, U, V), acc - Z, atol=1e-13)


def test_measurement_error_shape_checks():
    op = gaussian_operator(4, 3, 5, seed=0)
    with pytest.raises(ShapeMismatch):
        measurement_error(op, np.zeros((3, 4)), np.zeros((4, 1)), np.zeros((3, 1)))
    with pytest.raises(ShapeMismatch):
        measurement_error(op, np.zeros((4, 3)), np.zeros((4, 2)), np.zeros((3, 1)))


# ------------------------------------------------------------- rip estimation


def test_estimate_rip_deterministic_and_prefix_monotone():
    op = gaussian_operator(6, 5, 80, seed=1)
    a = estimate_rip(op, probe_rank=2, trials=50, seed=3)
    b = estimate_rip(op, probe_rank=2, trials=50, seed=3)
    assert a.rho_hat == b.rho_hat
    # probes are drawn sequentially, so more trials can only raise the max
    c = estimate_rip(op, probe_rank=2, trials=100, seed=3)
    assert c.rho_hat >= a.rho_hat


def test_estimate_rip_identity_is_zero():
    op = identity_operator(5, 5)
    est = estimate_rip(op, probe_rank=2, trials=25, seed=0)
    assert est.rho_hat == pytest.approx(0.0, abs=1e-12)


def test_estimate_rip_vacuous_trials_warns():
    op = identity_operator(3, 3)
    with pytest.warns(UserWarning):
        est = estimate_rip(op, probe_rank=1, trials=0, seed=0)
    assert est.rho_hat == 0.0 and est.trials == 0


def test_estimate_rip_unbiased_energy():
    # E ||A(X)||^2 = 1 for normalized X; with 1000 probes of an N=200 operator
    # the mean deviation is well inside 0.05
    op = gaussian_operator(6, 6, 200, seed=11)
    g = rng(6)
    devs = []
    for _ in range(1000):
        X = g.normal(size=(6, 2)) @ g.normal(size=(2, 6))
        X /= frob(X)
        devs.append(float(np.sum(apply(op, X) ** 2)))
    assert abs(np.mean(devs) - 1.0) < 0.05


def test_estimate_rip_rejects_bad_args():
    op = identity_operator(3, 3)
    with pytest.raises(ValueError):
        estimate_rip(op, probe_rank=0, trials=5, seed=0)
    with pytest.raises(ValueError):
        estimate_rip(op, probe_rank=1, trials=-1, seed=0)


def test_single_frame_operator_fails_rip():
    # one Gaussian measurement cannot be near-isometric on rank-1 inputs:
    # a handful of probes already push the sampled deviation past 0.5
    hits = 0
    for seed in range(100):
        op = gaussian_operator(5, 5, 1, seed=seed)
        est = estimate_rip(op, probe_rank=1, trials=10, seed=seed + 1000)
        hits += est.rho_hat >= 0.5
    assert hits >= 99


# -------------------------------------------------------------- rip_deviation


def test_rip_deviation_identity_zero():
    op = identity_operator(4, 4)
    g = rng(7)
    X = g.normal(size=(4, 1)) @ g.normal(size=(1, 4))
    assert rip_deviation(op, X, r=1) == 0.0


def test_rip_deviation_matches_measurement_error():
    op = gaussian_operator(5, 4, 60, seed=13)
    g = rng(8)
    U = g.normal(size=(5, 2))
    V = g.normal(size=(4, 2))
    X = U @ V.T
    # same quantity through the residual path with Y = X, UV^T = 0
    E = measurement_error(op, X, np.zeros((5, 1)), np.zeros((4, 1)))
    assert rip_deviation(op, X, r=2) == pytest.approx(np.linalg.norm(E, 2), rel=1e-12)


def test_rip_deviation_rejects_high_rank():
    op = gaussian_operator(4, 4, 30, seed=0)
    X = rng(9).normal(size=(4, 4))  # full rank almost surely
    with pytest.raises(RankTooHigh) as ei:
        rip_deviation(op, X, r=2)
    assert ei.value.rank == 2 and ei.value.sigma_next > 0


# ------------------------------------------------------------------- ea_bound


def test_ea_bound_arithmetic():
    # 2 sqrt(r) rho (normR + (min(m,n)/(2r) + 1) sig2)
    got = ea_bound(norm_R=2.0, sigma_r1_W_sq=0.5, r=4, rho=0.1, m=10, n=8)
    want = 2.0 * 2.0 * 0.1 * (2.0 + (8.0 / 8.0 + 1.0) * 0.5)
    assert got == pytest.approx(want, rel=1e-15)


def test_ea_bound_zero_rho():
    assert ea_bound(5.0, 1.0, 2, 0.0, 6, 6) == 0.0


# -------------------------------------------------------------- serialization


def test_operator_json_roundtrip_gaussian():
    op = gaussian_operator(4, 7, 25, seed=21)
    op2 = operator_from_json(operator_to_json(op))
    assert (op2.m, op2.n, op2.N, op2.kind, op2.seed) == (4, 7, 25, "gaussian", 21)
    assert np.array_equal(op2.mats, op.mats)  # frames regenerate bit-identically


def test_operator_json_roundtrip_identity():
    op = identity_operator(6, 2)
    op2 = operator_from_json(operator_to_json(op))
    assert op2.kind == "identity" and op2.mats is None and op2.N == 12


def test_operator_json_no_binary_payload():
    text = operator_to_json(gaussian_operator(3, 3, 500, seed=1))
    assert len(text) < 200


def test_operator_from_json_unknown_kind():
    with pytest.raises(ValueError):
        operator_from_json('{"m": 2, "n": 2, "N": 4, "kind": "fourier", "seed": 0}')
