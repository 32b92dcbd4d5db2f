"""Linear measurement operators on matrices.

An operator A maps an m x n matrix to N scalars.  Two kinds are supported:

* ``gaussian``  - N frames with i.i.d. Normal(0, 1/N) entries, so that
  E ||A(X)||^2 = ||X||_F^2.  The frames are a pure function of
  (m, n, N, seed) under the Philox counter-based generator, which is what
  makes the JSON serialization below binary-free.
* ``identity``  - A(X) = vec(X) with N = m * n.  Exactly isometric, so every
  downstream quantity built from A*A - I is exactly zero.

The near-isometry deviation rho of an operator on low-rank inputs can only be
*falsified* by sampling: ``estimate_rip`` returns a max over random probes,
hence a lower bound on the true restricted deviation.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import RankTooHigh, ShapeMismatch
from .linalg import frob, opnorm, svdvals

KINDS = ("gaussian", "identity")


@dataclass(frozen=True, eq=False)
class MeasOp:
    m: int
    n: int
    N: int
    kind: str
    seed: int
    mats: np.ndarray | None  # (N, m, n) for gaussian, None for identity


def gaussian_operator(m: int, n: int, N: int, seed: int) -> MeasOp:
    if m < 1 or n < 1 or N < 1:
        raise ShapeMismatch(f"operator dimensions must be positive, got m={m}, n={n}, N={N}")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    mats = rng.normal(0.0, 1.0 / np.sqrt(N), size=(N, m, n))
    return MeasOp(m=m, n=n, N=N, kind="gaussian", seed=int(seed), mats=mats)


def identity_operator(m: int, n: int) -> MeasOp:
    if m < 1 or n < 1:
        raise ShapeMismatch(f"operator dimensions must be positive, got m={m}, n={n}")
    return MeasOp(m=m, n=n, N=m * n, kind="identity", seed=0, mats=None)


def _check_input(op: MeasOp, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.shape != (op.m, op.n):
        raise ShapeMismatch(f"expected a {op.m} x {op.n} matrix, got shape {X.shape}")
    return X


def apply(op: MeasOp, X) -> np.ndarray:
    """A(X): length-N measurement vector, entry i = <mats[i], X>."""
    X = _check_input(op, X)
    if op.kind == "identity":
        return X.ravel().copy()
    return np.einsum("kij,ij->k", op.mats, X)


def adjoint(op: MeasOp, y) -> np.ndarray:
    """A*(y) = sum_i y_i mats[i], an m x n matrix."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (op.N,):
        raise ShapeMismatch(f"expected a length-{op.N} vector, got shape {y.shape}")
    if op.kind == "identity":
        return y.reshape(op.m, op.n).copy()
    return np.einsum("k,kij->ij", y, op.mats)


def measurement_error(op: MeasOp, Y, U, V) -> np.ndarray:
    """(A*A - I)(Y - U V^T): the deviation of the measured gradient direction
    from the true residual.  Exactly zero for the identity kind."""
    Y = np.asarray(Y, dtype=np.float64)
    U = np.asarray(U, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    if Y.shape != (op.m, op.n) or U.shape[0] != op.m or V.shape[0] != op.n:
        raise ShapeMismatch(
            f"incompatible shapes Y{Y.shape}, U{U.shape}, V{V.shape} for a {op.m} x {op.n} operator"
        )
    if U.shape[1] != V.shape[1]:
        raise ShapeMismatch(f"U and V must share the inner dimension, got {U.shape} and {V.shape}")
    Z = Y - U @ V.T
    if op.kind == "identity":
        return np.zeros_like(Z)
    return adjoint(op, apply(op, Z)) - Z


@dataclass(frozen=True)
class RipEstimate:
    rho_hat: float
    trials: int
    probe_rank: int
    seed: int


def estimate_rip(op: MeasOp, probe_rank: int, trials: int, seed: int) -> RipEstimate:
    """Sampled lower bound on the restricted deviation

        max over rank-<=probe_rank X of |  ||A(X)||^2 / ||X||_F^2  -  1 |.

    Probes are products of two standard Gaussian factors, Frobenius
    normalized.  This can only falsify a hoped-for rho (the max over a finite
    sample never exceeds the supremum); it cannot certify it.
    """
    if probe_rank < 1:
        raise ValueError(f"probe_rank must be >= 1, got {probe_rank}")
    if trials < 0:
        raise ValueError(f"trials must be >= 0, got {trials}")
    if trials == 0:
        warnings.warn("estimate_rip called with trials=0: rho_hat=0 is vacuous", stacklevel=2)
        return RipEstimate(rho_hat=0.0, trials=0, probe_rank=probe_rank, seed=int(seed))
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    worst = 0.0
    for _ in range(trials):
        G1 = rng.standard_normal((op.m, probe_rank))
        G2 = rng.standard_normal((probe_rank, op.n))
        X = G1 @ G2
        X /= frob(X)
        dev = abs(float(np.sum(apply(op, X) ** 2)) - 1.0)
        worst = max(worst, dev)
    return RipEstimate(rho_hat=worst, trials=trials, probe_rank=probe_rank, seed=int(seed))


def rip_deviation(op: MeasOp, X, r: int) -> float:
    """||(A*A)(X) - X||_2 for a rank-<=r input, the pointwise witness of the
    near-isometry defect.  Raises RankTooHigh when sigma_{r+1}(X) is not
    negligible relative to sigma_1(X)."""
    X = _check_input(op, X)
    s = svdvals(X)
    if r < s.size and s[0] > 0.0 and s[r] > 1e-8 * s[0]:
        raise RankTooHigh(float(s[r]), r)
    return opnorm(adjoint(op, apply(op, X)) - X)


def ea_bound(norm_R: float, sigma_r1_W_sq: float, r: int, rho: float, m: int, n: int) -> float:
    """Deterministic ceiling on the lifted measurement-error dilation norm:

        2 sqrt(r) * rho * ( ||R|| + (min(m, n)/(2r) + 1) * sigma_{r+1}(W)^2 ).
    """
    return 2.0 * np.sqrt(r) * rho * (norm_R + (min(m, n) / (2.0 * r) + 1.0) * sigma_r1_W_sq)


def operator_to_json(op: MeasOp) -> str:
    """Portable JSON header; gaussian frames are regenerated from the seed."""
    return json.dumps(
        {"m": op.m, "n": op.n, "N": op.N, "kind": op.kind, "seed": op.seed},
        sort_keys=True,
    )


def operator_from_json(text: str) -> MeasOp:
    header = json.loads(text)
    kind = header["kind"]
    if kind == "identity":
        return identity_operator(header["m"], header["n"])
    if kind == "gaussian":
        return gaussian_operator(header["m"], header["n"], header["N"], header["seed"])
    raise ValueError(f"unknown operator kind {kind!r}; expected one of {KINDS}")
