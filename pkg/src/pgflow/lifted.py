"""Lifted coordinates for asymmetric factorized matrix sensing.

The two factors U (m x h) and V (n x h) are stacked into W = [U; V].  With

    Yhat = [[0, Y], [Y^T, 0]],        J = diag(I_m, -I_n),

the residual dilation R = Yhat - (W W^T - J W W^T J)/2 has off-diagonal
blocks Y - U V^T, and X = Yhat + J W W^T J / 2 satisfies R = X - W W^T / 2.
The imbalance W^T J W = U^T U - V^T V is the conserved charge of the exact
flow.

A canonical target is diagonal with nonnegative decreasing entries.  In that
frame three row selections split R^(m+n) into the signal pair directions
(PA), the nuisance coordinates (PN) and the reflected pair directions
(PA @ J); stacked they form an orthogonal matrix which diagonalizes Yhat
(entries +sigma_i, then zeros, then -sigma_i).

The derived per-state quantities are

    A    = PA @ W                    signal alignment, r x h
    Adag = A^T (A A^T)^{-1}          right pseudoinverse
    Q    = Adag @ A                  projection onto the alignment row space
    Wtilde = W (I - Q)               nuisance component
    F    = PP @ W @ Adag             off-alignment transfer coefficients
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DimensionError, RankDeficient, ShapeMismatch
from .linalg import opnorm, pinv_wide, svdvals
from .reports import InvariantReport

DIAG_RANK_TOL = 1e-12
DERIVE_RANK_TOL = 1e-12


class Projections(NamedTuple):
    PA: np.ndarray  # r x (m+n)
    PN: np.ndarray  # (m+n-2r) x (m+n)
    PP: np.ndarray  # (m+n-r) x (m+n), rows = [PN; PA @ J]


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    m: int
    n: int
    r: int
    h: int
    Y: np.ndarray  # canonical m x n target: diagonal, nonnegative, decreasing
    norm_Y: float
    Y_rr: float
    kappa: float  # norm_Y / Y_rr
    gamma: float  # min(m, n) / r
    alpha: float
    delta: float
    epsilon: float
    eta: float
    rho_target: float
    T1: float  # alignment horizon  5/(4 Y_rr) * ln(alpha^4 Y_rr / eps^2)
    T2: float  # warm-up horizon    5/Y_rr    * ln(Y_rr / eps^2)
    beta: float  # delta^2 / (20 T2 norm_Y)
    delta_eff: float | None = None  # monitoring-only delta, outside the theorem

    @property
    def monitor_delta(self) -> float:
        return self.delta if self.delta_eff is None else self.delta_eff

    @property
    def Yhat(self) -> np.ndarray:
        return dilate_target(self.Y)

    @property
    def Jsign(self) -> np.ndarray:
        return sign_split(self.m, self.n)

    @property
    def projections(self) -> Projections:
        return build_projections(self.m, self.n, self.r)


def sign_split(m: int, n: int) -> np.ndarray:
    """Diagonal of J = diag(I_m, -I_n) as a length m+n sign vector."""
    return np.concatenate([np.ones(m), -np.ones(n)])


def dilate_target(Y: np.ndarray) -> np.ndarray:
    m, n = Y.shape
    Yhat = np.zeros((m + n, m + n))
    Yhat[:m, m:] = Y
    Yhat[m:, :m] = Y.T
    return Yhat


def dilate_offdiag(B: np.ndarray) -> np.ndarray:
    """Self-adjoint dilation [[0, B], [B^T, 0]] of an arbitrary block."""
    return dilate_target(np.asarray(B, dtype=np.float64))


def synthesize_target(m: int, n: int, r: int, kappa: float, Y_rr: float = 1.0) -> np.ndarray:
    """Diagonal m x n target with r geometrically spaced values from
    kappa * Y_rr down to Y_rr (endpoints exact)."""
    if r > min(m, n):
        raise DimensionError(f"rank {r} exceeds min(m, n) = {min(m, n)}")
    if r < 1:
        raise DimensionError(f"rank must be >= 1, got {r}")
    if kappa < 1.0:
        raise ValueError(f"condition number must be >= 1, got {kappa}")
    if r == 1 and kappa != 1.0:
        raise ValueError("a rank-1 target has a single value; kappa must be 1")
    exponents = np.linspace(1.0, 0.0, r)
    values = Y_rr * kappa**exponents
    Y = np.zeros((m, n))
    Y[np.arange(r), np.arange(r)] = values
    return Y


def canonicalize(Y_raw) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Rotate an arbitrary target into the canonical diagonal frame.

    Returns (Y, left, right) with Y_raw = left @ Y @ right.T, left/right
    orthogonal, and Y diagonal with nonnegative decreasing diagonal.  An
    already-canonical input comes back unchanged with identity rotations.
    """
    Y_raw = np.asarray(Y_raw, dtype=np.float64)
    if Y_raw.ndim != 2:
        raise ShapeMismatch(f"expected a matrix, got shape {Y_raw.shape}")
    m, n = Y_raw.shape
    diag = np.diagonal(Y_raw)
    off = Y_raw.copy()
    off[np.arange(min(m, n)), np.arange(min(m, n))] = 0.0
    if not off.any() and np.all(diag >= 0.0) and np.all(np.diff(diag) <= 0.0):
        return Y_raw.copy(), np.eye(m), np.eye(n)
    L, s, Rh = np.linalg.svd(Y_raw, full_matrices=True)
    Y = np.zeros((m, n))
    Y[np.arange(s.size), np.arange(s.size)] = s
    return Y, L, Rh.T.copy()


def _check_canonical(Y: np.ndarray, r: int) -> np.ndarray:
    m, n = Y.shape
    k = min(m, n)
    if r > k:
        raise DimensionError(f"rank {r} exceeds min(m, n) = {k}")
    diag = np.diagonal(Y)
    off = Y.copy()
    off[np.arange(k), np.arange(k)] = 0.0
    if off.any():
        raise ValueError("target is not canonical: off-diagonal entries present")
    if np.any(diag < 0.0) or np.any(np.diff(diag) > 0.0):
        raise ValueError("target is not canonical: diagonal must be nonnegative decreasing")
    top = diag[0] if k else 0.0
    if r < k and diag[r] > DIAG_RANK_TOL * max(top, 1.0):
        raise RankDeficient(float(diag[r]), f"target has rank above {r}: sigma_{r+1} = {diag[r]:.3e}")
    if diag[r - 1] <= 0.0:
        raise RankDeficient(float(diag[r - 1]), f"target has rank below {r}")
    return diag


def make_problem_spec(
    m: int,
    n: int,
    r: int,
    h: int,
    Y,
    alpha: float,
    delta: float,
    epsilon: float,
    eta: float,
    rho_target: float,
    delta_eff: float | None = None,
) -> ProblemSpec:
    Y = np.asarray(Y, dtype=np.float64)
    if Y.shape != (m, n):
        raise ShapeMismatch(f"target shape {Y.shape} does not match m={m}, n={n}")
    if h < r:
        raise DimensionError(f"factor width h={h} is below the target rank r={r}")
    diag = _check_canonical(Y, r)
    norm_Y = float(diag[0])
    Y_rr = float(diag[r - 1])
    T1 = 5.0 / (4.0 * Y_rr) * np.log(alpha**4 * Y_rr / epsilon**2)
    T2 = 5.0 / Y_rr * np.log(Y_rr / epsilon**2)
    beta = delta**2 / (20.0 * T2 * norm_Y)
    return ProblemSpec(
        m=m,
        n=n,
        r=r,
        h=h,
        Y=Y,
        norm_Y=norm_Y,
        Y_rr=Y_rr,
        kappa=norm_Y / Y_rr,
        gamma=min(m, n) / r,
        alpha=float(alpha),
        delta=float(delta),
        epsilon=float(epsilon),
        eta=float(eta),
        rho_target=float(rho_target),
        T1=float(T1),
        T2=float(T2),
        beta=float(beta),
        delta_eff=None if delta_eff is None else float(delta_eff),
    )


def beta_pair(spec: ProblemSpec, delta: float | None = None) -> tuple[float, float]:
    """The two step-perturbation budget variants (divisor 20 vs divisor 4).

    The first is the stricter one and is what pass/fail bounds consume; both
    are logged.  delta defaults to ``spec.monitor_delta``.
    """
    d = spec.monitor_delta if delta is None else delta
    b20 = d**2 / (20.0 * spec.T2 * spec.norm_Y)
    return b20, 5.0 * b20


def build_projections(m: int, n: int, r: int) -> Projections:
    """Signal/nuisance/reflected row selections for a canonical target."""
    if r > min(m, n):
        raise DimensionError(f"rank {r} exceeds min(m, n) = {min(m, n)}")
    if r < 1:
        raise DimensionError(f"rank must be >= 1, got {r}")
    d = m + n
    inv_sqrt2 = 1.0 / np.sqrt(2.0)
    PA = np.zeros((r, d))
    for i in range(r):
        PA[i, i] = inv_sqrt2
        PA[i, m + i] = inv_sqrt2
    PN = np.zeros((d - 2 * r, d))
    for row, j in enumerate(list(range(r, m)) + list(range(m + r, m + n))):
        PN[row, j] = 1.0
    PAJ = PA * sign_split(m, n)[None, :]
    PP = np.vstack([PN, PAJ])
    return Projections(PA, PN, PP)


@dataclass(frozen=True, eq=False)
class LiftedState:
    t: float
    m: int
    n: int
    r: int
    W: np.ndarray  # (m+n) x h
    A: np.ndarray  # r x h
    Adag: np.ndarray  # h x r
    Q: np.ndarray  # h x h projection onto the alignment row space
    Wtilde: np.ndarray  # (m+n) x h nuisance component W (I - Q)
    F: np.ndarray  # (m+n-r) x r transfer coefficients
    R: np.ndarray  # (m+n) x (m+n) residual dilation
    X: np.ndarray  # (m+n) x (m+n), X = R + W W^T / 2
    imbalance: np.ndarray  # h x h, W^T J W

    @property
    def U(self) -> np.ndarray:
        return self.W[: self.m]

    @property
    def V(self) -> np.ndarray:
        return self.W[self.m :]


def residual_R(W: np.ndarray, spec: ProblemSpec) -> np.ndarray:
    """R(W) = Yhat - (W W^T - J W W^T J)/2 for any stacked factor matrix."""
    jv = spec.Jsign
    WWt = W @ W.T
    JWWtJ = (jv[:, None] * WWt) * jv[None, :]
    return spec.Yhat - 0.5 * (WWt - JWWtJ)


def derive(W, spec: ProblemSpec, t: float = 0.0) -> LiftedState:
    """Compute every cached quantity of a lifted state at W.

    Raises RankDeficient when the alignment A = PA @ W has lost row rank
    (sigma_r(A) below DERIVE_RANK_TOL * sqrt(norm_Y)), at which point the
    transfer coefficients are meaningless.
    """
    W = np.asarray(W, dtype=np.float64)
    if W.shape != (spec.m + spec.n, spec.h):
        raise ShapeMismatch(f"expected W of shape {(spec.m + spec.n, spec.h)}, got {W.shape}")
    PA, _, PP = spec.projections
    A = PA @ W
    s_A = svdvals(A)
    sigma_r_A = float(s_A[-1]) if s_A.size else 0.0
    if sigma_r_A < DERIVE_RANK_TOL * np.sqrt(spec.norm_Y):
        raise RankDeficient(sigma_r_A, f"alignment lost rank: sigma_r(A) = {sigma_r_A:.3e}")
    Adag = pinv_wide(A)
    Q = Adag @ A
    Wtilde = W - W @ Q
    F = PP @ W @ Adag
    jv = spec.Jsign
    WWt = W @ W.T
    JWWtJ = (jv[:, None] * WWt) * jv[None, :]
    R = spec.Yhat - 0.5 * (WWt - JWWtJ)
    X = spec.Yhat + 0.5 * JWWtJ
    imbalance = W.T @ (jv[:, None] * W)
    return LiftedState(
        t=float(t), m=spec.m, n=spec.n, r=spec.r,
        W=W, A=A, Adag=Adag, Q=Q, Wtilde=Wtilde, F=F, R=R, X=X, imbalance=imbalance,
    )


def init_random(spec: ProblemSpec, scale_C: float, seed: int) -> np.ndarray:
    """W0 with i.i.d. Normal(0, (epsilon / (C sqrt(h)))^2) entries."""
    if scale_C <= 0.0:
        raise ValueError(f"scale constant must be positive, got {scale_C}")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    std = spec.epsilon / (scale_C * np.sqrt(spec.h))
    return rng.normal(0.0, std, size=(spec.m + spec.n, spec.h))


def init_scaled_identity(spec: ProblemSpec) -> np.ndarray:
    """U0 = V0 = (epsilon / sqrt(2)) I.  Requires m = n = h; gives
    ||W0|| = epsilon, perfect alignment, and alpha = 1 admissible."""
    if not (spec.m == spec.n == spec.h):
        raise ShapeMismatch(
            f"scaled identity init needs m = n = h, got m={spec.m}, n={spec.n}, h={spec.h}"
        )
    block = (spec.epsilon / np.sqrt(2.0)) * np.eye(spec.m)
    return np.vstack([block, block])


def check_init(W0, spec: ProblemSpec) -> InvariantReport:
    """Admissibility of an initialization: never raises, reports margins.

    Items: norm_W0        ||W0|| <= epsilon
           sigma_r_A0     sigma_r(A0) >= epsilon / alpha^2
           epsilon_cap    epsilon <= min(sqrt(kappa)/(alpha gamma),
                                         delta/(3 alpha)) * sqrt(norm_Y)
           delta_cap      delta <= 1 / (64 alpha kappa)
    """
    W0 = np.asarray(W0, dtype=np.float64)
    report = InvariantReport(t=0.0)
    PA = spec.projections.PA
    report.add_upper("norm_W0", opnorm(W0), spec.epsilon)
    s_A = svdvals(PA @ W0)
    sigma_r_A0 = float(s_A[-1]) if s_A.size else 0.0
    report.add_lower("sigma_r_A0", sigma_r_A0, spec.epsilon / spec.alpha**2)
    eps_cap = min(
        np.sqrt(spec.kappa) / (spec.alpha * spec.gamma),
        spec.delta / (3.0 * spec.alpha),
    ) * np.sqrt(spec.norm_Y)
    report.add_upper("epsilon_cap", spec.epsilon, eps_cap)
    report.add_upper("delta_cap", spec.delta, 1.0 / (64.0 * spec.alpha * spec.kappa))
    return report
