"""Gradient descent on the factors and its exact flow interpolant.

One descent step with operator A and step size eta,

    U' = U + eta (A*A)(Y - U V^T) V,      V' = V + eta (A*A)(Y - U V^T)^T U,

is, in lifted coordinates, the single multiplicative update

    W' = (I + eta Rtilde) W,        Rtilde = R + EAhat,

where EAhat is the self-adjoint dilation of (A*A - I)(Y - U V^T).  As long as
eta ||Rtilde|| <= 2/3 the matrix I + eta Rtilde is positive definite and the
discrete iterate embeds into the continuous curve

    W_t = (I + eta Rtilde)^{(t - k eta)/eta} W_{k eta},   t in [k eta, (k+1) eta],

which solves dW/dt = (R_t + E_t) W_t with the step perturbation

    E_t = (1/eta) log(I + eta Rtilde) - R_t,

R_t being recomputed from the interpolated W_t (that recomputation is the
design choice: E then measures exactly what the multiplicative step adds on
top of the instantaneous residual dynamics).  At grid points all quantities
are right limits, i.e. they use the record of the step about to be taken.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import measurement
from .errors import NotSymmetric, ShapeMismatch, StepTooLarge
from .lifted import (
    LiftedState,
    ProblemSpec,
    build_projections,
    dilate_offdiag,
    residual_R,
    sign_split,
)
from .linalg import (
    bottom_singular_pair,
    frob,
    spd_frac_power,
    spd_log,
    sym_eig,
    top_singular_pair,
)

STEP_GUARD = 2.0 / 3.0


@dataclass(frozen=True, eq=False)
class StepRecord:
    k: int
    eta: float
    W_before: np.ndarray
    W_after: np.ndarray
    R_k: np.ndarray
    EA_hat_k: np.ndarray
    Rtilde_k: np.ndarray


def gd_step_factored(U, V, op: measurement.MeasOp, Y, eta: float) -> tuple[np.ndarray, np.ndarray]:
    """One descent step on the factors themselves."""
    U = np.asarray(U, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if Y.shape != (op.m, op.n) or U.shape[0] != op.m or V.shape[0] != op.n:
        raise ShapeMismatch(
            f"incompatible shapes Y{Y.shape}, U{U.shape}, V{V.shape} for a {op.m} x {op.n} operator"
        )
    if U.shape[1] != V.shape[1]:
        raise ShapeMismatch(f"U and V must share the inner dimension, got {U.shape} and {V.shape}")
    G = adjusted_residual(op, Y, U, V)
    return U + eta * (G @ V), V + eta * (G.T @ U)


def adjusted_residual(op: measurement.MeasOp, Y, U, V) -> np.ndarray:
    """(A*A)(Y - U V^T): the matrix driving both factor updates."""
    Z = Y - U @ V.T
    if op.kind == "identity":
        return Z
    return measurement.adjoint(op, measurement.apply(op, Z))


def gd_step_lifted(state: LiftedState, op: measurement.MeasOp, spec: ProblemSpec) -> StepRecord:
    """One descent step in lifted form, with the validity guard.

    Raises StepTooLarge when eta ||Rtilde|| > 2/3, the range on which the
    interpolant's logarithm expansion is controlled.
    """
    EA = measurement.measurement_error(op, spec.Y, state.U, state.V)
    EA_hat = dilate_offdiag(EA)
    Rtilde = state.R + EA_hat
    step_norm = spec.eta * float(np.abs(np.linalg.eigvalsh(Rtilde)).max())
    if step_norm > STEP_GUARD:
        raise StepTooLarge(step_norm)
    W_after = state.W + spec.eta * (Rtilde @ state.W)
    return StepRecord(
        k=int(round(state.t / spec.eta)),
        eta=spec.eta,
        W_before=state.W,
        W_after=W_after,
        R_k=state.R,
        EA_hat_k=EA_hat,
        Rtilde_k=Rtilde,
    )


def _step_matrix(rec: StepRecord) -> np.ndarray:
    return np.eye(rec.W_before.shape[0]) + rec.eta * rec.Rtilde_k


def flow_interpolate(rec: StepRecord, s: float) -> np.ndarray:
    """W at fraction s in [0, 1] through the step: (I + eta Rtilde)^s W_before.

    s = 0 returns W_before exactly; s = 1 reproduces W_after to roundoff.
    """
    if s == 0.0:
        return rec.W_before.copy()
    return spd_frac_power(_step_matrix(rec), s) @ rec.W_before


def _log_generator(rec: StepRecord) -> np.ndarray:
    return spd_log(_step_matrix(rec)) / rec.eta


def perturbation_E(rec: StepRecord, s: float, spec: ProblemSpec) -> np.ndarray:
    """E at fraction s through the step:

        E = (1/eta) log(I + eta Rtilde) - R(W_s),

    with R recomputed from the interpolated W_s.  Symmetric, and O(eta) small
    for an exactly isometric operator.
    """
    return _log_generator(rec) - residual_R(flow_interpolate(rec, s), spec)


def flow_derivative_W(rec: StepRecord, s: float, spec: ProblemSpec) -> np.ndarray:
    """dW/dt at fraction s: (1/eta) log(I + eta Rtilde) @ W_s, which equals
    (R_s + E_s) W_s identically."""
    return _log_generator(rec) @ flow_interpolate(rec, s)


def _check_perturbation(E: np.ndarray, where: str) -> np.ndarray:
    E = np.asarray(E, dtype=np.float64)
    if E.ndim != 2 or E.shape[0] != E.shape[1]:
        raise NotSymmetric(float("inf"), f"{where}: perturbation must be square, got {E.shape}")
    asym = frob(E - E.T)
    if asym > 1e-12 * max(frob(E), 1.0):
        raise NotSymmetric(asym, f"{where}: perturbation must be symmetric")
    return E


def _inv_gram(A: np.ndarray) -> np.ndarray:
    return np.linalg.inv(A @ A.T)


def dF_dt(state: LiftedState, E) -> np.ndarray:
    """Equal-time derivative of the transfer coefficients F = PP W Adag:

        (PP - F PA)(X + E)(PA^T + PP^T F)
          + PP Wtilde Wtilde^T [ (X + E) PA^T (A A^T)^{-1} - PP^T F ].
    """
    E = _check_perturbation(E, "dF_dt")
    PA, _, PP = build_projections(state.m, state.n, state.r)
    XE = state.X + E
    left = PP - state.F @ PA
    carry = PA.T + PP.T @ state.F
    Wt = state.Wtilde
    bracket = XE @ PA.T @ _inv_gram(state.A) - PP.T @ state.F
    return left @ XE @ carry + PP @ Wt @ (Wt.T @ bracket)


def dWtilde_dt(state: LiftedState, E) -> np.ndarray:
    """Equal-time derivative of the nuisance component Wtilde = W (I - Q):

        PP^T (PP - F PA)(X + E) Wtilde
          - Wtilde Wtilde^T [ (X + E) PA^T Adag^T - W/2 + Wtilde ].

    The result lies in the range of PP^T (PA annihilates it).
    """
    E = _check_perturbation(E, "dWtilde_dt")
    PA, _, PP = build_projections(state.m, state.n, state.r)
    XE = state.X + E
    Wt = state.Wtilde
    first = PP.T @ ((PP - state.F @ PA) @ (XE @ Wt))
    bracket = XE @ (PA.T @ state.Adag.T) - 0.5 * state.W + Wt
    return first - Wt @ (Wt.T @ bracket)


def _dR_dt(state: LiftedState, E: np.ndarray) -> np.ndarray:
    Wdot = (state.R + E) @ state.W
    D = Wdot @ state.W.T
    S = D + D.T
    jv = sign_split(state.m, state.n)
    return -0.5 * (S - (jv[:, None] * S) * jv[None, :])


def singular_pair_derivative(state: LiftedState, E, which: str) -> float:
    """u^T (dM/dt) v for the extreme singular pair (u, v) of the monitored
    quantity M, the scalar whose sign the boundary propositions control.

    which: 'Wtilde'   top pair of the nuisance component
           'R'        top eigenpair of the residual dilation (u = v)
           'F'        top pair of the transfer coefficients
           'PNWQ'     top pair of PN W Q, the nuisance rows of the aligned part
           'A_bottom' bottom pair of the alignment A
    """
    E = _check_perturbation(E, "singular_pair_derivative")
    PA, PN, _ = build_projections(state.m, state.n, state.r)
    Wdot = (state.R + E) @ state.W
    if which == "Wtilde":
        u, v, _ = top_singular_pair(state.Wtilde)
        return float(u @ dWtilde_dt(state, E) @ v)
    if which == "R":
        _, Q = sym_eig(state.R)
        v = Q[:, 0]
        return float(v @ _dR_dt(state, E) @ v)
    if which == "F":
        u, v, _ = top_singular_pair(state.F)
        return float(u @ dF_dt(state, E) @ v)
    if which == "PNWQ":
        u, v, _ = top_singular_pair(PN @ (state.W - state.Wtilde))
        return float(u @ (PN @ (Wdot - dWtilde_dt(state, E))) @ v)
    if which == "A_bottom":
        u, v, _ = bottom_singular_pair(state.A)
        return float(u @ (PA @ Wdot) @ v)
    raise ValueError(f"unknown quantity {which!r}")
