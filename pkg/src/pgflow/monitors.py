"""Trajectory certificates.

Each report re-measures a state and compares it against the closed-form
ceilings the convergence analysis maintains:

* ``warmup_report``    - the eight warm-up invariants on [0, T2]: bounded W,
  near-conserved imbalance, small reflected/nuisance rows, bounded transfer
  coefficients, slowly growing nuisance norm, exponentially growing alignment.
* ``local_report``     - the two local-phase bounds: the residual dilation
  under its decaying ceiling M^R_t and the aligned nuisance rows under
  (2/5) M^R_t / sqrt(||Y||).
* ``e_bound_report``   - the step-perturbation budget: when the step-size /
  isometry preconditions hold, ||E_t|| <= beta (||R_k|| + gamma sigma_{r+1}^2)
  and the uniform budget delta^2 / T2.
* ``assumption_report``- the parameter caps on rho and eta with horizon T2.
* ``final_error_report`` - the end-of-run recovery bound and residual floor.
* ``identity_suite``   - eleven unconditional algebraic identities of the
  lifted construction; passes on every state whatsoever.
* ``derivative_sign_suite`` - the boundary derivative signs: each monitored
  quantity sitting within 1% of its ceiling must be pushed back (strictness
  margin zero).

Monitors only record; they never abort a run.  All warm-up/local bounds use
the monitoring delta (``delta_eff`` when supplied), which may deliberately sit
outside the theorem's regime; theorem-side reports always use ``spec.delta``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import StepRecord, perturbation_E, singular_pair_derivative
from .lifted import LiftedState, ProblemSpec, beta_pair, build_projections, sign_split
from .linalg import lambda_max, opnorm, svdvals
from .reports import InvariantReport

IDENTITY_TOL = 1e-10
ACTIVATION = 0.99  # fraction of a ceiling at which a boundary hypothesis engages

WARMUP_ITEMS = (
    "norm_W",
    "norm_imbalance",
    "norm_PAJW",
    "norm_PNW",
    "lambda1_PPX",
    "norm_F",
    "norm_Wtilde",
    "sigma_r_A",
)
LOCAL_ITEMS = ("norm_R", "norm_PNWQ")


@dataclass(frozen=True)
class PhaseBounds:
    MR_t: float
    MR_inf: float


def mr_inf_pair(spec: ProblemSpec) -> tuple[float, float]:
    """Residual floor M^R_inf under both budget variants (strict, loose)."""
    b20, b4 = beta_pair(spec)
    d = spec.monitor_delta
    grow = np.exp(6.0 * spec.alpha * d * spec.norm_Y * spec.T2)

    def floor(beta: float) -> float:
        return 64.0 * (
            beta * spec.gamma * spec.norm_Y / spec.Y_rr + np.sqrt(spec.norm_Y / spec.Y_rr)
        ) * spec.epsilon**2 * grow

    return floor(b20), floor(b4)


def phase_bounds(spec: ProblemSpec, t: float) -> PhaseBounds:
    """Local-phase ceiling at time t.  The decaying branch dominates until it
    crosses the floor; pass/fail uses the stricter budget variant."""
    mr_inf, _ = mr_inf_pair(spec)
    decay = 3.0 * spec.norm_Y * np.exp(-(2.0 * spec.Y_rr / 5.0) * (t - spec.T1))
    return PhaseBounds(MR_t=max(decay, mr_inf), MR_inf=mr_inf)


def warmup_report(state: LiftedState, spec: ProblemSpec) -> InvariantReport:
    """The eight warm-up invariants at the state's time."""
    t = state.t
    d = spec.monitor_delta
    report = InvariantReport(t=t)
    sqY = np.sqrt(spec.norm_Y)
    PA, PN, _ = spec.projections
    jv = sign_split(spec.m, spec.n)
    report.add_upper("norm_W", opnorm(state.W), 1.5 * sqY)
    report.add_upper(
        "norm_imbalance",
        opnorm(state.imbalance),
        (1.0 + 5.0 * t / spec.T2) * d**2 * spec.norm_Y,
    )
    report.add_upper("norm_PAJW", opnorm(PA @ (jv[:, None] * state.W)), d / (3.0 * spec.alpha) * sqY)
    report.add_upper("norm_PNW", opnorm(PN @ state.W), d * np.sqrt(8.0 * spec.norm_Y))
    PP = spec.projections.PP
    report.add_upper("lambda1_PPX", lambda_max(PP @ state.X @ PP.T), 2.0 * d * spec.norm_Y)
    report.add_upper("norm_F", opnorm(state.F), spec.alpha**2)
    report.add_upper(
        "norm_Wtilde",
        opnorm(state.Wtilde),
        spec.epsilon * np.exp(3.0 * spec.alpha * d * spec.norm_Y * t),
    )
    s_A = svdvals(state.A)
    report.add_lower(
        "sigma_r_A",
        float(s_A[-1]),
        min(np.sqrt(spec.Y_rr), spec.epsilon / spec.alpha**2 * np.exp(2.0 * spec.Y_rr * t / 5.0)),
    )
    return report


def local_report(state: LiftedState, spec: ProblemSpec, t: float) -> InvariantReport:
    """Local-phase bounds.  The ceiling formula extends below T1 (where it
    exceeds 3 ||Y|| and is loose); its contractual window is [T1, T2]."""
    pb = phase_bounds(spec, t)
    _, PN, _ = spec.projections
    report = InvariantReport(t=t)
    report.add_upper("norm_R", opnorm(state.R), pb.MR_t)
    report.add_upper(
        "norm_PNWQ",
        opnorm(PN @ (state.W - state.Wtilde)),
        0.4 * pb.MR_t / np.sqrt(spec.norm_Y),
    )
    mr_inf_strict, mr_inf_loose = mr_inf_pair(spec)
    report.info.update(MR_t=pb.MR_t, MR_inf=mr_inf_strict, MR_inf_loose=mr_inf_loose)
    return report


def e_bound_report(rec: StepRecord, s: float, spec: ProblemSpec) -> InvariantReport:
    """Step-perturbation budget at fraction s through step k.

    The budget constant is instantiated from the run's actual step size and
    isometry target, beta = max(20 eta ||Y||, 4 sqrt(r) rho), the smallest
    value for which both hypotheses eta <= beta/(20 ||Y||) and
    rho <= beta/(4 sqrt(r)) hold.  When any precondition fails the two E items
    are recorded as inactive ("not applicable") and assert nothing.
    """
    t = (rec.k + s) * rec.eta
    report = InvariantReport(t=t)
    beta_h = max(20.0 * spec.eta * spec.norm_Y, 4.0 * np.sqrt(spec.r) * spec.rho_target)
    norm_W_k = opnorm(rec.W_before)
    s_W = svdvals(rec.W_before)
    sigma_r1_sq = float(s_W[spec.r]) ** 2 if spec.r < s_W.size else 0.0
    pre_beta = report.add_upper("precond_beta", beta_h, 0.25)
    pre_W = report.add_upper("precond_norm_W", norm_W_k, 1.5 * np.sqrt(spec.norm_Y))
    pre_sig = report.add_upper("precond_sigma_r1_sq", sigma_r1_sq, spec.norm_Y / spec.gamma)
    applicable = pre_beta.passed and pre_W.passed and pre_sig.passed
    norm_E = opnorm(perturbation_E(rec, s, spec))
    norm_R_k = opnorm(rec.R_k)
    report.add_upper(
        "E_step_budget",
        norm_E,
        beta_h * (norm_R_k + spec.gamma * sigma_r1_sq),
        active=applicable,
    )
    report.add_upper("E_uniform_budget", norm_E, spec.delta**2 / spec.T2, active=applicable)
    report.info.update(
        applicable=applicable, beta=beta_h, norm_E=norm_E, norm_R_k=norm_R_k,
        sigma_r1_W_sq=sigma_r1_sq, s=s,
    )
    return report


def assumption_report(spec: ProblemSpec, op_N: int) -> InvariantReport:
    """Parameter caps with horizon T2, plus the implied step count next to
    the kappa^4 log^2 reference scale.  The number of measurements is echoed
    as information only (its sufficient constant is not computable here)."""
    report = InvariantReport(t=0.0)
    report.add_upper(
        "rho_cap",
        spec.rho_target,
        spec.delta**2 / (16.0 * np.sqrt(spec.r) * spec.T2 * spec.norm_Y),
    )
    report.add_upper("eta_cap", spec.eta, spec.delta**2 / (80.0 * spec.T2 * spec.norm_Y**2))
    log_term = np.log(spec.Y_rr / spec.epsilon**2)
    report.info.update(
        steps_required=int(np.ceil(spec.T2 / spec.eta)),
        reference_steps=float(spec.kappa**4 * log_term**2),
        N=int(op_N),
    )
    return report


def final_error_report(state: LiftedState, spec: ProblemSpec) -> InvariantReport:
    """End-of-run certificate: recovery error under the closed-form bound
    (theorem delta), the residual under its floor M^R_inf (monitoring delta),
    and the sanity condition that the bound's exponent stays <= 1/2."""
    report = InvariantReport(t=state.t)
    err = opnorm(spec.Y - state.U @ state.V.T)
    exponent = 32.0 * spec.alpha * spec.kappa * spec.delta
    thm_bound = (
        64.0 * spec.epsilon**2
        * (spec.delta**2 * spec.gamma * spec.kappa + np.sqrt(spec.kappa))
        * (spec.Y_rr / spec.epsilon**2) ** exponent
    )
    mr_inf, _ = mr_inf_pair(spec)
    report.add_upper("recovery_error", err, thm_bound)
    report.add_upper("residual_floor", opnorm(state.R), mr_inf)
    report.add_upper("exponent_half", exponent, 0.5)
    report.info.update(final_error=err, thm_bound=thm_bound, MR_inf=mr_inf)
    return report


def identity_suite(state: LiftedState) -> InvariantReport:
    """Eleven unconditional identities of the lifted construction, checked at
    mixed tolerance 1e-10 * max(1, scale).  They hold for every state, not
    just trajectory states."""
    m, n, r = state.m, state.n, state.r
    jv = sign_split(m, n)
    W, R, X, Wt = state.W, state.R, state.X, state.Wtilde
    WWt = W @ W.T
    Yhat = X - 0.5 * (jv[:, None] * WWt) * jv[None, :]
    Y = Yhat[:m, m:]
    PA, PN, PP = build_projections(m, n, r)
    report = InvariantReport(t=state.t)

    def tol(scale: float) -> float:
        return IDENTITY_TOL * max(1.0, scale)

    norm_R = opnorm(R)
    norm_W = opnorm(W)
    norm_Y = opnorm(Y)
    report.add_upper("dilation_norm", abs(opnorm(Yhat) - norm_Y), tol(norm_Y))
    report.add_upper(
        "JRJ_antisymmetry", opnorm((jv[:, None] * R) * jv[None, :] + R), tol(norm_R)
    )
    report.add_upper("lambda1_R", abs(lambda_max(R) - norm_R), tol(norm_R))
    report.add_upper(
        "R_equals_residual", abs(norm_R - opnorm(Y - state.U @ state.V.T)), tol(norm_R)
    )
    report.add_upper("R_norm_cap", norm_R, norm_Y + 0.5 * norm_W**2)
    report.add_upper(
        "PNJX_norm", abs(opnorm(PN @ (jv[:, None] * X)) - opnorm(PN @ X)), tol(opnorm(X))
    )
    report.add_upper("PP_projection_Wtilde", opnorm(PP.T @ (PP @ Wt) - Wt), tol(opnorm(Wt)))
    report.add_upper(
        "gram_split",
        opnorm(WWt - (W @ state.Q) @ W.T - Wt @ Wt.T),
        tol(norm_W**2),
    )
    WAdag = W @ state.Adag
    report.add_upper(
        "WAdag_split", opnorm(WAdag - PA.T - PP.T @ state.F), tol(opnorm(WAdag))
    )
    s_W = svdvals(W)
    sigma_r1 = float(s_W[r]) if r < s_W.size else 0.0
    report.add_upper("sigma_r1_vs_Wtilde", sigma_r1, opnorm(Wt))
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(0xD10)))
    v = rng.standard_normal(m + n)
    v /= np.linalg.norm(v)
    parts = (
        np.linalg.norm(PA @ v) ** 2
        + np.linalg.norm(PN @ v) ** 2
        + np.linalg.norm(PA @ (jv * v)) ** 2
    )
    report.add_upper("projection_pythagoras", abs(1.0 - parts), tol(1.0))
    return report


def derivative_sign_suite(
    state: LiftedState, E, spec: ProblemSpec, phase: str
) -> InvariantReport:
    """Boundary derivative signs with strictness margin zero.

    A quantity's item engages (active=True) only when its hypothesis holds:
    within 1% of its warm-up/local ceiling for Wtilde, F, R and PN W Q, and
    0 < sigma_r(A) <= sqrt(Y_rr) for the alignment growth.  Inactive items
    record the measured values and pass vacuously.
    """
    if phase not in ("warmup", "local"):
        raise ValueError(f"phase must be 'warmup' or 'local', got {phase!r}")
    t = state.t
    d = spec.monitor_delta
    report = InvariantReport(t=t)
    _, PN, _ = spec.projections
    if phase == "warmup":
        wt_norm = opnorm(state.Wtilde)
        wt_bound = spec.epsilon * np.exp(3.0 * spec.alpha * d * spec.norm_Y * t)
        active = bool(wt_norm >= ACTIVATION * wt_bound and wt_norm > 0.0)
        dval = singular_pair_derivative(state, E, "Wtilde") if active else 0.0
        report.add_upper(
            "Wtilde_growth", dval, 3.0 * spec.alpha * d * spec.norm_Y * wt_norm, active=active
        )
        report.info["Wtilde_growth_active"] = active

        f_norm = opnorm(state.F)
        active = bool(f_norm >= ACTIVATION * spec.alpha**2)
        dval = singular_pair_derivative(state, E, "F") if active else 0.0
        report.add_upper("F_pushback", dval, 0.0, active=active)
        report.info["F_pushback_active"] = active

        s_A = svdvals(state.A)
        sig = float(s_A[-1])
        active = bool(0.0 < sig <= np.sqrt(spec.Y_rr))
        dval = singular_pair_derivative(state, E, "A_bottom") if active else 0.0
        report.add_lower("A_growth", dval, (2.0 * spec.Y_rr / 5.0) * sig, active=active)
        report.info["A_growth_active"] = active
        return report

    pb = phase_bounds(spec, t)
    r_norm = opnorm(state.R)
    active = bool(r_norm >= ACTIVATION * pb.MR_t)
    dval = singular_pair_derivative(state, E, "R") if active else 0.0
    report.add_upper("R_decay", dval, -(2.0 * spec.Y_rr / 5.0) * r_norm, active=active)
    report.info["R_decay_active"] = active

    pnwq_norm = opnorm(PN @ (state.W - state.Wtilde))
    active = bool(pnwq_norm >= ACTIVATION * 0.4 * pb.MR_t / np.sqrt(spec.norm_Y) and pnwq_norm > 0.0)
    dval = singular_pair_derivative(state, E, "PNWQ") if active else 0.0
    report.add_upper("PNWQ_decay", dval, -(2.0 * spec.Y_rr / 5.0) * pnwq_norm, active=active)
    report.info["PNWQ_decay_active"] = active
    return report
