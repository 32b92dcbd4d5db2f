"""End-to-end acceptance gate.

Each test covers one numbered acceptance criterion and prints a single
PASS/FAIL line (bypassing capture, so the lines survive into piped logs).
The headline convergence guarantee at theorem-compliant step size and
isometry level is out of reach at desk scale (the admissibility report
makes the required step count explicit), so the checks here are the
contractual surrogates: exact flow/GD coincidence, derivative and identity
cross-validation, scaled convergence runs, and bound audits on every
logged step.
"""

import dataclasses
import json
import math
import time
from pathlib import Path
from types import SimpleNamespace

import numpy as np
import pytest

from pgflow.dynamics import gd_step_lifted
from pgflow.experiment import (
    ExperimentConfig,
    build_init,
    build_problem,
    check_rip,
    flow_vs_gd,
    read_snapshot,
    run,
    verify_derivatives,
)
from pgflow.lifted import derive, make_problem_spec, synthesize_target
from pgflow.linalg import frob, lambda_max, opnorm
from pgflow.measurement import adjoint, apply, gaussian_operator, identity_operator
from pgflow.monitors import WARMUP_ITEMS, e_bound_report, final_error_report, identity_suite


@pytest.fixture(scope="session")
def report(request):
    """One PASS/FAIL line per criterion, written past pytest's capture."""
    reporter = request.config.pluginmanager.get_plugin("terminalreporter")

    def _report(num: int, passed: bool, detail: str) -> None:
        line = f"{'PASS' if passed else 'FAIL'} criterion {num}: {detail}"
        if reporter is not None:
            reporter.ensure_newline()
            reporter.write_line(line)
        else:
            print(line)
        assert passed, line

    return _report


# Reference convergence run: identity operator, square well-conditioned
# target, perfectly aligned init.  auto resolves T2 / eta = 6908 steps.
RUN5_KW = dict(
    m=12, n=12, r=2, h=12, kappa=2.0, op_kind="identity",
    eta=1e-2, epsilon=1e-3, alpha=1.0, init="scaled_identity",
    steps="auto", seed=0,
)

# Gaussian sensing runs: N = 6 (m + n) r measurements, random init.
RUN6_KW = dict(
    m=10, n=10, r=2, h=20, kappa=2.0, op_kind="gaussian", N=240,
    rho_target=0.5, eta=1e-2, epsilon=1e-3, alpha=10.0, init="random",
    C=10.0, steps="auto", log_every=20,
)
RUN6_SEEDS = range(10)


@pytest.fixture(scope="session")
def run5(tmp_path_factory):
    out = tmp_path_factory.mktemp("run5")
    cfg = ExperimentConfig(**RUN5_KW)
    t0 = time.perf_counter()
    log, summary = run(cfg, out)
    elapsed = time.perf_counter() - t0
    return SimpleNamespace(
        cfg=cfg, out=out, rows=log.rows, header=log.header,
        summary=summary, elapsed=elapsed,
    )


@pytest.fixture(scope="session")
def run6(tmp_path_factory):
    t0 = time.perf_counter()
    runs = []
    for seed in RUN6_SEEDS:
        out = tmp_path_factory.mktemp(f"run6_seed{seed}")
        cfg = ExperimentConfig(seed=seed, **RUN6_KW)
        log, summary = run(cfg, out)
        runs.append(SimpleNamespace(cfg=cfg, out=out, rows=log.rows, summary=summary))
    rip = check_rip(ExperimentConfig(seed=0, **RUN6_KW), trials=200, probe_rank=3)
    elapsed = time.perf_counter() - t0
    return SimpleNamespace(runs=runs, rip=rip, elapsed=elapsed)


def test_criterion_1_flow_matches_discrete_gd(report):
    # 5 random configurations across both operator kinds, 200 steps each;
    # the closed-form interpolant at s = 1 must hit the next iterate to 1e-8.
    configs = [
        dict(m=6, n=6, r=2, h=6, kappa=2.0, op_kind="identity",
             init="scaled_identity", alpha=1.0, seed=1),
        dict(m=4, n=4, r=1, h=8, kappa=1.0, op_kind="identity",
             init="random", alpha=10.0, C=10.0, seed=2),
        dict(m=8, n=7, r=2, h=12, kappa=2.0, op_kind="gaussian", N=150,
             init="random", alpha=10.0, C=10.0, seed=3),
        dict(m=12, n=9, r=3, h=24, kappa=3.0, op_kind="gaussian", N=240,
             init="random", alpha=10.0, C=10.0, seed=4),
        dict(m=5, n=5, r=1, h=10, kappa=1.0, op_kind="gaussian", N=120,
             init="random", alpha=10.0, C=10.0, seed=5),
    ]
    t0 = time.perf_counter()
    worst = 0.0
    for kw in configs:
        cfg = ExperimentConfig(eta=1e-2, epsilon=1e-3, steps=200, **kw)
        result = flow_vs_gd(cfg, probes=0)
        worst = max(worst, result["max_rel_deviation"])
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-8 and elapsed < 10.0
    report(1, ok, f"flow/GD max relative deviation {worst:.2e} <= 1e-8 "
                   f"over 5 configs x 200 steps ({elapsed:.1f}s < 10s)")


def test_criterion_2_adjoint_identity(report):
    # <A(X), y> == <X, A*(y)> on 100 random pairs per operator kind.
    ops = {
        "identity": identity_operator(7, 5),
        "gaussian": gaussian_operator(7, 5, 40, seed=11),
    }
    t0 = time.perf_counter()
    worst = 0.0
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(2024)))
    for op in ops.values():
        for _ in range(100):
            X = rng.normal(size=(op.m, op.n))
            y = rng.normal(size=(op.N,))
            lhs = float(apply(op, X) @ y)
            rhs = float(np.sum(adjoint(op, y) * X))
            gap = abs(lhs - rhs) / (frob(X) * float(np.linalg.norm(y)))
            worst = max(worst, gap)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-10 and elapsed < 1.0
    report(2, ok, f"adjoint identity worst relative gap {worst:.2e} <= 1e-10 "
                   f"on 200 random pairs ({elapsed:.2f}s < 1s)")


def test_criterion_3_derivative_formulas(report):
    # Central differences against the analytic derivatives of W, F, Wtilde
    # at random trajectory points: halving the step must shrink the error
    # by ~4x, and the contractual step 1e-4 * eta must agree to 1e-6.
    # Random init: a perfectly aligned start has F identically zero, which
    # makes the ratio of two roundoff-level errors meaningless.
    cfg = ExperimentConfig(m=8, n=7, r=2, h=12, kappa=2.0, op_kind="gaussian",
                           N=150, eta=1e-2, epsilon=1e-3, alpha=10.0,
                           init="random", C=10.0, steps=300, seed=5)
    t0 = time.perf_counter()
    result = verify_derivatives(cfg, probes=30)
    elapsed = time.perf_counter() - t0
    probes = [p for p in result["probes"] if p["skipped"] is None]
    ratios = [p[q]["ratio"] for p in probes for q in ("W", "F", "Wtilde")]
    agreements = [p[q]["agreement"] for p in probes for q in ("W", "F", "Wtilde")]
    ok = (
        len(probes) >= 20
        and all(3.5 <= r <= 4.5 for r in ratios)
        and all(a <= 1e-6 for a in agreements)
        and elapsed < 10.0
    )
    report(3, ok, f"{len(probes)} probed steps: error ratios in "
                   f"[{min(ratios):.2f}, {max(ratios):.2f}] (need [3.5, 4.5]), "
                   f"agreement <= {max(agreements):.1e} ({elapsed:.1f}s < 10s)")


def test_criterion_4_identity_suite_random_states(report):
    # All 11 algebraic identities hold on 100 random lifted states across
    # varied shapes and scales.
    shapes = [
        (6, 6, 2, 6, 2.0),
        (8, 5, 2, 10, 3.0),
        (12, 12, 3, 24, 2.0),
        (4, 4, 1, 4, 1.0),
        (9, 7, 1, 12, 1.0),
    ]
    scales = (0.05, 0.3, 1.0, 2.5)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(4096)))
    t0 = time.perf_counter()
    failures = []
    for i in range(100):
        m, n, r, h, kappa = shapes[i % len(shapes)]
        spec = make_problem_spec(m, n, r, h, synthesize_target(m, n, r, kappa),
                                 alpha=2.0, delta=1 / 256, epsilon=1e-3,
                                 eta=1e-2, rho_target=0.0)
        W = rng.normal(scale=scales[i % len(scales)], size=(m + n, h))
        rep = identity_suite(derive(W, spec, t=0.0))
        assert len(rep.items) == 11
        if not rep.all_pass:
            failures.append((i, rep.failures))
    elapsed = time.perf_counter() - t0
    ok = not failures and elapsed < 5.0
    report(4, ok, f"identity suite (11 items) passed on 100/100 random states "
                   f"({elapsed:.1f}s < 5s); failures: {failures[:3]}")


def test_criterion_5_reference_convergence(report, run5):
    rows = run5.rows
    t = np.array([r["t"] for r in rows])
    sig = np.array([r["sigma_r_A"] for r in rows])
    nr = np.array([r["norm_R"] for r in rows])
    imb = np.array([r["norm_imbalance"] for r in rows])
    y_rr = 1.0
    final_error = run5.summary["final_error"]

    # sigma_r(A) must rise monotonically to sqrt(Y_rr) at average log-slope
    # >= 0.4 * (2 Y_rr / 5), then the residual must decay at least that fast
    # until it reaches 1e-6.
    assert sig.max() > math.sqrt(y_rr)
    cross = int(np.argmax(sig > math.sqrt(y_rr)))
    nondecreasing = bool(np.all(np.diff(sig[: cross + 1]) >= -1e-12))
    slope_sig = (math.log(sig[cross]) - math.log(sig[0])) / (t[cross] - t[0])
    after = np.arange(cross, len(t))
    assert nr[after].min() <= 1e-6
    reach = int(after[np.argmax(nr[after] <= 1e-6)])
    slope_r = (math.log(nr[reach]) - math.log(nr[cross])) / (t[reach] - t[cross])
    rate = 0.4 * (2.0 * y_rr / 5.0)
    ok = (
        final_error <= 1e-6
        and nondecreasing
        and slope_sig >= rate
        and slope_r <= -rate
        and imb.max() <= 1e-4
        and run5.elapsed < 60.0
    )
    report(5, ok, f"final error {final_error:.2e} <= 1e-6, sigma_r(A) nondecreasing "
                   f"with log-slope {slope_sig:.2f} >= {rate:.2f}, residual log-slope "
                   f"{slope_r:.2f} <= {-rate:.2f}, max imbalance {imb.max():.1e} <= 1e-4 "
                   f"({run5.elapsed:.1f}s < 60s)")


def test_criterion_6_gaussian_sensing(report, run6):
    errors = [r.summary["final_error"] for r in run6.runs]
    hits = sum(e <= 1e-3 for e in errors)
    rho_hat = run6.rip["rho_hat"]
    ok = (
        hits >= 8
        and run6.rip["trials"] == 200
        and run6.rip["probe_rank"] == 3
        and rho_hat < 0.5
        and run6.elapsed < 300.0
    )
    report(6, ok, f"final error <= 1e-3 on {hits}/10 seeds (need >= 8), worst "
                   f"{max(errors):.2e}; sampled isometry deviation {rho_hat:.3f} < 0.5 "
                   f"at probe rank 3, 200 trials ({run6.elapsed:.0f}s < 300s)")


def test_criterion_7_perturbation_bound_audit(report, run5, run6):
    # Every logged step of the convergence runs where the preconditions
    # hold must satisfy the step-wise perturbation budget.  At eta = 1e-2
    # the small-step precondition fails (20 eta ||Y|| = 0.4 > 1/4), so those
    # rows are vacuous; a tiny-step run makes the audit bite.
    rows = list(run5.rows)
    for r6 in run6.runs:
        rows.extend(r6.rows)
    applicable = [r for r in rows if r["ebound_applicable"]]
    violations = [r for r in applicable if not r["ebound_pass"]]

    cfg = ExperimentConfig(m=4, n=4, r=1, h=4, kappa=1.0, op_kind="identity",
                           eta=1e-4, epsilon=1e-3, alpha=1.0,
                           init="scaled_identity", steps=2000, log_every=100,
                           seed=0)
    spec, op = build_problem(cfg)
    state = derive(build_init(cfg, spec), spec, t=0.0)
    tiny_applicable = tiny_passed = 0
    worst = math.inf
    for k in range(2000):
        rec = gd_step_lifted(state, op, spec)
        if k % 100 == 0:
            for s in (0.0, 0.25, 0.5, 0.75):
                eb = e_bound_report(rec, s, spec)
                if eb.info["applicable"]:
                    tiny_applicable += 1
                    item = eb.items["E_step_budget"]
                    tiny_passed += item.passed
                    worst = min(worst, item.margin)
        state = derive(rec.W_after, spec, t=(k + 1) * spec.eta)

    ok = not violations and tiny_applicable >= 80 and tiny_passed == tiny_applicable
    report(7, ok, f"runs 5+6: {len(violations)} violations on {len(applicable)} "
                   f"applicable of {len(rows)} logged rows (eta=1e-2 rows are vacuous); "
                   f"tiny-step run: {tiny_passed}/{tiny_applicable} probes within "
                   f"budget, worst margin {worst:.1e}")


def test_criterion_8_monitor_audit(report, run5, tmp_path_factory):
    # Rerun the reference configuration with the monitoring tolerance set to
    # the smallest value that makes every warm-up item pass at t = 0, then
    # demand: no warm-up violation before sigma_r(A) reaches sqrt(Y_rr), the
    # residual under its phase ceiling on [T1, T2], and the final residual
    # under its floor.
    spec5, _ = build_problem(run5.cfg)
    st0 = derive(build_init(run5.cfg, spec5), spec5, t=0.0)
    pr = spec5.projections
    n_y = spec5.norm_Y
    delta_eff = max(
        math.sqrt(max(opnorm(st0.imbalance), 0.0) / n_y),
        3.0 * spec5.alpha * opnorm(pr.PA @ (spec5.Jsign[:, None] * st0.W)) / math.sqrt(n_y),
        opnorm(pr.PN @ st0.W) / math.sqrt(8.0 * n_y),
        max(lambda_max(pr.PP @ st0.X @ pr.PP.T), 0.0) / (2.0 * n_y),
    )
    # minimality: 0.1% below the computed value some item must fail at t = 0
    from pgflow.monitors import warmup_report

    spec_lo = make_problem_spec(spec5.m, spec5.n, spec5.r, spec5.h, spec5.Y,
                                alpha=spec5.alpha, delta=spec5.delta,
                                epsilon=spec5.epsilon, eta=spec5.eta,
                                rho_target=spec5.rho_target,
                                delta_eff=0.999 * delta_eff)
    minimal = not warmup_report(derive(st0.W, spec_lo, t=0.0), spec_lo).all_pass

    cfg8 = dataclasses.replace(run5.cfg, delta_eff=delta_eff)
    out = tmp_path_factory.mktemp("run8")
    log8, sum8 = run(cfg8, out)
    rows = log8.rows
    sig = np.array([r["sigma_r_A"] for r in rows])
    cross = int(np.argmax(sig > math.sqrt(1.0)))
    warm_ok = all(r["warmup_pass_bitmask"] == (1 << len(WARMUP_ITEMS)) - 1
                  for r in rows[:cross])
    window = [r for r in rows if sum8["T1"] <= r["t"] <= sum8["T2"]]
    ceiling_ok = all(r["norm_R"] <= r["MR_t"] * (1 + 1e-9) for r in window)

    steps = sum8["config"]["steps"]
    W_final, t_final = read_snapshot(Path(out) / "snapshots", steps)
    spec8, _ = build_problem(cfg8)
    final_rep = final_error_report(derive(W_final, spec8, t=t_final), spec8)
    floor_ok = final_rep.items["residual_floor"].passed

    ok = (
        rows[0]["warmup_pass_bitmask"] == (1 << len(WARMUP_ITEMS)) - 1
        and minimal
        and warm_ok
        and bool(window)
        and ceiling_ok
        and floor_ok
    )
    report(8, ok, f"delta_eff={delta_eff:.3e} (0.999x fails at t=0: {minimal}); "
                   f"warm-up clean on {cross} rows before crossing, residual under "
                   f"ceiling on {len(window)} rows in [T1, T2], final residual "
                   f"{final_rep.info['final_error']:.2e} <= floor "
                   f"{final_rep.info['MR_inf']:.2e}")


def test_criterion_9_determinism(report, run5, tmp_path_factory):
    # A second execution with the identical configuration and seed must
    # reproduce the CSV and the snapshots byte for byte; the summary JSON
    # matches after dropping the wall-clock field, which cannot be both
    # mandated and bit-stable.
    out2 = tmp_path_factory.mktemp("run5_repeat")
    run(run5.cfg, out2)
    csv_same = (Path(run5.out) / "trajectory.csv").read_bytes() == (out2 / "trajectory.csv").read_bytes()

    snaps1 = sorted((Path(run5.out) / "snapshots").iterdir())
    snaps2 = sorted((out2 / "snapshots").iterdir())
    snaps_same = (
        [p.name for p in snaps1] == [p.name for p in snaps2]
        and all(a.read_bytes() == b.read_bytes() for a, b in zip(snaps1, snaps2))
    )

    s1 = json.loads((Path(run5.out) / "summary.json").read_text())
    s2 = json.loads((out2 / "summary.json").read_text())
    s1.pop("runtime_seconds")
    s2.pop("runtime_seconds")
    json_same = s1 == s2

    ok = csv_same and snaps_same and json_same
    report(9, ok, f"repeat run: csv byte-identical={csv_same}, "
                   f"{len(snaps1)} snapshot files byte-identical={snaps_same}, "
                   f"summary identical after dropping runtime_seconds={json_same}")
