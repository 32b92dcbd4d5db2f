"""Experiment harness: configured runs, trajectory logs, and diagnostics.

A run executes lifted gradient descent and, every ``log_every`` steps, derives
the full state, evaluates the certificate reports, writes one CSV row and one
raw W snapshot.  Artifacts per run directory:

    trajectory.csv   one row per logged step (column contract in ROW_COLUMNS)
    summary.json     horizons, budgets, final error, first violations
    snapshots/       W_<k>.bin (row-major little-endian float64) + JSON sidecar

Every CSV row is a pure function of (W_k, k, config), so any row can be
recomputed from its snapshot alone; ``trajectory_row`` is that function.
Byte-identical reruns are guaranteed for a fixed config and seed on one
platform (the wall-clock ``runtime_seconds`` field in the summary is the sole
exception, and comparisons should drop it).
"""

from __future__ import annotations

import dataclasses
import json
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import StepRecord, flow_interpolate, gd_step_lifted, perturbation_E
from .errors import RankDeficient, ShapeMismatch, StepTooLarge
from .lifted import (
    LiftedState,
    ProblemSpec,
    beta_pair,
    canonicalize,
    check_init,
    derive,
    init_random,
    init_scaled_identity,
    make_problem_spec,
    synthesize_target,
)
from .linalg import frob, opnorm, svdvals
from .measurement import (
    MeasOp,
    ea_bound,
    estimate_rip,
    gaussian_operator,
    identity_operator,
)
from .monitors import (
    LOCAL_ITEMS,
    WARMUP_ITEMS,
    derivative_sign_suite,
    e_bound_report,
    final_error_report,
    identity_suite,
    local_report,
    warmup_report,
)

ROW_COLUMNS = (
    "t",
    "k",
    "norm_W",
    "norm_R",
    "norm_imbalance",
    "norm_PAJW",
    "norm_PNW",
    "lambda1_PPX",
    "norm_F",
    "norm_Wtilde",
    "sigma_r_A",
    "sigma_r1_W",
    "norm_E",
    "MR_t",
    "norm_PNWQ",
    "warmup_pass_bitmask",
    "local_pass_bitmask",
    "ebound_applicable",
    "ebound_pass",
)

_INT_COLUMNS = {"k", "warmup_pass_bitmask", "local_pass_bitmask", "ebound_applicable", "ebound_pass"}


@dataclass
class ExperimentConfig:
    m: int = 4
    n: int = 4
    r: int = 1
    h: int = 4
    kappa: float = 1.0
    y_file: str | None = None
    op_kind: str = "identity"
    N: int = 0
    rho_target: float = 0.0
    eta: float = 1e-2
    epsilon: float = 1e-3
    alpha: float = 1.0
    delta: float | None = None  # None resolves to the cap 1/(64 alpha kappa)
    init: str = "scaled_identity"
    C: float = 10.0
    steps: int | str = "auto"
    log_every: int | None = None  # None resolves to max(1, steps // 2000)
    seed: int = 0
    delta_eff: float | None = None
    derivative_checks: bool = False

    @classmethod
    def from_json(cls, path: str | Path, **overrides) -> "ExperimentConfig":
        data = json.loads(Path(path).read_text())
        unknown = set(data) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**data)

    def validate(self) -> None:
        if min(self.m, self.n, self.r, self.h) < 1:
            raise ValueError("dimensions m, n, r, h must be positive")
        if self.r > min(self.m, self.n):
            raise ValueError(f"rank r={self.r} exceeds min(m, n)={min(self.m, self.n)}")
        if self.h < self.r:
            raise ValueError(f"factor width h={self.h} is below r={self.r}")
        if self.op_kind not in ("identity", "gaussian"):
            raise ValueError(f"op_kind must be 'identity' or 'gaussian', got {self.op_kind!r}")
        if self.op_kind == "gaussian" and self.N < 1:
            raise ValueError("gaussian operator needs N >= 1 measurements")
        if self.init not in ("scaled_identity", "random"):
            raise ValueError(f"init must be 'scaled_identity' or 'random', got {self.init!r}")
        if self.init == "scaled_identity" and not (self.m == self.n == self.h):
            raise ShapeMismatch("scaled_identity init needs m = n = h")
        if self.eta <= 0 or self.epsilon <= 0 or self.alpha < 1:
            raise ValueError("need eta > 0, epsilon > 0, alpha >= 1")
        if isinstance(self.steps, str) and self.steps != "auto":
            raise ValueError(f"steps must be an integer or 'auto', got {self.steps!r}")
        if isinstance(self.steps, int) and self.steps < 0:
            raise ValueError("steps must be >= 0")


def _sub_seed(seed: int, stream: int) -> int:
    """Deterministic 64-bit sub-seed for an independent Philox stream."""
    return int(np.random.SeedSequence(seed, spawn_key=(stream,)).generate_state(1, np.uint64)[0])


# Stream tags for sub-seed derivation.
_STREAM_OP, _STREAM_INIT, _STREAM_RIP, _STREAM_PROBES = 0, 1, 2, 3


def build_problem(config: ExperimentConfig) -> tuple[ProblemSpec, MeasOp]:
    config.validate()
    if config.y_file is not None:
        Y_raw = np.loadtxt(config.y_file, ndmin=2)
        if Y_raw.shape != (config.m, config.n):
            raise ShapeMismatch(
                f"target file has shape {Y_raw.shape}, config says {(config.m, config.n)}"
            )
        Y, _, _ = canonicalize(Y_raw)
    else:
        Y = synthesize_target(config.m, config.n, config.r, config.kappa)
    sigma = np.diagonal(Y)
    kappa = float(sigma[0] / sigma[config.r - 1])
    delta = config.delta if config.delta is not None else 1.0 / (64.0 * config.alpha * kappa)
    spec = make_problem_spec(
        m=config.m,
        n=config.n,
        r=config.r,
        h=config.h,
        Y=Y,
        alpha=config.alpha,
        delta=delta,
        epsilon=config.epsilon,
        eta=config.eta,
        rho_target=config.rho_target,
        delta_eff=config.delta_eff,
    )
    if config.op_kind == "identity":
        op = identity_operator(config.m, config.n)
    else:
        op = gaussian_operator(config.m, config.n, config.N, _sub_seed(config.seed, _STREAM_OP))
    return spec, op


def build_init(config: ExperimentConfig, spec: ProblemSpec) -> np.ndarray:
    if config.init == "scaled_identity":
        return init_scaled_identity(spec)
    return init_random(spec, config.C, _sub_seed(config.seed, _STREAM_INIT))


def resolved_steps(config: ExperimentConfig, spec: ProblemSpec) -> int:
    if config.steps == "auto":
        return int(np.ceil(spec.T2 / spec.eta))
    return int(config.steps)


def resolved_log_every(config: ExperimentConfig, steps: int) -> int:
    if config.log_every is not None:
        if config.log_every < 1:
            raise ValueError("log_every must be >= 1")
        return config.log_every
    return max(1, steps // 2000)


@dataclass
class TrajectoryLog:
    header: dict
    rows: list[dict] = field(default_factory=list)


def trajectory_row(state: LiftedState, rec: StepRecord, spec: ProblemSpec) -> dict:
    """One CSV row: a pure function of the logged state and its step record."""
    wr = warmup_report(state, spec)
    lr = local_report(state, spec, state.t)
    eb = e_bound_report(rec, 0.0, spec)
    warm_mask = 0
    for bit, name in enumerate(WARMUP_ITEMS):
        warm_mask |= int(wr.items[name].passed) << bit
    local_mask = 0
    for bit, name in enumerate(LOCAL_ITEMS):
        local_mask |= int(lr.items[name].passed) << bit
    s_W = svdvals(state.W)
    sigma_r1 = float(s_W[spec.r]) if spec.r < s_W.size else 0.0
    applicable = bool(eb.info["applicable"])
    ebound_pass = eb.items["E_step_budget"].passed if applicable else True
    return {
        "t": state.t,
        "k": rec.k,
        "norm_W": wr.items["norm_W"].value,
        "norm_R": lr.items["norm_R"].value,
        "norm_imbalance": wr.items["norm_imbalance"].value,
        "norm_PAJW": wr.items["norm_PAJW"].value,
        "norm_PNW": wr.items["norm_PNW"].value,
        "lambda1_PPX": wr.items["lambda1_PPX"].value,
        "norm_F": wr.items["norm_F"].value,
        "norm_Wtilde": wr.items["norm_Wtilde"].value,
        "sigma_r_A": wr.items["sigma_r_A"].value,
        "sigma_r1_W": sigma_r1,
        "norm_E": float(eb.info["norm_E"]),
        "MR_t": float(lr.info["MR_t"]),
        "norm_PNWQ": lr.items["norm_PNWQ"].value,
        "warmup_pass_bitmask": warm_mask,
        "local_pass_bitmask": local_mask,
        "ebound_applicable": int(applicable),
        "ebound_pass": int(ebound_pass),
    }


def _format_cell(name: str, value) -> str:
    if name in _INT_COLUMNS:
        return str(int(value))
    return repr(float(value))


def write_trajectory_csv(path: Path, rows: list[dict]) -> None:
    lines = [",".join(ROW_COLUMNS)]
    for row in rows:
        lines.append(",".join(_format_cell(c, row[c]) for c in ROW_COLUMNS))
    path.write_text("\n".join(lines) + "\n")


def read_trajectory_csv(path: Path) -> list[dict]:
    lines = Path(path).read_text().strip().split("\n")
    names = lines[0].split(",")
    rows = []
    for line in lines[1:]:
        cells = line.split(",")
        rows.append(
            {c: (int(v) if c in _INT_COLUMNS else float(v)) for c, v in zip(names, cells)}
        )
    return rows


def write_snapshot(directory: Path, k: int, t: float, W: np.ndarray) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    stem = directory / f"W_{k:08d}"
    stem.with_suffix(".bin").write_bytes(np.ascontiguousarray(W, dtype="<f8").tobytes())
    stem.with_suffix(".json").write_text(
        json.dumps({"t": t, "rows": W.shape[0], "cols": W.shape[1]}, sort_keys=True)
    )


def read_snapshot(directory: Path, k: int) -> tuple[np.ndarray, float]:
    stem = Path(directory) / f"W_{k:08d}"
    meta = json.loads(stem.with_suffix(".json").read_text())
    W = np.frombuffer(stem.with_suffix(".bin").read_bytes(), dtype="<f8").reshape(
        meta["rows"], meta["cols"]
    )
    return W.astype(np.float64), float(meta["t"])


def _json_clean(obj):
    if isinstance(obj, dict):
        return {k: _json_clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    return obj


def write_summary(path: Path, summary: dict) -> None:
    path.write_text(json.dumps(_json_clean(summary), sort_keys=True, indent=1) + "\n")


def run(config: ExperimentConfig, out_dir: str | Path) -> tuple[TrajectoryLog, dict]:
    """Execute a configured run and write its artifacts into out_dir."""
    started = time.perf_counter()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec, op = build_problem(config)
    W0 = build_init(config, spec)
    steps = resolved_steps(config, spec)
    log_every = resolved_log_every(config, steps)
    init_report = check_init(W0, spec)
    header = {
        "version": __version__,
        "config": dataclasses.asdict(config),
        "steps": steps,
        "log_every": log_every,
        "init_pass": init_report.all_pass,
        "identity_suite_failures": 0,
        "sign_suite_failures": 0,
    }
    log = TrajectoryLog(header=header)
    first_warm: dict | None = None
    first_local: dict | None = None
    state = derive(W0, spec, t=0.0)
    snapshots = out / "snapshots"
    k = 0
    while True:
        t = k * spec.eta
        try:
            rec = gd_step_lifted(state, op, spec)
        except StepTooLarge as exc:
            raise StepTooLarge(exc.step_norm, k) from exc
        if k % log_every == 0 or k == steps:
            row = trajectory_row(state, rec, spec)
            log.rows.append(row)
            write_snapshot(snapshots, k, t, state.W)
            ids = identity_suite(state)
            if not ids.all_pass:
                header["identity_suite_failures"] += 1
                warnings.warn(f"identity suite failed at k={k}: {ids.failures}", stacklevel=2)
            if config.derivative_checks:
                E0 = perturbation_E(rec, 0.0, spec)
                phase = "local" if t >= spec.T1 else "warmup"
                signs = derivative_sign_suite(state, E0, spec, phase)
                if not signs.all_pass:
                    header["sign_suite_failures"] += 1
            if first_warm is None and t <= spec.T2 and row["warmup_pass_bitmask"] != (1 << 8) - 1:
                for bit, name in enumerate(WARMUP_ITEMS):
                    if not (row["warmup_pass_bitmask"] >> bit) & 1:
                        first_warm = {"t": t, "item": bit + 1}
                        break
            if first_local is None and spec.T1 <= t <= spec.T2 and row["local_pass_bitmask"] != 3:
                for bit in range(len(LOCAL_ITEMS)):
                    if not (row["local_pass_bitmask"] >> bit) & 1:
                        first_local = {"t": t, "item": bit + 1}
                        break
        if k == steps:
            break
        try:
            state = derive(rec.W_after, spec, t=(k + 1) * spec.eta)
        except RankDeficient as exc:
            raise RankDeficient(exc.sigma_min, f"at step k={k + 1}: {exc}") from exc
        k += 1
    final = final_error_report(state, spec)
    b20, b4 = beta_pair(spec)
    summary = {
        "config": dataclasses.asdict(config) | {"steps": steps, "log_every": log_every},
        "T1": spec.T1,
        "T2": spec.T2,
        "beta_20": b20,
        "beta_4": b4,
        "final_error": final.info["final_error"],
        "thm33_bound": final.info["thm_bound"],
        "MR_inf": final.info["MR_inf"],
        "first_warmup_violation": first_warm,
        "first_local_violation": first_local,
        "runtime_seconds": time.perf_counter() - started,
    }
    if op.kind == "gaussian":
        rip = estimate_rip(op, config.r + 1, 50, _sub_seed(config.seed, _STREAM_RIP))
        summary["rip_estimate"] = dataclasses.asdict(rip)
    write_trajectory_csv(out / "trajectory.csv", log.rows)
    write_summary(out / "summary.json", summary)
    return log, summary


def recompute_row(config: ExperimentConfig, out_dir: str | Path, k: int) -> dict:
    """Rebuild a CSV row from its snapshot alone (the reproducibility check)."""
    spec, op = build_problem(config)
    W, t = read_snapshot(Path(out_dir) / "snapshots", k)
    state = derive(W, spec, t=t)
    rec = gd_step_lifted(state, op, spec)
    return trajectory_row(state, rec, spec)


def flow_vs_gd(config: ExperimentConfig, probes: int, out_dir: str | Path | None = None) -> dict:
    """Compare the closed-form interpolant at s = 1 with the discrete iterate
    along a run, and record ||E|| at s in {0, 1/4, 1/2, 3/4} on probed steps
    next to the step budget."""
    spec, op = build_problem(config)
    steps = resolved_steps(config, spec)
    if steps < 1:
        raise ValueError("flow-vs-gd needs at least one step")
    rng = np.random.Generator(
        np.random.Philox(np.random.SeedSequence(config.seed, spawn_key=(_STREAM_PROBES,)))
    )
    probe_ks = sorted(set(rng.integers(0, steps, size=max(0, probes)).tolist()))
    state = derive(build_init(config, spec), spec, t=0.0)
    max_dev = 0.0
    probe_rows = []
    for k in range(steps):
        rec = gd_step_lifted(state, op, spec)
        dev = frob(flow_interpolate(rec, 1.0) - rec.W_after) / frob(rec.W_after)
        max_dev = max(max_dev, dev)
        if k in probe_ks:
            beta_h = max(20.0 * spec.eta * spec.norm_Y, 4.0 * np.sqrt(spec.r) * spec.rho_target)
            s_W = svdvals(rec.W_before)
            sig2 = float(s_W[spec.r]) ** 2 if spec.r < s_W.size else 0.0
            budget = beta_h * (opnorm(rec.R_k) + spec.gamma * sig2)
            norms = {
                f"norm_E_s{s}": opnorm(perturbation_E(rec, s, spec))
                for s in (0.0, 0.25, 0.5, 0.75)
            }
            probe_rows.append({"k": k, "step_budget": budget, **norms})
        state = derive(rec.W_after, spec, t=(k + 1) * spec.eta)
    result = {
        "steps": steps,
        "max_rel_deviation": max_dev,
        "probes": probe_rows,
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "flow_vs_gd.json").write_text(json.dumps(_json_clean(result), sort_keys=True, indent=1) + "\n")
    return result


def check_rip(
    config: ExperimentConfig,
    trials: int,
    probe_rank: int | None = None,
    out_dir: str | Path | None = None,
) -> dict:
    """Sampled isometry falsifier against the configured rho_target."""
    spec, op = build_problem(config)
    if op.kind == "identity":
        raise ValueError(
            "the identity operator is exactly isometric (rho = 0); nothing to estimate"
        )
    rank = probe_rank if probe_rank is not None else spec.r + 1
    est = estimate_rip(op, rank, trials, _sub_seed(config.seed, _STREAM_RIP))
    result = {
        "rho_hat": est.rho_hat,
        "trials": est.trials,
        "probe_rank": est.probe_rank,
        "seed": est.seed,
        "rho_target": spec.rho_target,
        "passed": est.rho_hat <= spec.rho_target,
        "caveat": "falsifier-only: a sampled max can refute rho_target, never certify it",
    }
    if trials == 0:
        result["warning"] = "trials=0: rho_hat=0 is vacuous"
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "rip_check.json").write_text(json.dumps(_json_clean(result), sort_keys=True, indent=1) + "\n")
    return result


# Finite-difference parameters, in units of s (so dt = ds * eta).  The ratio
# pair is deliberately coarse so truncation dominates the subtraction noise of
# nearly-converged quantities; the agreement step is the contractual 1e-4 * eta.
_FD_RATIO_DS = 5e-2
_FD_AGREE_DS = 1e-4


def _fd_error(rec: StepRecord, spec: ProblemSpec, s: float, ds: float):
    """Frobenius error of the centered difference against the equal-time
    analytic derivatives of W, F, Wtilde at fraction s."""
    from .dynamics import dF_dt, dWtilde_dt, flow_derivative_W

    state_s = derive(flow_interpolate(rec, s), spec, t=(rec.k + s) * rec.eta)
    E_s = perturbation_E(rec, s, spec)
    dt = ds * rec.eta
    plus = derive(flow_interpolate(rec, s + ds), spec)
    minus = derive(flow_interpolate(rec, s - ds), spec)
    errs = {
        "W": frob((plus.W - minus.W) / (2 * dt) - flow_derivative_W(rec, s, spec)),
        "F": frob((plus.F - minus.F) / (2 * dt) - dF_dt(state_s, E_s)),
        "Wtilde": frob((plus.Wtilde - minus.Wtilde) / (2 * dt) - dWtilde_dt(state_s, E_s)),
    }
    return errs


def verify_derivatives(
    config: ExperimentConfig, probes: int, out_dir: str | Path | None = None
) -> dict:
    """Cross-validate the analytic derivatives along a run.

    At each probed step the centered difference is evaluated at s = 1/2 with
    steps ds and ds/2 (ratio should be ~4 for a second-order stencil) and at
    the contractual cross-validation step 1e-4 * eta (absolute agreement).
    Probes where the alignment is rank deficient are skipped with a reason.
    """
    spec, op = build_problem(config)
    steps = resolved_steps(config, spec)
    if steps < 1:
        raise ValueError("verify-derivatives needs at least one step")
    rng = np.random.Generator(
        np.random.Philox(np.random.SeedSequence(config.seed, spawn_key=(_STREAM_PROBES,)))
    )
    probe_ks = set(rng.integers(0, steps, size=max(0, probes)).tolist())
    state = derive(build_init(config, spec), spec, t=0.0)
    rows = []
    for k in range(steps):
        rec = gd_step_lifted(state, op, spec)
        if k in probe_ks:
            try:
                coarse = _fd_error(rec, spec, 0.5, _FD_RATIO_DS)
                fine = _fd_error(rec, spec, 0.5, _FD_RATIO_DS / 2)
                agree = _fd_error(rec, spec, 0.5, _FD_AGREE_DS)
                row = {"k": k, "skipped": None}
                for q in ("W", "F", "Wtilde"):
                    ratio = coarse[q] / fine[q] if fine[q] > 0 else float("nan")
                    row[q] = {
                        "err_coarse": coarse[q],
                        "err_fine": fine[q],
                        "ratio": ratio,
                        "agreement": agree[q],
                    }
                rows.append(row)
            except RankDeficient as exc:
                rows.append({"k": k, "skipped": f"alignment rank deficient: {exc}"})
        state = derive(rec.W_after, spec, t=(k + 1) * spec.eta)
    result = {"steps": steps, "ds_ratio_pair": [_FD_RATIO_DS, _FD_RATIO_DS / 2],
              "ds_agreement": _FD_AGREE_DS, "probes": rows}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "derivative_check.json").write_text(
            json.dumps(_json_clean(result), sort_keys=True, indent=1) + "\n"
        )
    return result
