"""Command line interface.

Subcommands:
    run                 execute a configured run, write trajectory/summary/snapshots
    flow-vs-gd          compare the closed-form interpolant with the discrete iterates
    check-rip           sampled isometry falsifier against rho_target
    verify-derivatives  finite-difference cross-validation of the analytic derivatives

Configuration comes from an optional JSON file (--config) whose keys mirror
ExperimentConfig; any flag given on the command line overrides the file.
--seed and --out-dir are always required.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from .experiment import (
    ExperimentConfig,
    check_rip,
    flow_vs_gd,
    run,
    verify_derivatives,
)


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--seed", type=int, required=True, help="64-bit run seed")
    p.add_argument("--out-dir", required=True, help="directory for artifacts")
    p.add_argument("--m", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--r", type=int)
    p.add_argument("--h", type=int)
    p.add_argument("--kappa", type=float)
    p.add_argument("--y-file", dest="y_file")
    p.add_argument("--op-kind", dest="op_kind", choices=("identity", "gaussian"))
    p.add_argument("--N", type=int, dest="N")
    p.add_argument("--rho-target", dest="rho_target", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--init", choices=("scaled_identity", "random"))
    p.add_argument("--C", type=float, dest="C")
    p.add_argument("--steps", help="step count or 'auto' (= ceil(T2/eta))")
    p.add_argument("--log-every", dest="log_every", type=int)
    p.add_argument(
        "--delta-eff",
        dest="delta_eff",
        type=float,
        help="monitoring-only delta; certificate bounds use it instead of the "
        "theorem delta (the run is then monitored outside the theorem)",
    )
    p.add_argument(
        "--derivative-checks",
        dest="derivative_checks",
        action="store_const",
        const=True,
        help="evaluate the derivative sign suite at every logged step",
    )


_CONFIG_KEYS = [f.name for f in dataclasses.fields(ExperimentConfig)]


def _make_config(args: argparse.Namespace) -> ExperimentConfig:
    overrides = {k: getattr(args, k, None) for k in _CONFIG_KEYS}
    overrides["seed"] = args.seed
    if overrides.get("steps") is not None and overrides["steps"] != "auto":
        overrides["steps"] = int(overrides["steps"])
    if args.config:
        return ExperimentConfig.from_json(args.config, **overrides)
    defaults = ExperimentConfig()
    merged = {
        k: (v if v is not None else getattr(defaults, k)) for k, v in overrides.items()
    }
    return ExperimentConfig(**merged)


def _print_report_line(name: str, passed: bool, detail: str = "") -> None:
    mark = "pass" if passed else "FAIL"
    print(f"[{mark}] {name}" + (f": {detail}" if detail else ""))


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="pgflow", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a configured run")
    _add_config_flags(p_run)

    p_flow = sub.add_parser("flow-vs-gd", help="interpolant vs discrete iterates")
    _add_config_flags(p_flow)
    p_flow.add_argument("--probes", type=int, default=8, help="steps to probe for ||E||")

    p_rip = sub.add_parser("check-rip", help="sampled isometry falsifier")
    _add_config_flags(p_rip)
    p_rip.add_argument("--trials", type=int, default=200)
    p_rip.add_argument("--probe-rank", dest="probe_rank", type=int, default=None)

    p_der = sub.add_parser("verify-derivatives", help="finite-difference cross-validation")
    _add_config_flags(p_der)
    p_der.add_argument("--probes", type=int, default=20)

    args = parser.parse_args(argv)
    config = _make_config(args)

    if args.command == "run":
        log, summary = run(config, args.out_dir)
        print(f"steps={log.header['steps']} log_every={log.header['log_every']} "
              f"rows={len(log.rows)}")
        print(f"T1={summary['T1']:.6g} T2={summary['T2']:.6g} "
              f"beta_20={summary['beta_20']:.6g} beta_4={summary['beta_4']:.6g}")
        print(f"final_error={summary['final_error']:.6g} "
              f"thm33_bound={summary['thm33_bound']:.6g} MR_inf={summary['MR_inf']:.6g}")
        for key in ("first_warmup_violation", "first_local_violation"):
            v = summary[key]
            print(f"{key}: " + ("none" if v is None else f"t={v['t']:.6g} item={v['item']}"))
        print(f"artifacts in {args.out_dir}")
        return 0

    if args.command == "flow-vs-gd":
        result = flow_vs_gd(config, args.probes, args.out_dir)
        _print_report_line(
            "flow/GD coincidence",
            result["max_rel_deviation"] <= 1e-8,
            f"max relative deviation {result['max_rel_deviation']:.3e} over {result['steps']} steps",
        )
        for row in result["probes"]:
            print(
                f"  k={row['k']}: budget={row['step_budget']:.3e} "
                + " ".join(f"||E||(s={s})={row[f'norm_E_s{s}']:.3e}" for s in (0.0, 0.25, 0.5, 0.75))
            )
        return 0

    if args.command == "check-rip":
        try:
            result = check_rip(config, args.trials, args.probe_rank, args.out_dir)
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        if "warning" in result:
            print(f"warning: {result['warning']}", file=sys.stderr)
        _print_report_line(
            f"rho_hat <= rho_target ({result['caveat']})",
            result["passed"],
            f"rho_hat={result['rho_hat']:.4f} rho_target={result['rho_target']:.4f} "
            f"trials={result['trials']} probe_rank={result['probe_rank']}",
        )
        return 0 if result["passed"] else 1

    result = verify_derivatives(config, args.probes, args.out_dir)
    print(f"centered-difference steps (in s): {result['ds_ratio_pair']}, "
          f"agreement step {result['ds_agreement']}")
    print("k      quantity  err(ds)      err(ds/2)    ratio   |fd - analytic| @ 1e-4*eta")
    for row in result["probes"]:
        if row.get("skipped"):
            print(f"{row['k']:<6d} skipped: {row['skipped']}")
            continue
        for q in ("W", "F", "Wtilde"):
            cell = row[q]
            print(
                f"{row['k']:<6d} {q:<9s} {cell['err_coarse']:<12.3e} {cell['err_fine']:<12.3e} "
                f"{cell['ratio']:<7.3f} {cell['agreement']:.3e}"
            )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
