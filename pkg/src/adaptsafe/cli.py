"""Command-line front end: run scenarios, compare controllers, self-check.

``run`` simulates one scenario file and writes the CSV outputs, metrics and
figures into the output directory. ``compare`` does the same for several
scenario files plus a combined comparison table and figure. ``check`` runs
the plant diagnostics (input-channel factorization and the barrier
criterion). ``init-config`` writes the default case-study scenario to get
started.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import plant as plant_mod
from .export import (
    write_comparison_csv,
    write_run_outputs,
)
from .safety_filter import FilterConfig, cbf_criterion_check, matched_check
from .scenario import (
    Mode,
    ScenarioConfig,
    default_scenario,
    scenario_from_json,
    scenario_to_json,
)
from .simulate import RunLog, compare, run


def _apply_overrides(cfg: ScenarioConfig, args: argparse.Namespace) -> ScenarioConfig:
    changed = {}
    if args.seed is not None:
        changed["seed"] = args.seed
    if args.mode is not None:
        changed["mode"] = Mode(args.mode)
    if args.no_noise:
        changed["noise_on"] = False
    if not changed:
        return cfg
    return ScenarioConfig(
        mode=changed.get("mode", cfg.mode),
        duration=cfg.duration,
        dt=cfg.dt,
        log_stride=cfg.log_stride,
        seed=changed.get("seed", cfg.seed),
        noise_on=changed.get("noise_on", cfg.noise_on),
        stack_capacity=cfg.stack_capacity,
        control_divisor=cfg.control_divisor,
        plant=cfg.plant,
        prior=cfg.prior,
        filter=cfg.filter,
    )


def _print_metrics(log: RunLog) -> None:
    m = log.metrics
    print(f"mode:                   {log.config.mode.value}")
    print(f"min h:                  {m.min_h:.6g}")
    print(f"rms tracking error:     {m.rms_tracking_error:.6g} m")
    print(f"final parameter error:  {m.final_param_error:.6g}")
    fe = "never" if m.time_to_fe is None else f"{m.time_to_fe:.3f} s"
    print(f"excitation reached at:  {fe}")
    print(f"containment violations: {m.containment_violations}")
    print(f"QP infeasible steps:    {m.qp_infeasible_count}")
    print(f"safety certificate:     {'ok' if m.safety_certificate_ok else 'FAILED'}")


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = _apply_overrides(scenario_from_json(args.config), args)
    log = run(cfg)
    outdir = Path(args.out)
    paths = write_run_outputs(log, outdir)
    if not args.no_plots:
        from .figures import render_run_figures

        paths.update(render_run_figures(log, outdir))
    _print_metrics(log)
    print(f"outputs in {outdir}:")
    for name in sorted(paths):
        print(f"  {paths[name].name}")
    return 0


def _cmd_compare(args: argparse.Namespace) -> int:
    config_paths = [p for p in args.configs.split(",") if p]
    if len(config_paths) < 2:
        print("compare needs at least two configs", file=sys.stderr)
        return 2
    cfgs = [scenario_from_json(p) for p in config_paths]
    comparison = compare(cfgs)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    for i, log in enumerate(comparison.logs):
        write_run_outputs(log, outdir / f"{i:02d}_{log.config.mode.value}")
    write_comparison_csv(comparison, outdir / "comparison.csv")
    if not args.no_plots:
        from .figures import comparison_figure

        comparison_figure(comparison.logs, outdir / "comparison.png")
    for mode, m in zip(comparison.modes, comparison.metrics):
        print(
            f"{mode:18s} min_h={m.min_h: .4g}  rms={m.rms_tracking_error:.4g}  "
            f"theta_err={m.final_param_error:.4g}"
        )
    print("ordering checks:")
    for key, value in comparison.ordering.items():
        shown = "n/a" if value is None else ("ok" if value else "FAILED")
        print(f"  {key}: {shown}")
    failed = any(v is False for v in comparison.ordering.values())
    return 1 if failed else 0


def _cmd_check(args: argparse.Namespace) -> int:
    cfg = (
        scenario_from_json(args.config)
        if args.config
        else default_scenario(Mode.ZONOTOPE_ADAPTIVE)
    )
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    states = [rng.uniform(-5.0, 5.0, size=4) for _ in range(args.samples)]

    matched = matched_check(
        states, plant_mod.parameter_matrix, plant_mod.input_matrix, plant_mod.regressor
    )
    print(
        f"input-channel factorization: max residual {matched.max_residual:.3e} "
        f"over {matched.n_states} states"
    )
    ok = matched.max_residual < 1e-9

    fcfg = cfg.filter if isinstance(cfg.filter, FilterConfig) else FilterConfig()
    for i, obs in enumerate(cfg.plant.obstacles):
        report = cbf_criterion_check(
            states, lambda x, o=obs: plant_mod.barrier_eval(x, o, cfg.plant.mu), fcfg
        )
        print(
            f"barrier criterion (obstacle {i + 1}): {report.n_tested} degenerate "
            f"states tested, {len(report.violations)} violation(s)"
        )
        ok = ok and report.compliant
    print("check:", "ok" if ok else "FAILED")
    return 0 if ok else 1


def _cmd_init_config(args: argparse.Namespace) -> int:
    cfg = default_scenario(Mode(args.mode))
    scenario_to_json(cfg, args.out)
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adaptsafe",
        description="Closed-loop adaptive safety-filter simulations",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    mode_names = [m.value for m in Mode]

    p_run = sub.add_parser("run", help="simulate one scenario file")
    p_run.add_argument("--config", required=True, help="scenario JSON file")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--seed", type=int, default=None, help="override the seed")
    p_run.add_argument("--mode", choices=mode_names, default=None,
                       help="override the controller mode")
    p_run.add_argument("--no-noise", action="store_true",
                       help="disable measurement noise")
    p_run.add_argument("--no-plots", action="store_true",
                       help="skip figure rendering")
    p_run.set_defaults(func=_cmd_run)

    p_cmp = sub.add_parser("compare", help="run several scenarios and rank them")
    p_cmp.add_argument("--configs", required=True,
                       help="comma-separated scenario JSON files")
    p_cmp.add_argument("--out", required=True, help="output directory")
    p_cmp.add_argument("--no-plots", action="store_true",
                       help="skip figure rendering")
    p_cmp.set_defaults(func=_cmd_compare)

    p_chk = sub.add_parser("check", help="plant structure diagnostics")
    p_chk.add_argument("--config", default=None, help="scenario JSON file")
    p_chk.add_argument("--samples", type=int, default=200,
                       help="number of random states to test")
    p_chk.add_argument("--seed", type=int, default=None)
    p_chk.set_defaults(func=_cmd_check)

    p_init = sub.add_parser("init-config", help="write the default scenario file")
    p_init.add_argument("--out", required=True, help="destination JSON path")
    p_init.add_argument("--mode", choices=mode_names,
                        default=Mode.ZONOTOPE_ADAPTIVE.value)
    p_init.set_defaults(func=_cmd_init_config)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
