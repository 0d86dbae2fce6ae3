"""Delimited exports of run logs, stacks and comparisons.

All files are UTF-8 CSV with a ``.`` decimal separator and a single header
row; floats are written with repr-faithful precision so identical runs
produce byte-identical files. Column orders below are stable.

trajectory.csv: t, q1, q2, v1, v2, u1, u2, k0_1, k0_2, qd1, qd2
params.csv:     t, theta_hat_1..p, gamma_11..gamma_pp (row-major), lambda_min, contains_truth
sets.csv:       t, zc_1..p, zg_11..pp (row-major), gm_1..p, gcov_11..pp (row-major)
filter.csv:     t, mode, h_1..n, slack_1..n, du_norm, active_set, feasible
history_stack.csv: t, slot, y_1..n, phi_11..phi_np (row-major)
comparison.csv: mode, min_h, rms_tracking_error, final_param_error, time_to_fe,
                containment_violations, qp_infeasible_count, safety_certificate_ok
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Union

import numpy as np

from .regression import HistoryStack
from .simulate import Comparison, RunLog


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def _open_writer(path: Path):
    handle = open(path, "w", encoding="utf-8", newline="")
    return handle, csv.writer(handle)


def write_trajectory_csv(log: RunLog, path: Union[str, Path]) -> None:
    from .plant import desired_trajectory

    path = Path(path)
    header = ["t", "q1", "q2", "v1", "v2", "u1", "u2", "k0_1", "k0_2", "qd1", "qd2"]
    handle, writer = _open_writer(path)
    with handle:
        writer.writerow(header)
        for i in range(len(log)):
            q_d, _, _ = desired_trajectory(float(log.t[i]))
            row = [
                log.t[i],
                log.x[i, 0],
                log.x[i, 1],
                log.x[i, 2],
                log.x[i, 3],
                log.u[i, 0],
                log.u[i, 1],
                log.k0[i, 0],
                log.k0[i, 1],
                q_d[0],
                q_d[1],
            ]
            writer.writerow([_fmt(v) for v in row])


def write_params_csv(log: RunLog, path: Union[str, Path]) -> None:
    path = Path(path)
    p = log.theta_hat.shape[1]
    header = ["t"]
    header += [f"theta_hat_{i + 1}" for i in range(p)]
    header += [f"gamma_{i + 1}{j + 1}" for i in range(p) for j in range(p)]
    header += ["lambda_min", "contains_truth"]
    handle, writer = _open_writer(path)
    with handle:
        writer.writerow(header)
        for i in range(len(log)):
            row = [log.t[i], *log.theta_hat[i], *log.gamma[i].ravel()]
            row += [log.lambda_min[i], log.contains_truth[i]]
            writer.writerow([_fmt(v) for v in row])


def write_sets_csv(log: RunLog, path: Union[str, Path]) -> None:
    """Zonotope and Gaussian snapshots per logged instant.

    The zonotope is (theta_hat, gamma); the Gaussian covariance is the prior
    weight pushed through the estimator map, recomputed from the logged gain.
    """
    path = Path(path)
    p = log.theta_hat.shape[1]
    sigma0_inv = log.config.prior.sigma0_inv
    header = ["t"]
    header += [f"zc_{i + 1}" for i in range(p)]
    header += [f"zg_{i + 1}{j + 1}" for i in range(p) for j in range(p)]
    header += [f"gm_{i + 1}" for i in range(p)]
    header += [f"gcov_{i + 1}{j + 1}" for i in range(p) for j in range(p)]
    handle, writer = _open_writer(path)
    with handle:
        writer.writerow(header)
        for i in range(len(log)):
            gamma = log.gamma[i]
            cov = gamma @ sigma0_inv @ gamma.T
            cov = 0.5 * (cov + cov.T)
            row = [log.t[i], *log.theta_hat[i], *gamma.ravel()]
            row += [*log.theta_hat[i], *cov.ravel()]
            writer.writerow([_fmt(v) for v in row])


def write_filter_csv(log: RunLog, path: Union[str, Path]) -> None:
    path = Path(path)
    n_obs = log.h.shape[1]
    header = ["t", "mode"]
    header += [f"h_{i + 1}" for i in range(n_obs)]
    header += [f"slack_{i + 1}" for i in range(n_obs)]
    header += ["du_norm", "active_set", "feasible"]
    mode = log.config.mode.value
    handle, writer = _open_writer(path)
    with handle:
        writer.writerow(header)
        for i in range(len(log)):
            active = "|".join(str(j) for j in log.active_sets[i])
            row = [_fmt(log.t[i]), mode]
            row += [_fmt(v) for v in log.h[i]]
            row += [_fmt(v) for v in log.slack[i]]
            row += [_fmt(log.du_norm[i]), active, _fmt(bool(log.feasible[i]))]
            writer.writerow(row)


def write_metrics_json(log: RunLog, path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(log.metrics.as_dict(), handle, indent=2)
        handle.write("\n")


def write_history_stack_csv(stack: HistoryStack, path: Union[str, Path]) -> None:
    """Stored samples, one row per slot, regressor entries row-major."""
    path = Path(path)
    handle, writer = _open_writer(path)
    with handle:
        if stack.n is None:
            writer.writerow(["t", "slot"])
            return
        n, p = stack.n, stack.p
        header = ["t", "slot"]
        header += [f"y_{i + 1}" for i in range(n)]
        header += [f"phi_{i + 1}{j + 1}" for i in range(n) for j in range(p)]
        writer.writerow(header)
        for slot, sample in enumerate(stack.slots):
            row = [sample.t, slot, *sample.y, *sample.phi.ravel()]
            writer.writerow([_fmt(v) for v in row])


def write_comparison_csv(comparison: Comparison, path: Union[str, Path]) -> None:
    path = Path(path)
    header = [
        "mode",
        "min_h",
        "rms_tracking_error",
        "final_param_error",
        "time_to_fe",
        "containment_violations",
        "qp_infeasible_count",
        "safety_certificate_ok",
    ]
    handle, writer = _open_writer(path)
    with handle:
        writer.writerow(header)
        for mode, m in zip(comparison.modes, comparison.metrics):
            row = [
                mode,
                _fmt(m.min_h),
                _fmt(m.rms_tracking_error),
                _fmt(m.final_param_error),
                "" if m.time_to_fe is None else _fmt(m.time_to_fe),
                _fmt(m.containment_violations),
                _fmt(m.qp_infeasible_count),
                _fmt(m.safety_certificate_ok),
            ]
            writer.writerow(row)


def write_run_outputs(log: RunLog, outdir: Union[str, Path]) -> dict[str, Path]:
    """Write the full set of delimited outputs for one run."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = {
        "trajectory": outdir / "trajectory.csv",
        "params": outdir / "params.csv",
        "sets": outdir / "sets.csv",
        "filter": outdir / "filter.csv",
        "metrics": outdir / "metrics.json",
    }
    write_trajectory_csv(log, paths["trajectory"])
    write_params_csv(log, paths["params"])
    write_sets_csv(log, paths["sets"])
    write_filter_csv(log, paths["filter"])
    write_metrics_json(log, paths["metrics"])
    if log.final_stack is not None:
        paths["history_stack"] = outdir / "history_stack.csv"
        write_history_stack_csv(log.final_stack, paths["history_stack"])
    return paths
