"""Scenario description and its JSON wire format.

A scenario bundles everything one closed-loop run needs: controller mode,
timing, seed, plant layout, estimation prior and filter settings. The JSON
form mirrors the dataclasses field for field; unknown keys are rejected so
typos fail loudly instead of silently running defaults.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Union

import numpy as np

from .plant import ObstacleSpec, PlantConfig
from .regression import Prior
from .safety_filter import FilterConfig, GAUSSIAN, OFF, ROBUST, ROBUST_FIXED


class Mode(enum.Enum):
    """Controller variants compared by the case study."""

    ACLF_ONLY = "AclfOnly"
    ROBUST_FIXED = "RobustFixed"
    ZONOTOPE_ADAPTIVE = "ZonotopeAdaptive"
    GAUSSIAN_ADAPTIVE = "GaussianAdaptive"


# Which filter behavior each scenario mode implies.
FILTER_MODE_FOR = {
    Mode.ACLF_ONLY: OFF,
    Mode.ROBUST_FIXED: ROBUST_FIXED,
    Mode.ZONOTOPE_ADAPTIVE: ROBUST,
    Mode.GAUSSIAN_ADAPTIVE: GAUSSIAN,
}

# Modes that collect data online and propagate the estimator.
ADAPTIVE_MODES = frozenset(
    {Mode.ACLF_ONLY, Mode.ZONOTOPE_ADAPTIVE, Mode.GAUSSIAN_ADAPTIVE}
)


def _default_prior() -> Prior:
    return Prior(np.array([-0.1, 0.1]), 2.0 * np.eye(2))


@dataclass
class ScenarioConfig:
    """Complete description of one closed-loop experiment."""

    mode: Mode
    duration: float = 20.0
    dt: float = 1e-3
    log_stride: int = 10
    seed: int = 0
    noise_on: bool = True
    stack_capacity: int = 20
    control_divisor: int = 1
    sample_stride: int = 1
    plant: PlantConfig = field(default_factory=PlantConfig)
    prior: Prior = field(default_factory=_default_prior)
    filter: FilterConfig = field(default_factory=FilterConfig)

    def __post_init__(self) -> None:
        if isinstance(self.mode, str):
            self.mode = Mode(self.mode)
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if self.duration < 0.0:
            raise ValueError("duration must be nonnegative")
        if self.log_stride < 1:
            raise ValueError("log_stride must be at least 1")
        if self.stack_capacity < 1:
            raise ValueError("stack_capacity must be at least 1")
        if self.control_divisor < 1:
            raise ValueError("control_divisor must be at least 1")
        if self.sample_stride < 1:
            raise ValueError("sample_stride must be at least 1")
        expected = FILTER_MODE_FOR[self.mode]
        if self.filter.mode != expected:
            # Rebuild rather than mutate so a shared FilterConfig stays intact.
            self.filter = FilterConfig(
                alpha_gain=self.filter.alpha_gain,
                delta=self.filter.delta,
                c_delta=self.filter.c_delta,
                mode=expected,
            )

    @property
    def adaptive(self) -> bool:
        return self.mode in ADAPTIVE_MODES

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))


def default_scenario(mode: Mode = Mode.ZONOTOPE_ADAPTIVE, **overrides: Any) -> ScenarioConfig:
    """The case-study scenario with optional field overrides."""
    return ScenarioConfig(mode=mode, **overrides)


def _reject_unknown(data: dict, allowed: set[str], where: str) -> None:
    unknown = set(data) - allowed
    if unknown:
        raise ValueError(f"unknown key(s) in {where}: {sorted(unknown)}")


def _as_matrix(value: Any, size: int, where: str) -> np.ndarray:
    """Accept a full nested list or a scalar shorthand for scale * identity."""
    if isinstance(value, (int, float)):
        return float(value) * np.eye(size)
    mat = np.asarray(value, dtype=float)
    if mat.shape != (size, size):
        raise ValueError(f"{where} must be {size}x{size} or a scalar")
    return mat


def _plant_from_dict(data: dict) -> PlantConfig:
    _reject_unknown(
        data, {"theta_true", "obstacles", "mu", "noise_cov", "kp", "kd"}, "plant"
    )
    kwargs: dict[str, Any] = {}
    if "theta_true" in data:
        kwargs["theta_true"] = np.asarray(data["theta_true"], dtype=float)
    if "obstacles" in data:
        obstacles = []
        for i, entry in enumerate(data["obstacles"]):
            _reject_unknown(entry, {"center", "radius"}, f"plant.obstacles[{i}]")
            obstacles.append(
                ObstacleSpec(np.asarray(entry["center"], dtype=float), float(entry["radius"]))
            )
        kwargs["obstacles"] = obstacles
    if "mu" in data:
        kwargs["mu"] = float(data["mu"])
    if "noise_cov" in data:
        kwargs["noise_cov"] = _as_matrix(data["noise_cov"], 4, "plant.noise_cov")
    if "kp" in data:
        kwargs["kp"] = _as_matrix(data["kp"], 2, "plant.kp")
    if "kd" in data:
        kwargs["kd"] = _as_matrix(data["kd"], 2, "plant.kd")
    return PlantConfig(**kwargs)


def _prior_from_dict(data: dict) -> Prior:
    _reject_unknown(data, {"theta_bar0", "sigma0"}, "prior")
    theta_bar0 = np.asarray(data["theta_bar0"], dtype=float)
    sigma0 = _as_matrix(data["sigma0"], theta_bar0.shape[0], "prior.sigma0")
    return Prior(theta_bar0, sigma0)


def _filter_from_dict(data: dict) -> FilterConfig:
    _reject_unknown(data, {"alpha_gain", "delta", "c_delta", "mode"}, "filter")
    kwargs: dict[str, Any] = {}
    for key in ("alpha_gain", "delta", "c_delta"):
        if key in data and data[key] is not None:
            kwargs[key] = float(data[key])
    if "mode" in data:
        kwargs["mode"] = str(data["mode"])
    return FilterConfig(**kwargs)


_SCENARIO_KEYS = {
    "mode",
    "duration",
    "dt",
    "log_stride",
    "seed",
    "noise_on",
    "stack_capacity",
    "control_divisor",
    "sample_stride",
    "plant",
    "prior",
    "filter",
}


def scenario_from_dict(data: dict) -> ScenarioConfig:
    """Build a scenario from its JSON object form; unknown keys are errors."""
    _reject_unknown(data, _SCENARIO_KEYS, "scenario")
    if "mode" not in data:
        raise ValueError("scenario requires a 'mode' key")
    kwargs: dict[str, Any] = {"mode": Mode(data["mode"])}
    for key in ("duration", "dt"):
        if key in data:
            kwargs[key] = float(data[key])
    for key in ("log_stride", "seed", "stack_capacity", "control_divisor", "sample_stride"):
        if key in data:
            kwargs[key] = int(data[key])
    if "noise_on" in data:
        kwargs["noise_on"] = bool(data["noise_on"])
    if "plant" in data:
        kwargs["plant"] = _plant_from_dict(data["plant"])
    if "prior" in data:
        kwargs["prior"] = _prior_from_dict(data["prior"])
    if "filter" in data:
        filt = _filter_from_dict(data["filter"])
        expected = FILTER_MODE_FOR[kwargs["mode"]]
        if "mode" in data["filter"] and filt.mode != expected:
            raise ValueError(
                f"filter.mode {filt.mode!r} conflicts with scenario mode "
                f"{kwargs['mode'].value!r} (expects {expected!r})"
            )
        kwargs["filter"] = filt
    return ScenarioConfig(**kwargs)


def scenario_from_json(path: Union[str, Path]) -> ScenarioConfig:
    """Load a scenario from a JSON file."""
    with open(path, "r", encoding="utf-8") as handle:
        data = json.load(handle)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: scenario file must contain a JSON object")
    return scenario_from_dict(data)


def scenario_to_dict(cfg: ScenarioConfig) -> dict:
    """Scenario as a JSON-serializable object (inverse of scenario_from_dict)."""
    return {
        "mode": cfg.mode.value,
        "duration": cfg.duration,
        "dt": cfg.dt,
        "log_stride": cfg.log_stride,
        "seed": cfg.seed,
        "noise_on": cfg.noise_on,
        "stack_capacity": cfg.stack_capacity,
        "control_divisor": cfg.control_divisor,
        "sample_stride": cfg.sample_stride,
        "plant": {
            "theta_true": cfg.plant.theta_true.tolist(),
            "obstacles": [
                {"center": o.center.tolist(), "radius": o.radius}
                for o in cfg.plant.obstacles
            ],
            "mu": cfg.plant.mu,
            "noise_cov": cfg.plant.noise_cov.tolist(),
            "kp": cfg.plant.kp.tolist(),
            "kd": cfg.plant.kd.tolist(),
        },
        "prior": {
            "theta_bar0": cfg.prior.theta_bar0.tolist(),
            "sigma0": cfg.prior.sigma0.tolist(),
        },
        "filter": {
            "alpha_gain": cfg.filter.alpha_gain,
            "delta": cfg.filter.delta,
            "c_delta": cfg.filter.c_delta,
            "mode": cfg.filter.mode,
        },
    }


def scenario_to_json(cfg: ScenarioConfig, path: Union[str, Path]) -> None:
    """Write the scenario to a JSON file."""
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(scenario_to_dict(cfg), handle, indent=2)
        handle.write("\n")
