"""Experiment configuration: defaults, presets, YAML loading, validation.

One YAML file describes a whole experiment cell; omitted fields fall back
to the shipped default profile (the four-hospital West/East/South/Central
system with its published cost, distance and secondment settings, a
27-week horizon and 30/25/5 path counts).  Unknown keys and invariant
violations are all reported together with their field paths.
"""

from __future__ import annotations

import copy
from pathlib import Path

import numpy as np
import yaml

from .core import CostParams, HorizonConfig, NetworkConfig
from .planner import RoundingPolicy
from .simulator import ArrivalModelParams, TransitionModel

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "default_profile",
    "preset_profile",
    "PRESETS",
    "load_config",
    "config_from_dict",
]

HOSPITALS = ("West", "East", "South", "Central")
DISTANCES_4 = [
    [0.0, 88.0, 110.0, 62.0],
    [88.0, 0.0, 112.0, 56.0],
    [110.0, 112.0, 0.0, 52.0],
    [62.0, 56.0, 52.0, 0.0],
]
AR_COEFFS = [0.061, -0.165, -0.042, -0.072, -0.148, 0.035, 0.588]
ADJUSTED_MOVE_PROBS = [
    [0.05, 0.2, 0.1, 0.65],
    [0.25, 0.05, 0.1, 0.6],
    [0.5, 0.4, 0.05, 0.05],
]
ESTIMATED_MOVE_PROBS = [
    [0.7675, 0.0125, 0.0124, 0.2076],
    [0.0852, 0.7463, 0.0258, 0.1427],
    [0.1044, 0.0596, 0.7849, 0.0511],
]
ARRIVAL_SPLIT = [0.7659, 0.153, 0.0811]

SECONDMENT_SCENARIOS = {"baseline": 2, "one_day": 1, "three_day": 3, "seven_day": 7}


class ConfigError(ValueError):
    """Carries every validation failure at once, with field paths."""

    def __init__(self, errors: list[str]):
        self.errors = errors
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {e}" for e in errors))


def default_profile() -> dict:
    """The shipped baseline parameter profile as a plain nested dict."""
    return {
        "name": "baseline",
        "network": "fully_connected",
        "secondment": "baseline",
        "method": "both",
        "seed": 0,
        "output_dir": "out",
        "jobs": 1,
        "freeze_paths": None,
        "clip_support": True,
        "epsilon": {"mode": "adaptive", "upsilon": 2.0, "schedule": None},
        "counts": {
            "testing_paths": 30,
            "training_paths": 25,
            "training_sets": 5,
            "weeks": 27,
            "week_days": 7,
        },
        "costs": {
            "premium": 1.0,
            "emergency_multiplier": 1.6,
            "cancellation_pct": 0.05,
            "shortage": 15.0,
            "coordination": 0.0,
        },
        "locations": {
            "names": list(HOSPITALS),
            "hub": 3,
            "distances": [row[:] for row in DISTANCES_4],
            "bonus_min": 1.1,
            "bonus_per_mile": 0.01,
            "secondment_matrix": None,  # set for secondment: custom
        },
        "arrival": {
            "phi": AR_COEFFS[:],
            "kappa0": 135.0,
            "week_pattern": [1.0] * 7,
            "location_scale": [0.3, 0.4, 0.5, 1.0],
            "t_start": 1,
            "t_peak": 49,
            "t_end": 119,
            "peak_factor": 1.5,
            "noise_scale": 1.0,
            "spatial_decay": 6.5,
            "spatial_lag": 7,
            "spatial_window": 7,
            "spatial_seed_frac": 0.1,
        },
        "transitions": {
            "move_probs": [row[:] for row in ADJUSTED_MOVE_PROBS],
            "arrival_split": ARRIVAL_SPLIT[:],
        },
        "capacity": {
            "initial": [40, 120, 110, 130],
            "adjust_scale": [0.11, 0.17, 0.17, 0.115],
            "step_up": 2.0,
            "step_down": 0.8,
        },
        "estimation": {"window_weeks": 3},
        "rounding": {"mode": "randomized"},
    }


def _preset_special_one_shortage(profile: dict) -> dict:
    # only West runs short: damp the Central arrival scale; transfers are
    # restricted to West<->Central (hub net) or West<->South (full net)
    profile["name"] = "special_one_shortage"
    profile["arrival"]["location_scale"] = [0.3, 0.4, 0.5, 0.55]
    profile["locations"]["arc_restriction"] = {
        "hub_and_spoke": [[0, 3], [3, 0]],
        "fully_connected": [[0, 2], [2, 0]],
    }
    return profile


def _preset_low_transfer_cost(profile: dict) -> dict:
    profile["name"] = "low_transfer_cost"
    profile["locations"]["bonus_min"] = 0.1
    return profile


def _preset_higher_peak(profile: dict) -> dict:
    profile["name"] = "higher_peak"
    profile["arrival"]["peak_factor"] = 1.7
    profile["epsilon"]["upsilon"] = 5.0
    return profile


def _preset_six_week_window(profile: dict) -> dict:
    profile["name"] = "six_week_window"
    profile["estimation"]["window_weeks"] = 6
    return profile


def _preset_estimated_transitions(profile: dict) -> dict:
    # longer stays triple the demand per arrival; rescale arrivals to keep
    # the published staffing levels meaningful
    profile["name"] = "estimated_transitions"
    profile["transitions"]["move_probs"] = [row[:] for row in ESTIMATED_MOVE_PROBS]
    profile["arrival"]["kappa0"] = 45.8
    return profile


PRESETS = {
    "baseline": lambda p: p,
    "special_one_shortage": _preset_special_one_shortage,
    "low_transfer_cost": _preset_low_transfer_cost,
    "higher_peak": _preset_higher_peak,
    "six_week_window": _preset_six_week_window,
    "estimated_transitions": _preset_estimated_transitions,
}


def preset_profile(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError([f"preset: unknown preset {name!r} (have {sorted(PRESETS)})"])
    return PRESETS[name](default_profile())


def _merge(base: dict, override: dict, path: str, errors: list[str], open_keys=("arc_restriction",)) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base and key not in open_keys:
            errors.append(f"{where}: unknown key")
            continue
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            out[key] = _merge(base[key], value, where, errors, open_keys)
        else:
            out[key] = copy.deepcopy(value)
    return out


class ExperimentConfig:
    """Validated experiment description plus resolved model objects."""

    def __init__(self, raw: dict):
        errors: list[str] = []
        self.raw = raw
        self.name = str(raw["name"])
        method = raw["method"]
        if method not in ("saa", "sro", "both"):
            errors.append(f"method: must be saa, sro or both, got {method!r}")
        self.methods = ("saa", "sro") if method == "both" else (str(method),)
        self.network_kind = raw["network"]
        if self.network_kind not in ("fully_connected", "hub_and_spoke"):
            errors.append(f"network: must be fully_connected or hub_and_spoke, got {self.network_kind!r}")
        self.secondment_kind = raw["secondment"]
        if self.secondment_kind not in (*SECONDMENT_SCENARIOS, "custom"):
            errors.append(f"secondment: unknown scenario {self.secondment_kind!r}")
        counts = raw["counts"]
        self.testing_paths = int(counts["testing_paths"])
        self.training_paths = int(counts["training_paths"])
        self.training_sets = int(counts["training_sets"])
        self.weeks = int(counts["weeks"])
        self.week_days = int(counts["week_days"])
        for key in ("testing_paths", "training_paths", "training_sets", "weeks", "week_days"):
            if int(counts[key]) < 1:
                errors.append(f"counts.{key}: must be >= 1")
        if self.training_sets >= 1 and self.training_paths % self.training_sets:
            errors.append(
                f"counts.training_paths: {self.training_paths} not divisible into "
                f"{self.training_sets} training sets"
            )
        eps = raw["epsilon"]
        self.eps_mode = eps["mode"]
        self.eps_upsilon = float(eps["upsilon"])
        if self.eps_mode not in ("adaptive", "fixed"):
            errors.append(f"epsilon.mode: must be adaptive or fixed, got {self.eps_mode!r}")
        if eps.get("schedule") is not None:
            schedule = eps["schedule"]
            if np.isscalar(schedule):
                schedule = [schedule] * self.weeks
            if len(schedule) != self.weeks:
                errors.append("epsilon.schedule: length must equal counts.weeks")
            if any(v < 0 for v in schedule):
                errors.append("epsilon.schedule: entries must be nonnegative")
            self.eps_schedule = tuple(float(v) for v in schedule)
        elif self.eps_mode == "fixed":
            errors.append("epsilon.schedule: required when epsilon.mode is fixed")
        else:
            self.eps_schedule = None
        if self.eps_upsilon < 0:
            errors.append("epsilon.upsilon: must be nonnegative")

        costs = raw["costs"]
        if not 0 <= costs["cancellation_pct"] <= 1:
            errors.append("costs.cancellation_pct: fraction out of range [0, 1]")
        if costs["premium"] <= 0:
            errors.append("costs.premium: must be positive")
        if costs["emergency_multiplier"] < 1:
            errors.append("costs.emergency_multiplier: must be >= 1")
        if costs["shortage"] < 0:
            errors.append("costs.shortage: must be nonnegative")
        self.coordination = float(costs["coordination"])

        loc = raw["locations"]
        names = loc["names"]
        L = len(names)
        dist = np.asarray(loc["distances"], dtype=float)
        if dist.shape != (L, L):
            errors.append(f"locations.distances: expected {L}x{L} matrix")
        hub = loc["hub"]
        if not 0 <= int(hub) < L:
            errors.append(f"locations.hub: index {hub} outside 0..{L - 1}")
        if self.secondment_kind == "custom" and loc.get("secondment_matrix") is None:
            errors.append("locations.secondment_matrix: required for secondment: custom")

        arr = raw["arrival"]
        if len(arr["location_scale"]) != L:
            errors.append("arrival.location_scale: one entry per location required")
        if len(arr["week_pattern"]) != 7:
            errors.append("arrival.week_pattern: exactly 7 day factors required")
        if arr["peak_factor"] < 1:
            errors.append("arrival.peak_factor: must be >= 1")
        if not arr["t_start"] <= arr["t_peak"] <= arr["t_end"]:
            errors.append("arrival: need t_start <= t_peak <= t_end")

        cap = raw["capacity"]
        if len(cap["initial"]) != L or len(cap["adjust_scale"]) != L:
            errors.append("capacity: initial and adjust_scale need one entry per location")
        if any(v < 0 for v in cap["initial"]):
            errors.append("capacity.initial: must be nonnegative")

        est = raw["estimation"]
        if int(est["window_weeks"]) < 1:
            errors.append("estimation.window_weeks: must be >= 1")
        self.window_weeks = int(est["window_weeks"])

        try:
            self.rounding = RoundingPolicy(raw["rounding"]["mode"])
        except ValueError as exc:
            errors.append(f"rounding.mode: {exc}")

        self.seed = int(raw["seed"])
        self.output_dir = Path(raw["output_dir"])
        self.jobs = int(raw["jobs"])
        if self.jobs < 1:
            errors.append("jobs: must be >= 1")
        self.freeze_paths = Path(raw["freeze_paths"]) if raw.get("freeze_paths") else None
        self.clip_support = bool(raw["clip_support"])

        # constructing the model objects catches anything the checks missed
        if not errors:
            try:
                net = self.network()
                self.cost_params()
                self.arrival_params()
                self.transition_model()
                if net.omega_max > self.week_days:
                    errors.append("locations/secondment: longest secondment exceeds the week")
            except (ValueError, ConfigError) as exc:
                errors.append(str(exc))
        if errors:
            raise ConfigError(errors)

    # -- resolved model objects ---------------------------------------------

    @property
    def num_locations(self) -> int:
        return len(self.raw["locations"]["names"])

    def _secondment_matrix(self) -> np.ndarray:
        loc = self.raw["locations"]
        L = self.num_locations
        if self.secondment_kind == "custom":
            return np.asarray(loc["secondment_matrix"], dtype=int)
        far = SECONDMENT_SCENARIOS[self.secondment_kind]
        hub = int(loc["hub"])
        omega = np.full((L, L), far, dtype=int)
        omega[hub, :] = 1
        omega[:, hub] = 1
        np.fill_diagonal(omega, 1)
        return omega

    def _arc_mask(self, kind: str | None = None) -> np.ndarray:
        kind = kind or self.network_kind
        loc = self.raw["locations"]
        L = self.num_locations
        hub = int(loc["hub"])
        if kind == "hub_and_spoke":
            mask = np.zeros((L, L), dtype=bool)
            mask[hub, :] = True
            mask[:, hub] = True
        else:
            mask = np.ones((L, L), dtype=bool)
        np.fill_diagonal(mask, False)
        restriction = loc.get("arc_restriction")
        if restriction and kind in restriction:
            allowed = np.zeros((L, L), dtype=bool)
            for i, j in restriction[kind]:
                allowed[int(i), int(j)] = True
            mask &= allowed
        return mask

    def network(self, kind: str | None = None) -> NetworkConfig:
        loc = self.raw["locations"]
        dist = np.asarray(loc["distances"], dtype=float)
        off = dist[~np.eye(len(dist), dtype=bool)]
        d_min = off.min() if off.size else 0.0
        bonus = loc["bonus_min"] + loc["bonus_per_mile"] * (dist - d_min)
        np.fill_diagonal(bonus, 0.0)
        return NetworkConfig(
            distances=dist,
            transfer_bonus=bonus,
            secondment=self._secondment_matrix(),
            arc_allowed=self._arc_mask(kind),
            capacity=np.asarray(self.raw["capacity"]["initial"], dtype=int),
            names=tuple(loc["names"]),
        )

    def horizon(self) -> HorizonConfig:
        return HorizonConfig(days=self.week_days, weeks=self.weeks, omega_max=self.network().omega_max)

    def cost_params(self) -> CostParams:
        c = self.raw["costs"]
        return CostParams.constant(
            premium=float(c["premium"]),
            emergency_multiplier=float(c["emergency_multiplier"]),
            cancellation_pct=float(c["cancellation_pct"]),
            shortage=float(c["shortage"]),
            horizon=self.week_days,
            num_locations=self.num_locations,
            coordination_cost=float(c["coordination"]),
        )

    def arrival_params(self) -> ArrivalModelParams:
        a = self.raw["arrival"]
        L = self.num_locations
        kappa = float(a["kappa0"]) * np.tile(np.asarray(a["week_pattern"], dtype=float), (L, 1))
        return ArrivalModelParams(
            phi=np.asarray(a["phi"], dtype=float),
            kappa=kappa,
            location_scale=np.asarray(a["location_scale"], dtype=float),
            t_start=int(a["t_start"]),
            t_peak=int(a["t_peak"]),
            t_end=int(a["t_end"]),
            peak_factor=float(a["peak_factor"]),
            noise_scale=float(a["noise_scale"]),
            spatial_decay=float(a["spatial_decay"]),
            spatial_lag=int(a["spatial_lag"]),
            spatial_window=int(a["spatial_window"]),
            spatial_seed_frac=float(a["spatial_seed_frac"]),
        )

    def transition_model(self) -> TransitionModel:
        t = self.raw["transitions"]
        return TransitionModel.stationary(
            np.asarray(t["move_probs"], dtype=float),
            np.asarray(t["arrival_split"], dtype=float),
            self.num_locations,
        )

    @property
    def warmup_days(self) -> int:
        return self.window_weeks * 7

    def capacity_settings(self) -> dict:
        cap = self.raw["capacity"]
        return {
            "initial": np.asarray(cap["initial"], dtype=int),
            "scale": np.asarray(cap["adjust_scale"], dtype=float),
            "step_up": float(cap["step_up"]),
            "step_down": float(cap["step_down"]),
        }


def config_from_dict(data: dict | None) -> ExperimentConfig:
    """Merge an override dict over its preset (default: baseline) and validate."""
    data = dict(data or {})
    errors: list[str] = []
    preset = data.pop("preset", "baseline")
    if preset not in PRESETS:
        raise ConfigError([f"preset: unknown preset {preset!r} (have {sorted(PRESETS)})"])
    base = preset_profile(preset)
    merged = _merge(base, data, "", errors)
    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(merged)


def load_config(path: str | Path | None) -> ExperimentConfig:
    """Load a YAML experiment file; an empty/missing body means pure defaults."""
    if path is None:
        return config_from_dict({})
    text = Path(path).read_text()
    data = yaml.safe_load(text) or {}
    if not isinstance(data, dict):
        raise ConfigError(["top level: expected a mapping of sections"])
    return config_from_dict(data)
