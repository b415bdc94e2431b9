"""Run configuration: one JSON file, schema-checked, with paths relative to the file."""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

import jsonschema

from .accounting import CarbonParams, CostParams, RmdcConfig
from .engine import SimConfig
from .policies import PolicyKind
from .sites import Site
from .stats import Location
from .traces import DEFAULT_STEP_SECONDS, VmSpec, inject_error, load_power_trace, load_vm_trace, synth_vm_trace

DEFAULTS = {
    "step_seconds": DEFAULT_STEP_SECONDS,
    "top_sites": None,
    "k": 3,
    "max_miles": 500.0,
    "policy": "skybox_mip",
    "horizon_steps": 3,
    "resolve_steps": 1,
    "reidentify_days": 14,
    "avail_target": 0.9,
    "evictable_floor": 0.9,
    "power_migr_wh_per_gb": 0.1,
    "forecast_error": 0.0,
    "objective": "carbon",
    "mip_max_nodes": 20_000,
    "battery": {"hours": 1.0, "rate_kw": None, "efficiency": 1.0},
    "admission_utilization": None,
    "max_steps": None,
    "seed": 0,
    "carbon": {},
    "cost": {},
    "rmdc": {},
}


class ConfigError(ValueError):
    """The configuration is malformed or points at missing files."""


class DataError(ValueError):
    """An input file exists but its contents are unusable."""


def schema() -> dict:
    return json.loads(resources.files("rmdcsim").joinpath("data/run_config.schema.json").read_text())


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in over.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def apply_overrides(data: dict, overrides: Sequence[str]) -> dict:
    """``key=value`` or ``section.key=value``; values parse as JSON, else stay strings."""
    data = copy.deepcopy(data)
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"override {item!r} is not key=value")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        if isinstance(value, (dict, list)):
            raise ConfigError(f"override {key!r}: only scalar values can be set from the command line")
        node = data
        *parents, leaf = key.split(".")
        for p in parents:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r}: {p!r} is not a section")
        node[leaf] = value
    return data


@dataclass(frozen=True)
class RunConfig:
    data: dict  # validated, defaults filled in
    base_dir: Path

    def path(self, rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.base_dir / p

    @property
    def policies(self) -> list[str]:
        return list(self.data.get("policies") or [self.data["policy"]])

    def sim_config(self, policy: str | None = None) -> SimConfig:
        d = self.data
        step_s = d["step_seconds"]
        bat = d["battery"]
        return SimConfig(
            policy=PolicyKind(policy or d["policy"]),
            horizon_steps=d["horizon_steps"],
            resolve_steps=d["resolve_steps"],
            reidentify_steps=max(1, round(d["reidentify_days"] * 86400 / step_s)),
            k=d["k"],
            max_miles=d["max_miles"],
            avail_target=d["avail_target"],
            evictable_floor=d["evictable_floor"],
            power_migr_wh_per_gb=d["power_migr_wh_per_gb"],
            forecast_error=d["forecast_error"],
            objective=d["objective"],
            mip_max_nodes=d["mip_max_nodes"],
            battery_hours=bat["hours"],
            battery_rate_kw=bat["rate_kw"],
            battery_efficiency=bat["efficiency"],
            admission_utilization=d["admission_utilization"],
            max_steps=d["max_steps"],
            seed=d["seed"],
            carbon=CarbonParams.from_dict(d["carbon"]),
            cost=CostParams.from_dict(d["cost"]),
            rmdc=RmdcConfig.from_dict(d["rmdc"]),
        )


def validate(data: dict, base_dir: Path) -> RunConfig:
    try:
        jsonschema.validate(data, schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config {where}: {exc.message}") from None
    full = _merge(DEFAULTS, data)
    rc = RunConfig(full, Path(base_dir))
    ids = [s["id"] for s in full["sites"]]
    if len(set(ids)) != len(ids):
        raise ConfigError("duplicate site ids")
    pols = full.get("policies")
    if pols and len(set(pols)) != len(pols):
        raise ConfigError(f"duplicate policies in {pols}")
    for s in full["sites"]:
        for key in ("trace", "forecast"):
            if key in s and not rc.path(s[key]).is_file():
                raise ConfigError(f"site {s['id']}: {key} file {s[key]} not found")
    if "vm_trace" in full and not rc.path(full["vm_trace"]).is_file():
        raise ConfigError(f"vm_trace file {full['vm_trace']} not found")
    try:
        rc.sim_config()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return rc


def load_config(path, overrides: Sequence[str] = ()) -> RunConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return validate(apply_overrides(data, overrides), path.parent)


def load_sites(rc: RunConfig) -> list[Site]:
    step_s = rc.data["step_seconds"]
    sites = []
    for s in rc.data["sites"]:
        try:
            trace = load_power_trace(rc.path(s["trace"]), s["capacity_watts"], site_id=s["id"])
            forecast = None
            if "forecast" in s:
                pred = load_power_trace(rc.path(s["forecast"]), s["capacity_watts"], site_id=s["id"])
                if len(pred) != len(trace):
                    raise DataError(f"site {s['id']}: forecast length {len(pred)} != trace length {len(trace)}")
                forecast = inject_error(pred, 0.0, 0)
        except ValueError as exc:
            raise DataError(str(exc)) from None
        if trace.step_seconds != step_s:
            raise DataError(f"site {s['id']}: trace step {trace.step_seconds}s != configured {step_s}s")
        sites.append(Site(s["id"], Location(s["lat"], s["lon"]), s["kind"], trace, forecast))
    return sites


def load_vms(rc: RunConfig, horizon_steps: int) -> list[VmSpec]:
    d = rc.data
    if "vm_trace" in d:
        try:
            return load_vm_trace(rc.path(d["vm_trace"]), d["step_seconds"])
        except ValueError as exc:
            raise DataError(str(exc)) from None
    syn = d.get("synthetic_vms")
    if syn is None:
        return []
    return synth_vm_trace(
        syn["n_vms"],
        syn.get("seed", d["seed"]),
        syn.get("arrival_steps", horizon_steps),
        evictable_fraction=syn.get("evictable_fraction", 0.1),
        mean_lifetime_steps=syn.get("mean_lifetime_steps", 12.0),
        per_core_watts=RmdcConfig.from_dict(d["rmdc"]).per_core_watts,
        lifetime_error=syn.get("lifetime_error", 0.0),
    )
