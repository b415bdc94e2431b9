"""JSON exchange format for models and solutions, and the external-solver hook."""
from __future__ import annotations

import json
import subprocess
import tempfile
from dataclasses import asdict
from pathlib import Path
from typing import Sequence

from .feasibility import check_feasible
from .model import MipModel, ModelError, ModelVm, Schedule, evaluate, plan_of

FORMAT_VERSION = 1


def model_to_dict(model: MipModel) -> dict:
    vms = []
    for vm in model.vms:
        d = asdict(vm)
        d["power_watts"] = list(vm.power_watts)
        vms.append(d)
    return {
        "format": "rmdc-placement-model",
        "version": FORMAT_VERSION,
        "index_sets": {
            "vms": [vm.vm_id for vm in model.vms],
            "regular": [vm.vm_id for vm in model.vms if not vm.evictable],
            "evictable": model.evictable_ids,
            "rmdcs_per_subgraph": list(model.rmdcs_per_subgraph),
            "horizon_steps": model.horizon_steps,
        },
        "constants": {
            "step_seconds": model.step_seconds,
            "supply_watts": model.supply_watts,
            "ci_renewable": model.ci_renewable,
            "ci_grid": model.ci_grid,
            "power_migr_wh_per_gb": model.power_migr_wh_per_gb,
            "avail_target": model.avail_target,
            "avail_history_sum": model.avail_history_sum,
            "avail_history_count": model.avail_history_count,
            "objective": model.objective,
            "rmdc_names": model.rmdc_names,
        },
        "vms": vms,
    }


def model_from_dict(data: dict) -> MipModel:
    if data.get("format") != "rmdc-placement-model":
        raise ModelError("not a placement model document")
    if data.get("version") != FORMAT_VERSION:
        raise ModelError(f"unsupported model version {data.get('version')!r}")
    c = data["constants"]
    sets = data["index_sets"]
    vms = []
    for d in data["vms"]:
        d = dict(d)
        d["power_watts"] = tuple(float(x) for x in d["power_watts"])
        vms.append(ModelVm(**d))
    return MipModel(
        vms=vms,
        rmdcs_per_subgraph=list(sets["rmdcs_per_subgraph"]),
        supply_watts=c["supply_watts"],
        ci_renewable=c["ci_renewable"],
        ci_grid=c["ci_grid"],
        horizon_steps=sets["horizon_steps"],
        step_seconds=c["step_seconds"],
        power_migr_wh_per_gb=c["power_migr_wh_per_gb"],
        avail_target=c["avail_target"],
        avail_history_sum=c["avail_history_sum"],
        avail_history_count=c["avail_history_count"],
        objective=c["objective"],
        rmdc_names=c.get("rmdc_names"),
    )


def schedule_to_dict(model: MipModel, schedule: Schedule) -> dict:
    """Solution document: the plan plus every derived variable."""
    return {
        "format": "rmdc-placement-solution",
        "version": FORMAT_VERSION,
        "solver": schedule.solver,
        "optimal": schedule.optimal,
        "placements": plan_of(model, schedule),
        "migrations": [asdict(mg) for mg in schedule.migrations],
        "consumption_watts": schedule.consumption_watts,
        "grid_draw_watts": schedule.grid_draw_watts,
        "renewable_used_watts": schedule.renewable_used_watts,
        "uptime_steps": schedule.uptime_steps,
        "completion_step": schedule.completion_step,
        "downtime_steps": schedule.downtime_steps,
        "avail": schedule.avail,
        "objective_carbon_g": schedule.objective_carbon_g,
        "evictable_uptime": schedule.evictable_uptime,
        "migration_count": schedule.migration_count,
    }


def schedule_from_dict(model: MipModel, data: dict) -> Schedule:
    """Rebuild a schedule from ``placements[t][m]`` (rMDC index or null) and audit it."""
    if data.get("format") != "rmdc-placement-solution":
        raise ModelError("not a placement solution document")
    plan = data["placements"]
    if len(plan) != model.horizon_steps or any(len(row) != len(model.vms) for row in plan):
        raise ModelError("solution placements do not match the model's shape")
    sched = evaluate(model, plan, solver=str(data.get("solver", "external")), optimal=bool(data.get("optimal")))
    bad = check_feasible(model, sched)
    if bad is not None:
        raise ModelError(f"infeasible solution: {bad}")
    return sched


def dump_json(data: dict, path) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


class ExternalSolver:
    """Solve by shelling out: ``command + [model.json, solution.json]``.

    The program reads the model document and writes a solution document with
    at least ``placements``; the result is re-evaluated and audited here.
    """

    def __init__(self, command: Sequence[str], timeout_s: float | None = None):
        if not command:
            raise ValueError("empty solver command")
        self.command = list(command)
        self.timeout_s = timeout_s

    def __call__(self, model: MipModel) -> Schedule:
        with tempfile.TemporaryDirectory() as tmp:
            mpath = Path(tmp) / "model.json"
            spath = Path(tmp) / "solution.json"
            dump_json(model_to_dict(model), mpath)
            subprocess.run(self.command + [str(mpath), str(spath)], check=True, timeout=self.timeout_s)
            return schedule_from_dict(model, json.loads(spath.read_text()))
