"""Assemble a placement model from a snapshot of one subgraph."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .model import OBJECTIVE_CARBON, REGULAR, MipModel, ModelError, ModelVm


@dataclass(frozen=True)
class RmdcSnapshot:
    name: str
    ci_renewable: float  # gCO2eq/kWh
    forecast_watts: tuple[float, ...]  # covers at least the horizon


@dataclass(frozen=True)
class VmSnapshot:
    vm_id: str
    power_watts: float
    mem_gb: float
    lifetime_steps: int
    category: str = REGULAR
    uptime_steps: int = 0
    downtime_steps: int = 0
    rmdc: int | None = None


@dataclass(frozen=True)
class ModelParams:
    ci_grid: float = 700.0
    power_migr_wh_per_gb: float = 0.1
    avail_target: float = 0.9
    objective: str = OBJECTIVE_CARBON
    step_seconds: float = 3600.0
    history_sum: float = 0.0
    history_count: int = 0


def build_model(
    rmdcs: Sequence[RmdcSnapshot],
    vms: Sequence[VmSnapshot],
    horizon_steps: int,
    params: ModelParams = ModelParams(),
) -> MipModel:
    """One-subgraph model over the next ``horizon_steps`` steps of forecast supply.

    A VM that already ran for its whole (predicted) lifetime is kept for one
    more step, so a late finisher stays in the plan.
    """
    if horizon_steps < 1:
        raise ModelError("horizon must be >= 1 step")
    if not rmdcs:
        raise ModelError("empty cluster: no rMDCs")
    for r in rmdcs:
        if len(r.forecast_watts) < horizon_steps:
            raise ModelError(f"forecast for {r.name} covers {len(r.forecast_watts)} < {horizon_steps} steps")
    model_vms = [
        ModelVm(
            vm_id=v.vm_id,
            subgraph=0,
            power_watts=(float(v.power_watts),) * horizon_steps,
            mem_gb=v.mem_gb,
            lifetime_steps=max(v.lifetime_steps, v.uptime_steps + 1),
            category=v.category,
            prior_uptime_steps=v.uptime_steps,
            prior_downtime_steps=v.downtime_steps,
            initial_rmdc=v.rmdc,
        )
        for v in vms
    ]
    return MipModel(
        vms=model_vms,
        rmdcs_per_subgraph=[len(rmdcs)],
        supply_watts=[[[float(x) for x in r.forecast_watts[:horizon_steps]] for r in rmdcs]],
        ci_renewable=[[r.ci_renewable for r in rmdcs]],
        ci_grid=params.ci_grid,
        horizon_steps=horizon_steps,
        step_seconds=params.step_seconds,
        power_migr_wh_per_gb=params.power_migr_wh_per_gb,
        avail_target=params.avail_target,
        avail_history_sum=params.history_sum,
        avail_history_count=params.history_count,
        objective=params.objective,
        rmdc_names=[[r.name for r in rmdcs]],
    )
