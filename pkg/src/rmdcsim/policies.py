"""Subgraph-level placement, the best-effort heuristic, and the evaluation policies."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .accounting import Inventory, RmdcConfig
from .optimizer.model import MipModel, Schedule, evaluate
from .sites import Site
from .stats import Location, distance_miles, geometric_center
from .subgraph import Subgraph
from .uptime import UptimeBook

KM_PER_MILE = 1.609344
EXTRA_BATTERY_HOURS = 1.0


class PolicyKind(str, enum.Enum):
    SKYBOX_MIP = "skybox_mip"
    SKYBOX_BEST_EFFORT = "skybox_best_effort"
    DISTR_GRID = "distr_grid"
    DISTR_BATTERY = "distr_battery"
    CENTR_GLOBAL = "centr_global"
    CENTR_GRAPH = "centr_graph"

    @property
    def migrates(self) -> bool:
        return self in (PolicyKind.SKYBOX_MIP, PolicyKind.SKYBOX_BEST_EFFORT)


# --------------------------------------------------------------------------
# placement across subgraphs


def place_on_subgraph(vm_power_watts: float, headrooms: Mapping) -> tuple:
    """Best fit across subgraphs: the one with the most power headroom.

    Returns ``(subgraph_id, overcommitted)``; ties go to the lowest id. When no
    subgraph can absorb the VM it still lands on the max-headroom one and the
    grid covers the gap.
    """
    if not headrooms:
        raise ValueError("no subgraphs registered")
    best = min(headrooms, key=lambda sid: (-headrooms[sid], sid))
    return best, headrooms[best] < vm_power_watts


# --------------------------------------------------------------------------
# best-effort step within one subgraph


@dataclass(frozen=True)
class StepVm:
    vm_id: str
    power_watts: float
    mem_gb: float
    evictable: bool
    rmdc: int  # where the VM sits entering the step
    migration_watts: float = 0.0


@dataclass
class StepDecision:
    placement: dict[str, int | None]
    migrations: list[tuple[str, int, int]]
    load_watts: list[float]
    grid_watts: list[float]
    suspended: list[str] = field(default_factory=list)


def best_effort_step(supply: Sequence[float], vms: Sequence[StepVm], book: UptimeBook | None = None) -> StepDecision:
    """One greedy step for one subgraph.

    Per deficit rMDC (largest deficit first): move VMs, smallest memory
    first, to the rMDC with the most surplus while the move fits there and
    shrinks the deficit; then suspend evictable VMs, largest power first, while
    mean availability stays at or above the book's floor; the grid covers the
    rest. ``book`` is not modified.
    """
    book = book.copy() if book is not None else UptimeBook(floor=1.0)
    K = len(supply)
    load = [0.0] * K
    where: dict[str, int | None] = {}
    for vm in vms:
        load[vm.rmdc] += vm.power_watts
        where[vm.vm_id] = vm.rmdc
    migrations: list[tuple[str, int, int]] = []
    suspended: list[str] = []
    moved: set[str] = set()

    deficits = sorted((k for k in range(K) if load[k] > supply[k]), key=lambda k: (supply[k] - load[k], k))
    for d in deficits:
        for vm in sorted((v for v in vms if where[v.vm_id] == d), key=lambda v: (v.mem_gb, v.vm_id)):
            if load[d] <= supply[d]:
                break
            if vm.vm_id in moved or vm.power_watts <= vm.migration_watts:
                continue
            others = [k for k in range(K) if k != d]
            if not others:
                break
            target = min(others, key=lambda k: (-(supply[k] - load[k]), k))
            if supply[target] - load[target] < vm.power_watts + vm.migration_watts:
                continue
            load[d] += vm.migration_watts - vm.power_watts
            load[target] += vm.power_watts + vm.migration_watts
            where[vm.vm_id] = target
            moved.add(vm.vm_id)
            migrations.append((vm.vm_id, d, target))
        if load[d] > supply[d]:
            for vm in sorted((v for v in vms if where[v.vm_id] == d and v.evictable),
                             key=lambda v: (-v.power_watts, v.vm_id)):
                if load[d] <= supply[d]:
                    break
                if vm.vm_id not in book.entries or not book.can_suspend(vm.vm_id):
                    continue
                book.suspend(vm.vm_id)
                load[d] -= vm.power_watts
                where[vm.vm_id] = None
                suspended.append(vm.vm_id)
    grid = [max(0.0, load[k] - supply[k]) for k in range(K)]
    return StepDecision(where, migrations, load, grid, suspended)


# --------------------------------------------------------------------------
# whole-horizon plans over a model (used as warm start and as baselines)


def home_rmdcs(model: MipModel) -> list[int]:
    """Initial rMDC of each VM; VMs without one go where forecast headroom is largest at release."""
    T = model.horizon_steps
    loads = [[[0.0] * T for _ in range(kn)] for kn in model.rmdcs_per_subgraph]
    homes = []
    for vm in model.vms:
        n = vm.subgraph
        if vm.initial_rmdc is not None:
            h = vm.initial_rmdc
        else:
            t = min(vm.release_step, T - 1)
            h = min(range(model.rmdcs_per_subgraph[n]),
                    key=lambda k: (-(model.supply_watts[n][k][t] - loads[n][k][t]), k))
        end = min(T, vm.release_step + vm.remaining_steps)
        for t in range(vm.release_step, end):
            loads[n][h][t] += vm.power_watts[t]
        homes.append(h)
    return homes


def distr_grid_plan(model: MipModel) -> Schedule:
    """Every VM stays on its home rMDC and is never suspended."""
    homes = home_rmdcs(model)
    plan = []
    up = [vm.prior_uptime_steps for vm in model.vms]
    for t in range(model.horizon_steps):
        row = []
        for m, vm in enumerate(model.vms):
            on = t >= vm.release_step and up[m] < vm.lifetime_steps
            row.append(homes[m] if on else None)
            up[m] += on
        plan.append(row)
    return evaluate(model, plan, solver="distr_grid")


class _Stepper:
    """Carbon of one step given where VMs were before and where they go."""

    def __init__(self, model: MipModel):
        self.model = model
        self.mig_w = [model.migration_watts(vm) for vm in model.vms]

    def cost(self, t: int, prev: Sequence[int | None], row: Sequence[int | None]) -> float:
        model = self.model
        cons = [[0.0] * kn for kn in model.rmdcs_per_subgraph]
        for m, vm in enumerate(model.vms):
            k = row[m]
            if k is None:
                continue
            cons[vm.subgraph][k] += vm.power_watts[t]
            p = prev[m]
            if p is not None and p != k:
                cons[vm.subgraph][p] += self.mig_w[m]
                cons[vm.subgraph][k] += self.mig_w[m]
        return sum(model.cell_carbon(n, k, t, cons[n][k]) for n, k in model.cells())


def best_effort_plan(model: MipModel) -> Schedule:
    """Roll ``best_effort_step`` over the horizon on forecast supply.

    A greedy step is kept only while cumulative carbon plus a bound on the
    cost of returning to the home layout stays below the carbon of the
    stay-home baseline (``distr_grid_plan``); otherwise the step keeps VMs in
    place, or sends them home. The plan therefore never does worse than not
    migrating at all.
    """
    T = model.horizon_steps
    V = len(model.vms)
    homes = home_rmdcs(model)
    stepper = _Stepper(model)
    kwh = model.step_hours / 1000.0
    max_power = [max(vm.power_watts) if vm.power_watts else 0.0 for vm in model.vms]

    book = UptimeBook(floor=model.avail_target, history_sum=model.avail_history_sum,
                      history_count=model.avail_history_count)
    for vm in model.vms:
        if vm.evictable:
            book.add(vm.vm_id, vm.lifetime_steps, vm.prior_downtime_steps)

    prev: list[int | None] = [vm.initial_rmdc for vm in model.vms]
    last = [vm.initial_rmdc if vm.initial_rmdc is not None else homes[m] for m, vm in enumerate(model.vms)]
    up = [vm.prior_uptime_steps for vm in model.vms]
    dg_prev: list[int | None] = list(prev)
    dg_up = list(up)
    be_cum = dg_cum = 0.0
    plan = []

    def potential(row, up_after):
        away = sum(2 * stepper.mig_w[m] for m in range(V) if row[m] is not None and row[m] != homes[m])
        lag = sum(max(0, dg_up[m] - up_after[m]) * max_power[m] for m, vm in enumerate(model.vms) if vm.evictable)
        return (away + lag) * kwh * model.ci_grid

    for t in range(T):
        active = [t >= vm.release_step and up[m] < vm.lifetime_steps for m, vm in enumerate(model.vms)]
        dg_row = [homes[m] if (t >= vm.release_step and dg_up[m] < vm.lifetime_steps) else None
                  for m, vm in enumerate(model.vms)]
        dg_cum += stepper.cost(t, dg_prev, dg_row)
        dg_up = [u + (k is not None) for u, k in zip(dg_up, dg_row)]
        dg_prev = dg_row

        stay = [last[m] if active[m] else None for m in range(V)]
        home = [homes[m] if active[m] else None for m in range(V)]
        greedy = list(stay)
        suspended: list[str] = []
        for n, kn in enumerate(model.rmdcs_per_subgraph):
            members = [m for m, vm in enumerate(model.vms) if vm.subgraph == n and active[m]]
            if not members:
                continue
            step_vms = [
                StepVm(model.vms[m].vm_id, model.vms[m].power_watts[t], model.vms[m].mem_gb,
                       model.vms[m].evictable, last[m], stepper.mig_w[m])
                for m in members
            ]
            supply = [model.supply_watts[n][k][t] for k in range(kn)]
            dec = best_effort_step(supply, step_vms, book)
            for m in members:
                greedy[m] = dec.placement[model.vms[m].vm_id]
            suspended += dec.suspended

        margin = 1e-9 * max(1.0, abs(dg_cum))
        chosen = home
        for row in (greedy, stay):
            up_after = [u + (k is not None) for u, k in zip(up, row)]
            if be_cum + stepper.cost(t, prev, row) + potential(row, up_after) <= dg_cum - margin:
                chosen = row
                break
        if chosen is greedy:
            for vid in suspended:
                book.suspend(vid)
        be_cum += stepper.cost(t, prev, chosen)
        for m in range(V):
            if chosen[m] is not None:
                last[m] = chosen[m]
        up = [u + (k is not None) for u, k in zip(up, chosen)]
        prev = list(chosen)
        plan.append(list(chosen))
    return evaluate(model, plan, solver="best_effort")


# --------------------------------------------------------------------------
# topologies for the evaluation policies


@dataclass(frozen=True)
class Node:
    """One powered data center and the farms that feed it."""

    name: str
    feeders: tuple[str, ...]
    location: Location
    servers: int
    line_km: float  # transmission lines from feeders plus grid hookup
    extra_battery_kwh: float = 0.0
    feeder_km: tuple[float, ...] = ()  # transmission line per feeder, centralized nodes only


@dataclass
class Topology:
    kind: PolicyKind
    nodes: list[Node]
    groups: list[list[int]]  # node indices that may exchange VMs

    def inventory(self, config: RmdcConfig) -> Inventory:
        total = Inventory()
        for node in self.nodes:
            scale = node.servers / config.servers
            total = total + Inventory(
                servers=node.servers,
                battery_kwh=config.backup_battery_kwh * scale + node.extra_battery_kwh,
                cooling_m2=config.footprint_cooling_m2 * scale,
                transmission_km=node.line_km,
                construction_watts=node.servers * config.per_server_watts,
            )
        return total

    @property
    def transmission_lines(self) -> list[tuple[str, str, float]]:
        """(farm, node, km) for every farm-to-module line."""
        return [(f, n.name, km) for n in self.nodes for f, km in zip(n.feeders, n.feeder_km)]


def _central_node(name: str, members: Sequence[Site], config: RmdcConfig) -> Node:
    center = geometric_center([s.location for s in members])
    lines = tuple(distance_miles(s.location, center) * KM_PER_MILE for s in members)
    agg = np.sum([s.trace.samples for s in members], axis=0)
    servers = max(1, math.ceil(float(agg.max()) / config.per_server_watts - 1e-9))
    return Node(name, tuple(s.site_id for s in members), center, servers, sum(lines) + config.grid_line_km,
                feeder_km=lines)


def group_nodes(nodes: Sequence[Node], subgraphs: Sequence[Subgraph]) -> list[list[int]]:
    """Node indices per migration group: one group per subgraph, then singletons for the rest."""
    index = {node.name: i for i, node in enumerate(nodes)}
    groups = []
    used = set()
    for sg in subgraphs:
        members = [index[sid] for sid in sg.member_ids if sid in index]
        if members:
            groups.append(sorted(members))
            used.update(members)
    groups += [[i] for i in range(len(nodes)) if i not in used]
    return groups


def apply_policy(
    kind: PolicyKind | str,
    sites: Sequence[Site],
    subgraphs: Sequence[Subgraph],
    config: RmdcConfig = RmdcConfig(),
    battery_hours: float = EXTRA_BATTERY_HOURS,
) -> Topology:
    """Power topology for a policy over the selected sites.

    Co-located policies get one module per site, in site-id order; only the
    skybox policies group them for migration, and sites outside every subgraph
    form single-site groups. Centralized policies get one module per aggregate,
    sized to the aggregate's peak and wired to each farm.
    """
    kind = PolicyKind(kind)
    by_id = {s.site_id: s for s in sites}
    ordered = sorted(by_id)
    if kind is PolicyKind.CENTR_GLOBAL:
        nodes = [_central_node("central", [by_id[i] for i in ordered], config)]
    elif kind is PolicyKind.CENTR_GRAPH:
        nodes = [
            _central_node(f"central{g}", [by_id[i] for i in sg.member_ids], config)
            for g, sg in enumerate(subgraphs)
        ]
        grouped = {i for sg in subgraphs for i in sg.member_ids}
        nodes += [_colocated(by_id[sid], config, 0.0) for sid in ordered if sid not in grouped]
    else:
        extra = config.rack_power_kw * battery_hours if kind is PolicyKind.DISTR_BATTERY else 0.0
        nodes = [_colocated(by_id[sid], config, extra) for sid in ordered]
        if kind.migrates:
            return Topology(kind, nodes, group_nodes(nodes, subgraphs))
    return Topology(kind, nodes, [[i] for i in range(len(nodes))])


def _colocated(site: Site, config: RmdcConfig, extra_battery_kwh: float) -> Node:
    return Node(site.site_id, (site.site_id,), site.location, config.servers, config.grid_line_km,
                extra_battery_kwh)
