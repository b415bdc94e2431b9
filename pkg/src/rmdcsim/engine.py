"""Discrete-time replay of renewable supply and VM events under one placement policy."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

from .accounting import (
    CARBON_LINES,
    EMB_BATTERY,
    EMB_COOLING,
    EMB_SERVER,
    OP_GRID,
    OP_RENEWABLE,
    CarbonParams,
    CostParams,
    Inventory,
    RmdcConfig,
    amortized_cost,
    embodied_breakdown,
    HOURS_PER_YEAR,
)
from .misprediction import (
    LifetimeCorrector,
    LiveVm,
    SubgraphState,
    classify,
    handle_subgraph,
    update_lifetime_offset,
)
from .optimizer import MipModel, ModelParams, RmdcSnapshot, SolveLimits, VmSnapshot, build_model, solve
from .policies import PolicyKind, StepVm, Topology, apply_policy, best_effort_step, group_nodes, place_on_subgraph
from .sites import Site
from .subgraph import identify
from .traces import VmSpec, inject_error
from .uptime import UptimeBook

ENERGY_TOL_WH = 1e-6


# --------------------------------------------------------------------------
# battery


@dataclass(frozen=True)
class BatteryState:
    capacity_kwh: float
    charge_kwh: float = 0.0
    max_rate_kw: float = math.inf
    efficiency: float = 1.0  # applied on charge

    def __post_init__(self):
        if self.capacity_kwh < 0 or self.max_rate_kw < 0:
            raise ValueError("battery capacity and rate must be >= 0")
        if not 0.0 <= self.charge_kwh <= self.capacity_kwh:
            raise ValueError("battery charge outside [0, capacity]")
        if not 0.0 < self.efficiency <= 1.0:
            raise ValueError("battery efficiency must lie in (0, 1]")


def step_battery(state: BatteryState, surplus_watts: float, step_seconds: float) -> tuple[BatteryState, float, float]:
    """Charge from a surplus or discharge into a deficit for one step.

    Returns ``(new_state, absorbed_watts, discharged_watts)`` as average power
    over the step.
    """
    hours = step_seconds / 3600.0
    rate_w = state.max_rate_kw * 1000.0
    if surplus_watts > 0:
        room_w = (state.capacity_kwh - state.charge_kwh) * 1000.0 / (hours * state.efficiency)
        absorbed = min(surplus_watts, rate_w, room_w)
        charge = min(state.capacity_kwh, state.charge_kwh + absorbed * hours * state.efficiency / 1000.0)
        return replace(state, charge_kwh=charge), absorbed, 0.0
    if surplus_watts < 0:
        discharged = min(-surplus_watts, rate_w, state.charge_kwh * 1000.0 / hours)
        charge = max(0.0, state.charge_kwh - discharged * hours / 1000.0)
        return replace(state, charge_kwh=charge), 0.0, discharged
    return state, 0.0, 0.0


# --------------------------------------------------------------------------
# configuration and records


@dataclass(frozen=True)
class SimConfig:
    policy: PolicyKind = PolicyKind.SKYBOX_MIP
    horizon_steps: int = 3
    resolve_steps: int = 1
    reidentify_steps: int = 14 * 24
    k: int = 3
    max_miles: float = 500.0
    avail_target: float = 0.9
    evictable_floor: float = 0.9
    power_migr_wh_per_gb: float = 0.1
    forecast_error: float = 0.0
    objective: str = "carbon"
    mip_max_nodes: int = 20_000
    battery_hours: float = 1.0
    battery_rate_kw: float | None = None
    battery_efficiency: float = 1.0
    admission_utilization: float | None = None
    max_steps: int | None = None
    seed: int = 0
    carbon: CarbonParams = CarbonParams()
    cost: CostParams = CostParams()
    rmdc: RmdcConfig = RmdcConfig()

    def __post_init__(self):
        object.__setattr__(self, "policy", PolicyKind(self.policy))
        for name in ("horizon_steps", "resolve_steps", "reidentify_steps", "k", "mip_max_nodes"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.resolve_steps > self.horizon_steps:
            raise ValueError("resolve interval cannot exceed the planning horizon")
        if self.admission_utilization is not None and not 0 < self.admission_utilization <= 1:
            raise ValueError("admission_utilization must lie in (0, 1]")


@dataclass
class VmRecord:
    spec: VmSpec
    group: int | None = None
    node: int | None = None
    last_node: int | None = None
    uptime_steps: int = 0
    downtime_steps: int = 0
    completion_step: int | None = None
    migration_count: int = 0
    admitted_step: int | None = None

    @property
    def done(self) -> bool:
        return self.uptime_steps >= self.spec.actual_lifetime_steps

    @property
    def active(self) -> bool:
        return self.admitted_step is not None and not self.done

    @property
    def avail(self) -> float:
        life = self.spec.actual_lifetime_steps
        return life / (life + self.downtime_steps)


@dataclass
class Ledger:
    """Raw per-step accumulators that ``metrics_finalize`` turns into a report."""

    policy: str
    step_seconds: float
    carbon_g: dict[str, list[float]] = field(default_factory=lambda: {label: [] for label in CARBON_LINES})
    consumption_wh: list[float] = field(default_factory=list)
    renewable_wh: list[float] = field(default_factory=list)
    grid_wh: list[float] = field(default_factory=list)
    charge_wh: list[float] = field(default_factory=list)
    discharge_wh: list[float] = field(default_factory=list)
    events: list[dict] = field(default_factory=list)
    vm_runtime_hours: dict[str, float] = field(default_factory=dict)
    evictable_avail: dict[str, float] = field(default_factory=dict)
    inventory: Inventory = Inventory()
    cost: CostParams = CostParams()
    truncated: bool = False
    unfinished_vms: int = 0
    unadmitted_vms: int = 0
    solves: int = 0
    suboptimal_solves: int = 0
    mis_cases: dict[int, int] = field(default_factory=lambda: {1: 0, 2: 0, 3: 0, 4: 0})

    def log(self, step: int, entity: str, event: str, **payload) -> None:
        self.events.append({"step": step, "entity": entity, "event": event, "payload": payload})


@dataclass
class SimReport:
    policy: str
    steps: int
    step_seconds: float
    weekly: list[dict]
    carbon_totals_g: dict[str, float]
    carbon_total_g: float
    step_carbon_g: list[float]
    cumulative_carbon_g: list[float]
    cost_usd: dict[str, float]
    evictable_uptime: float
    evictable_count: int
    evictable_uptime_vacuous: bool
    migration_count: int
    vm_runtime_hours: float
    migration_frequency: float
    grid_kwh: float
    renewable_kwh: float
    battery_discharge_kwh: float
    truncated: bool
    unfinished_vms: int
    unadmitted_vms: int
    solves: int
    suboptimal_solves: int
    mis_cases: dict[int, int]
    series: dict[str, list[float]]
    events: list[dict]

    def summary(self) -> dict:
        """Scalar metrics, one row of a comparison matrix."""
        return {
            "policy": self.policy,
            "steps": self.steps,
            "carbon_total_g": self.carbon_total_g,
            **{f"carbon_{label}_g": v for label, v in self.carbon_totals_g.items()},
            "cost_total_usd": self.cost_usd["total"],
            "grid_kwh": self.grid_kwh,
            "renewable_kwh": self.renewable_kwh,
            "battery_discharge_kwh": self.battery_discharge_kwh,
            "evictable_uptime": self.evictable_uptime,
            "evictable_count": self.evictable_count,
            "migration_count": self.migration_count,
            "migration_frequency": self.migration_frequency,
            "vm_runtime_hours": self.vm_runtime_hours,
            "truncated": self.truncated,
            "unfinished_vms": self.unfinished_vms,
            "unadmitted_vms": self.unadmitted_vms,
            "suboptimal_solves": self.suboptimal_solves,
        }


def metrics_finalize(ledger: Ledger) -> SimReport:
    steps = len(ledger.consumption_wh)
    hours = ledger.step_seconds / 3600.0
    step_carbon = [0.0] * steps
    for label in CARBON_LINES:
        series = ledger.carbon_g[label]
        if len(series) != steps:
            raise ValueError(f"carbon line {label} has {len(series)} steps, expected {steps}")
        for t, g in enumerate(series):
            step_carbon[t] += g
    cumulative = []
    acc = 0.0
    for g in step_carbon:
        acc += g
        cumulative.append(acc)
    totals = {label: sum(ledger.carbon_g[label]) for label in CARBON_LINES}

    per_week = max(1, round(7 * 86400 / ledger.step_seconds))
    weekly = []
    for w in range(0, steps, per_week):
        row = {"week": w // per_week}
        for label in CARBON_LINES:
            row[label] = sum(ledger.carbon_g[label][w:w + per_week])
        row["total"] = sum(row[label] for label in CARBON_LINES)
        weekly.append(row)

    migrations = sum(1 for ev in ledger.events if ev["event"] == "migrate")
    runtime = sum(ledger.vm_runtime_hours.values())
    avails = list(ledger.evictable_avail.values())
    return SimReport(
        policy=ledger.policy,
        steps=steps,
        step_seconds=ledger.step_seconds,
        weekly=weekly,
        carbon_totals_g=totals,
        carbon_total_g=sum(totals.values()),
        step_carbon_g=step_carbon,
        cumulative_carbon_g=cumulative,
        cost_usd=amortized_cost(ledger.inventory, ledger.cost, steps * hours / HOURS_PER_YEAR),
        evictable_uptime=sum(avails) / len(avails) if avails else 1.0,
        evictable_count=len(avails),
        evictable_uptime_vacuous=not avails,
        migration_count=migrations,
        vm_runtime_hours=runtime,
        migration_frequency=migrations / runtime if runtime > 0 else 0.0,
        grid_kwh=sum(ledger.grid_wh) / 1000.0,
        renewable_kwh=sum(ledger.renewable_wh) / 1000.0,
        battery_discharge_kwh=sum(ledger.discharge_wh) / 1000.0,
        truncated=ledger.truncated,
        unfinished_vms=ledger.unfinished_vms,
        unadmitted_vms=ledger.unadmitted_vms,
        solves=ledger.solves,
        suboptimal_solves=ledger.suboptimal_solves,
        mis_cases=dict(ledger.mis_cases),
        series={
            "consumption_wh": list(ledger.consumption_wh),
            "renewable_wh": list(ledger.renewable_wh),
            "grid_wh": list(ledger.grid_wh),
            "charge_wh": list(ledger.charge_wh),
            "discharge_wh": list(ledger.discharge_wh),
        },
        events=list(ledger.events),
    )


# --------------------------------------------------------------------------
# the loop


def _windowed(sites: Sequence[Site], start: int, stop: int) -> list[Site]:
    return [replace(s, trace=s.trace.window(start, stop), forecast=None) for s in sites]


class _Simulation:
    def __init__(self, sites: Sequence[Site], vms: Sequence[VmSpec], cfg: SimConfig):
        if not sites:
            raise ValueError("no sites to simulate")
        self.cfg = cfg
        self.sites = sorted(sites, key=lambda s: s.site_id)
        steps = {s.trace.step_seconds for s in self.sites}
        if len(steps) != 1:
            raise ValueError(f"site traces use different step lengths: {sorted(steps)}")
        self.step_seconds = steps.pop()
        self.hours = self.step_seconds / 3600.0
        self.T = min(len(s.trace) for s in self.sites)
        if cfg.max_steps is not None:
            self.T = min(self.T, cfg.max_steps)
        self.kind = cfg.policy
        self.by_site = {s.site_id: s for s in self.sites}

        forecasts = {}
        for i, s in enumerate(self.sites):
            if s.forecast is not None:
                forecasts[s.site_id] = s.forecast.predicted
            else:
                forecasts[s.site_id] = inject_error(s.trace, cfg.forecast_error, cfg.seed + i).predicted

        uses_subgraphs = self.kind.migrates or self.kind is PolicyKind.CENTR_GRAPH
        window = min(cfg.reidentify_steps, self.T)
        self.subgraphs = (
            identify(_windowed(self.sites, 0, window), cfg.k, cfg.max_miles) if uses_subgraphs else []
        )
        self.topology: Topology = apply_policy(self.kind, self.sites, self.subgraphs, cfg.rmdc, cfg.battery_hours)
        nodes = self.topology.nodes
        self.actual = [[sum(float(self.by_site[f].trace.samples[t]) for f in n.feeders) for t in range(self.T)]
                       for n in nodes]
        self.forecast = [[sum(float(forecasts[f][t]) for f in n.feeders) for t in range(self.T)] for n in nodes]
        self.capacity_w = sum(n.servers * cfg.rmdc.per_server_watts for n in nodes)
        self.node_of_group = self.topology.groups
        self.group_of_node = {j: g for g, members in enumerate(self.node_of_group) for j in members}

        self.batteries = []
        for n in nodes:
            if n.extra_battery_kwh > 0:
                rate = cfg.battery_rate_kw if cfg.battery_rate_kw is not None else n.extra_battery_kwh / cfg.battery_hours
                self.batteries.append(BatteryState(n.extra_battery_kwh, 0.0, rate, cfg.battery_efficiency))
            else:
                self.batteries.append(None)

        self.records = {v.vm_id: VmRecord(v) for v in sorted(vms, key=lambda v: (v.arrival_step, v.vm_id))}
        if len(self.records) != len(vms):
            raise ValueError("duplicate VM ids in workload")
        self.queue: list[str] = []
        self.book = UptimeBook(floor=cfg.evictable_floor)
        self.corrector = LifetimeCorrector()
        self.plan: dict[str, list[int | None]] = {}
        self.plan_start = 0
        self.plan_done: dict[str, list[bool]] = {}
        self.ledger = Ledger(policy=self.kind.value, step_seconds=self.step_seconds,
                             inventory=self.topology.inventory(cfg.rmdc), cost=cfg.cost)
        self.embodied = embodied_breakdown(self.ledger.inventory, cfg.carbon, self.hours)
        self.mig_w_per_gb = cfg.power_migr_wh_per_gb / self.hours

    # helpers -------------------------------------------------------------

    def node_ci(self, j: int, t: int) -> float:
        node = self.topology.nodes[j]
        kinds = [self.by_site[f].energy_kind for f in node.feeders]
        weights = [float(self.by_site[f].trace.samples[t]) for f in node.feeders]
        total = sum(weights)
        if total <= 0:
            weights, total = [1.0] * len(kinds), float(len(kinds))
        return sum(w * self.cfg.carbon.intensity(k) for w, k in zip(weights, kinds)) / total

    def active(self) -> list[VmRecord]:
        return [r for r in self.records.values() if r.active]

    def name(self, j: int) -> str:
        return self.topology.nodes[j].name

    # phases --------------------------------------------------------------

    def reidentify(self, t: int) -> None:
        cfg = self.cfg
        new = identify(_windowed(self.sites, t - cfg.reidentify_steps, t), cfg.k, cfg.max_miles)
        groups = group_nodes(self.topology.nodes, new)
        if groups == self.node_of_group:
            return
        self.subgraphs = new
        self.node_of_group = groups
        self.group_of_node = {j: g for g, members in enumerate(groups) for j in members}
        for r in self.records.values():
            if r.active:
                r.group = self.group_of_node[r.node if r.node is not None else r.last_node]
        self.plan = {}
        self.ledger.log(t, "cluster", "reidentify", groups=[[self.name(j) for j in g] for g in groups])

    def admit(self, t: int) -> set[str]:
        cfg = self.cfg
        self.queue += [vid for vid, r in self.records.items() if r.spec.arrival_step == t]
        load = [0.0] * len(self.topology.nodes)
        for r in self.active():
            if r.node is not None:
                load[r.node] += r.spec.power_watts
        admitted = set()
        while self.queue:
            r = self.records[self.queue[0]]
            p = r.spec.power_watts
            if cfg.admission_utilization is not None and sum(load) + p > cfg.admission_utilization * self.capacity_w:
                break
            self.queue.pop(0)
            headroom = {g: sum(self.actual[j][t] - load[j] for j in members)
                        for g, members in enumerate(self.node_of_group)}
            g, over = place_on_subgraph(p, headroom)
            j = min(self.node_of_group[g], key=lambda j: (-(self.actual[j][t] - load[j]), j))
            r.group, r.node, r.last_node, r.admitted_step = g, j, j, t
            load[j] += p
            if r.spec.evictable:
                self.book.add(r.spec.vm_id, self.corrector.corrected(r.spec.predicted_lifetime_steps))
            admitted.add(r.spec.vm_id)
            self.ledger.log(t, r.spec.vm_id, "admit", rmdc=self.name(j), overcommit=over)
        return admitted

    def predicted_lifetime(self, r: VmRecord) -> int:
        return self.corrector.corrected(r.spec.predicted_lifetime_steps)

    def build_models(self, t: int, admitted: set[str]) -> list[tuple[list[int], MipModel]]:
        """One planning model per group with active VMs, over forecast supply from step ``t``."""
        cfg = self.cfg
        H = min(cfg.horizon_steps, self.T - t)
        out = []
        for members in self.node_of_group:
            g = self.group_of_node[members[0]]
            recs = [r for r in self.active() if r.group == g]
            if not recs:
                continue
            local = {j: i for i, j in enumerate(members)}
            rmdcs = [
                RmdcSnapshot(self.name(j), self.node_ci(j, t), tuple(self.forecast[j][t:t + H])) for j in members
            ]
            snaps = [
                VmSnapshot(
                    r.spec.vm_id, r.spec.power_watts, r.spec.mem_gb, self.predicted_lifetime(r), r.spec.category,
                    r.uptime_steps, r.downtime_steps,
                    None if (r.node is None or r.spec.vm_id in admitted) else local[r.node],
                )
                for r in recs
            ]
            params = ModelParams(cfg.carbon.intensity_brown, cfg.power_migr_wh_per_gb, cfg.avail_target,
                                 cfg.objective, self.step_seconds, self.book.history_sum, self.book.history_count)
            out.append((members, build_model(rmdcs, snaps, H, params)))
        return out

    def resolve(self, t: int, admitted: set[str]) -> None:
        self.plan, self.plan_done, self.plan_start = {}, {}, t
        for members, model in self.build_models(t, admitted):
            sched = solve(model, SolveLimits(max_nodes=self.cfg.mip_max_nodes))
            self.ledger.solves += 1
            self.ledger.suboptimal_solves += not sched.optimal
            for vm in model.vms:
                self.plan[vm.vm_id] = [
                    None if sched.rmdc_of(vm.vm_id, i) is None else members[sched.rmdc_of(vm.vm_id, i)]
                    for i in range(model.horizon_steps)
                ]
                self.plan_done[vm.vm_id] = [u >= vm.lifetime_steps for u in sched.uptime_steps[vm.vm_id]]

    def decide(self, t: int, admitted: set[str]) -> dict[str, int | None]:
        """Where each active VM runs this step before misprediction handling."""
        cfg = self.cfg
        where = {r.spec.vm_id: (r.node if r.node is not None else r.last_node) for r in self.active()}
        if self.kind is PolicyKind.SKYBOX_MIP:
            if t % cfg.resolve_steps == 0 or t - self.plan_start >= cfg.horizon_steps:
                self.resolve(t, admitted)
            i = t - self.plan_start
            for vid in where:
                row = self.plan.get(vid)
                if row is None or i >= len(row):
                    continue
                if row[i] is not None:
                    where[vid] = row[i]
                elif self.records[vid].spec.evictable and not self.plan_done[vid][i]:
                    if self.book.can_suspend(vid):
                        self.book.suspend(vid)
                        where[vid] = None
        elif self.kind is PolicyKind.SKYBOX_BEST_EFFORT:
            for g, members in enumerate(self.node_of_group):
                recs = [self.records[vid] for vid in where if self.records[vid].group == g]
                if not recs:
                    continue
                local = {j: i for i, j in enumerate(members)}
                step_vms = [
                    StepVm(r.spec.vm_id, r.spec.power_watts, r.spec.mem_gb, r.spec.evictable,
                           local[where[r.spec.vm_id]], r.spec.mem_gb * self.mig_w_per_gb)
                    for r in recs
                ]
                dec = best_effort_step([self.forecast[j][t] for j in members], step_vms, self.book)
                for vid in dec.suspended:
                    self.book.suspend(vid)
                for vid, k in dec.placement.items():
                    where[vid] = None if k is None else members[k]
        return where

    def step(self, t: int) -> None:
        cfg = self.cfg
        ledger = self.ledger
        N = len(self.topology.nodes)
        if self.kind.migrates and t > 0 and t % cfg.reidentify_steps == 0:
            self.reidentify(t)
        before = {r.spec.vm_id: r.node for r in self.active()}
        admitted = self.admit(t)
        for vid in admitted:
            before[vid] = None
        where = self.decide(t, admitted)

        extra = [0.0] * N
        moved = set()
        for vid in sorted(where):
            a, b = before.get(vid), where[vid]
            if a is not None and b is not None and a != b:
                r = self.records[vid]
                w = r.spec.mem_gb * self.mig_w_per_gb
                extra[a] += w
                extra[b] += w
                r.migration_count += 1
                moved.add(vid)
                ledger.log(t, vid, "migrate", src=self.name(a), dst=self.name(b), stage="plan")
            if b is None and before.get(vid) is not None:
                ledger.log(t, vid, "suspend", rmdc=self.name(before[vid]), stage="plan")

        cons = [extra[j] for j in range(N)]
        for vid, j in where.items():
            if j is not None:
                cons[j] += self.records[vid].spec.power_watts
        planned_grid = [max(0.0, cons[j] - self.forecast[j][t]) for j in range(N)]
        handler_grid = [0.0] * N

        if self.kind.migrates:
            for g, members in enumerate(self.node_of_group):
                local = {j: i for i, j in enumerate(members)}
                live = [
                    LiveVm(vid, self.records[vid].spec.power_watts, self.records[vid].spec.mem_gb,
                           self.records[vid].spec.evictable, None if where[vid] is None else local[where[vid]],
                           movable=vid not in moved)
                    for vid in sorted(where) if self.records[vid].group == g
                ]
                self._classify(t, members, live, local)
                state = SubgraphState(
                    [self.actual[j][t] for j in members], [planned_grid[j] for j in members], live,
                    self.mig_w_per_gb, [extra[j] for j in members],
                )
                acts = handle_subgraph(state, self.book, t)
                for vm in live:
                    where[vm.vm_id] = None if vm.rmdc is None else members[vm.rmdc]
                for vid, src, dst in acts.migrations:
                    self.records[vid].migration_count += 1
                    ledger.log(t, vid, "migrate", src=self.name(members[src]), dst=self.name(members[dst]),
                               stage="handler")
                for vid in acts.evictions:
                    ledger.log(t, vid, "suspend", stage="handler")
                for ev in acts.events:
                    ledger.log(t, self.name(members[ev["rmdc"]]), "handler_" + ev["action"],
                               magnitude=ev["magnitude"], **{key: ev[key] for key in ("vm", "round") if key in ev})
                for i, j in enumerate(members):
                    extra[j] = state.extra_watts[i]
                    handler_grid[j] = state.grid_watts[i] - planned_grid[j]
            cons = [extra[j] for j in range(N)]
            for vid, j in where.items():
                if j is not None:
                    cons[j] += self.records[vid].spec.power_watts
            for j in range(N):
                if cons[j] > self.actual[j][t] + planned_grid[j] + handler_grid[j] + 1e-6:
                    raise AssertionError(f"step {t}: rMDC {self.name(j)} draws more than supply plus grid")

        step_g = {label: 0.0 for label in CARBON_LINES}
        tot = {"cons": 0.0, "ru": 0.0, "grid": 0.0, "chg": 0.0, "dis": 0.0}
        for j in range(N):
            supply = self.actual[j][t]
            direct = min(cons[j], supply)
            charged = discharged = 0.0
            if self.batteries[j] is not None:
                self.batteries[j], charged, discharged = step_battery(self.batteries[j], supply - cons[j],
                                                                      self.step_seconds)
            grid = max(0.0, cons[j] - direct - discharged)
            ru = direct + charged
            if abs(ru + grid + discharged - charged - cons[j]) * self.hours > ENERGY_TOL_WH:
                raise AssertionError(f"step {t}: energy balance broken at {self.name(j)}")
            step_g[OP_RENEWABLE] += ru * self.hours / 1000.0 * self.node_ci(j, t)
            step_g[OP_GRID] += grid * self.hours / 1000.0 * cfg.carbon.intensity_brown
            for key, v in (("cons", cons[j]), ("ru", ru), ("grid", grid), ("chg", charged), ("dis", discharged)):
                tot[key] += v * self.hours
        for label in (EMB_SERVER, EMB_BATTERY, EMB_COOLING):
            step_g[label] = self.embodied[label]
        for label in CARBON_LINES:
            ledger.carbon_g[label].append(step_g[label])
        ledger.consumption_wh.append(tot["cons"])
        ledger.renewable_wh.append(tot["ru"])
        ledger.grid_wh.append(tot["grid"])
        ledger.charge_wh.append(tot["chg"])
        ledger.discharge_wh.append(tot["dis"])

        for vid in sorted(where):
            r = self.records[vid]
            j = where[vid]
            if j is None:
                if not r.spec.evictable:
                    raise AssertionError(f"step {t}: regular VM {vid} powered off")
                r.downtime_steps += 1
                r.node = None
            else:
                r.uptime_steps += 1
                r.node = r.last_node = j
                ledger.vm_runtime_hours[vid] = ledger.vm_runtime_hours.get(vid, 0.0) + self.hours
            if r.spec.evictable and self.book.entries[vid][1] != r.downtime_steps:
                raise AssertionError(f"step {t}: uptime book out of sync for {vid}")
            if r.done:
                r.completion_step = t
                r.node = None
                update_lifetime_offset(self.corrector, r.spec.predicted_lifetime_steps, r.spec.actual_lifetime_steps)
                if r.spec.evictable:
                    self.book.entries[vid][0] = r.spec.actual_lifetime_steps
                    self.book.close(vid)
                    ledger.evictable_avail[vid] = r.avail
                ledger.log(t, vid, "complete", uptime=r.uptime_steps, downtime=r.downtime_steps)

    def _classify(self, t, members, live, local) -> None:
        for j in members:
            on = [vm for vm in live if vm.rmdc == local[j]]
            case = classify(
                self.forecast[j][t], self.actual[j][t],
                [self.predicted_lifetime(self.records[vm.vm_id]) for vm in on],
                [(self.records[vm.vm_id].uptime_steps, False) for vm in on],
            )
            self.ledger.mis_cases[case.case_id] += 1

    def run(self) -> SimReport:
        for t in range(self.T):
            self.step(t)
        ledger = self.ledger
        for r in self.records.values():
            if r.admitted_step is None:
                ledger.unadmitted_vms += 1
            elif not r.done:
                ledger.unfinished_vms += 1
                if r.spec.evictable:
                    ledger.evictable_avail[r.spec.vm_id] = r.avail
        ledger.truncated = bool(ledger.unadmitted_vms or ledger.unfinished_vms)
        return metrics_finalize(ledger)


def run(sites: Sequence[Site], vms: Sequence[VmSpec], config: SimConfig = SimConfig()) -> SimReport:
    """Replay ``sites`` supply and ``vms`` arrivals under ``config.policy``.

    Deterministic for fixed inputs and seed. When the traces end before every
    VM finishes, the report is flagged as truncated.
    """
    return _Simulation(sites, vms, config).run()


def planning_models(sites: Sequence[Site], vms: Sequence[VmSpec], config: SimConfig = SimConfig(),
                    step: int = 0) -> list[MipModel]:
    """The placement models the MIP policy would solve at ``step`` (earlier steps are simulated)."""
    sim = _Simulation(sites, vms, replace(config, policy=PolicyKind.SKYBOX_MIP))
    if not 0 <= step < sim.T:
        raise ValueError(f"step {step} outside the trace (0..{sim.T - 1})")
    for t in range(step):
        sim.step(t)
    if step > 0 and step % config.reidentify_steps == 0:
        sim.reidentify(step)
    return [model for _, model in sim.build_models(step, sim.admit(step))]
