"""Time-indexed placement/migration model for VMs inside subgraphs.

Index conventions: subgraph ``n``, rMDC ``k`` (position inside its subgraph),
step ``t`` in ``range(horizon_steps)``. A placement is ``None`` (VM off) or
``(n, k)``. Migrations at step ``t`` move a VM from its rMDC at ``t-1`` (or its
initial rMDC when ``t == 0``) to a different rMDC at ``t``; both ends must be
on. The migration energy is charged in full to the source and the target cell
of step ``t``.

Renewable/grid split for fixed binaries is analytic: ``RU = min(Consum, RS)``
and ``NR = Consum - RU`` is optimal because grid intensity exceeds renewable
intensity.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

REGULAR = "regular"
EVICTABLE = "evictable"

OBJECTIVE_CARBON = "carbon"
OBJECTIVE_GRID = "grid"

CARBON_RTOL = 1e-9
POWER_TOL = 1e-6


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelVm:
    vm_id: str
    subgraph: int
    power_watts: tuple[float, ...]  # per horizon step
    mem_gb: float
    lifetime_steps: int
    category: str = REGULAR
    prior_uptime_steps: int = 0
    prior_downtime_steps: int = 0
    initial_rmdc: int | None = None
    release_step: int = 0

    @property
    def evictable(self) -> bool:
        return self.category == EVICTABLE

    @property
    def remaining_steps(self) -> int:
        return max(0, self.lifetime_steps - self.prior_uptime_steps)


@dataclass
class MipModel:
    vms: list[ModelVm]
    rmdcs_per_subgraph: list[int]
    supply_watts: list[list[list[float]]]  # [n][k][t]
    ci_renewable: list[list[float]]  # gCO2eq/kWh per [n][k]
    ci_grid: float
    horizon_steps: int
    step_seconds: float = 3600.0
    power_migr_wh_per_gb: float = 0.1
    avail_target: float = 0.9
    avail_history_sum: float = 0.0
    avail_history_count: int = 0
    objective: str = OBJECTIVE_CARBON
    rmdc_names: list[list[str]] | None = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.horizon_steps < 1:
            raise ModelError("horizon must be >= 1 step")
        if not self.rmdcs_per_subgraph or any(k < 1 for k in self.rmdcs_per_subgraph):
            raise ModelError("every subgraph needs at least one rMDC")
        if self.objective not in (OBJECTIVE_CARBON, OBJECTIVE_GRID):
            raise ModelError(f"unknown objective {self.objective!r}")
        if not 0.0 <= self.avail_target <= 1.0:
            raise ModelError("avail_target must lie in [0, 1]")
        if len(self.supply_watts) != len(self.rmdcs_per_subgraph):
            raise ModelError("supply table does not match subgraph count")
        for n, kn in enumerate(self.rmdcs_per_subgraph):
            if len(self.supply_watts[n]) != kn or len(self.ci_renewable[n]) != kn:
                raise ModelError(f"subgraph {n}: supply/intensity tables do not match its rMDC count")
            for row in self.supply_watts[n]:
                if len(row) != self.horizon_steps:
                    raise ModelError(f"subgraph {n}: supply row length != horizon")
                if min(row) < 0:
                    raise ModelError(f"subgraph {n}: negative supply")
        if self.ci_grid < max(max(r) for r in self.ci_renewable):
            raise ModelError("grid intensity must not be below renewable intensity")
        ids = [vm.vm_id for vm in self.vms]
        if len(set(ids)) != len(ids):
            raise ModelError("duplicate vm ids")
        for vm in self.vms:
            if not 0 <= vm.subgraph < len(self.rmdcs_per_subgraph):
                raise ModelError(f"{vm.vm_id}: unknown subgraph {vm.subgraph}")
            if len(vm.power_watts) != self.horizon_steps:
                raise ModelError(f"{vm.vm_id}: power series length != horizon")
            if vm.initial_rmdc is not None and not 0 <= vm.initial_rmdc < self.rmdcs_per_subgraph[vm.subgraph]:
                raise ModelError(f"{vm.vm_id}: initial rMDC out of range")
            if vm.lifetime_steps < 1:
                raise ModelError(f"{vm.vm_id}: lifetime must be >= 1")

    # index sets -----------------------------------------------------------

    @property
    def step_hours(self) -> float:
        return self.step_seconds / 3600.0

    @property
    def evictable_ids(self) -> list[str]:
        return [vm.vm_id for vm in self.vms if vm.evictable]

    def cells(self) -> list[tuple[int, int]]:
        return [(n, k) for n, kn in enumerate(self.rmdcs_per_subgraph) for k in range(kn)]

    def x_index(self) -> list[tuple[str, int, int, int]]:
        return [
            (vm.vm_id, vm.subgraph, k, t)
            for vm in self.vms
            for k in range(self.rmdcs_per_subgraph[vm.subgraph])
            for t in range(self.horizon_steps)
        ]

    def m_index(self) -> list[tuple[str, int, int, int, int]]:
        out = []
        for vm in self.vms:
            kn = self.rmdcs_per_subgraph[vm.subgraph]
            for k1, k2 in itertools.permutations(range(kn), 2):
                for t in range(self.horizon_steps):
                    out.append((vm.vm_id, vm.subgraph, k1, k2, t))
        return out

    @property
    def n_x_vars(self) -> int:
        return sum(self.rmdcs_per_subgraph[vm.subgraph] for vm in self.vms) * self.horizon_steps

    @property
    def n_m_vars(self) -> int:
        return sum(
            self.rmdcs_per_subgraph[vm.subgraph] * (self.rmdcs_per_subgraph[vm.subgraph] - 1) for vm in self.vms
        ) * self.horizon_steps

    # costs ----------------------------------------------------------------

    def migration_watts(self, vm: ModelVm) -> float:
        """Average extra power one migration adds to each end over one step."""
        return vm.mem_gb * self.power_migr_wh_per_gb / self.step_hours

    def cell_carbon(self, n: int, k: int, t: int, consumption: float) -> float:
        supply = self.supply_watts[n][k][t]
        ru = min(consumption, supply)
        nr = consumption - ru
        kwh = self.step_hours / 1000.0
        ci_r = self.ci_renewable[n][k] if self.objective == OBJECTIVE_CARBON else 0.0
        return (ru * ci_r + nr * self.ci_grid) * kwh

    def options(self, vm: ModelVm, t: int, done: bool) -> list[int | None]:
        """Admissible rMDC choices (``None`` = off) for a VM at step ``t``."""
        if t < vm.release_step or done:
            return [None]
        ks = list(range(self.rmdcs_per_subgraph[vm.subgraph]))
        return ks + [None] if vm.evictable else ks


@dataclass(frozen=True)
class Migration:
    vm_id: str
    subgraph: int
    src: int
    dst: int
    step: int


@dataclass
class Schedule:
    placements: list[dict[str, tuple[int, int] | None]]
    migrations: list[Migration]
    consumption_watts: list[list[list[float]]]
    grid_draw_watts: list[list[list[float]]]
    renewable_used_watts: list[list[list[float]]]
    uptime_steps: dict[str, list[int]]
    completion_step: dict[str, int | None]
    downtime_steps: dict[str, int]
    avail: dict[str, float]
    objective_carbon_g: float
    evictable_uptime: float
    migration_count: int
    optimal: bool = False
    nodes: int = 0
    solver: str = ""

    @property
    def grid_energy_wh(self) -> float:
        return self._energy(self.grid_draw_watts)

    @property
    def renewable_energy_wh(self) -> float:
        return self._energy(self.renewable_used_watts)

    _step_hours: float = field(default=1.0, repr=False)

    def _energy(self, table) -> float:
        return sum(sum(row) for sub in table for row in sub) * self._step_hours

    def key(self) -> tuple[float, float, int]:
        """Lexicographic objective: carbon, then evictable uptime (max), then migrations."""
        return (self.objective_carbon_g, -sum(self.avail.values()), self.migration_count)

    def rmdc_of(self, vm_id: str, t: int) -> int | None:
        p = self.placements[t].get(vm_id)
        return None if p is None else p[1]


def carbon_close(a: float, b: float) -> bool:
    return abs(a - b) <= CARBON_RTOL * max(1.0, abs(a), abs(b))


def lex_better(a: tuple[float, float, int], b: tuple[float, float, int] | None) -> bool:
    """Strictly better under (carbon, -uptime, migrations) with carbon/uptime tolerance."""
    if b is None:
        return True
    if not carbon_close(a[0], b[0]):
        return a[0] < b[0]
    if abs(a[1] - b[1]) > 1e-12:
        return a[1] < b[1]
    return a[2] < b[2]


def avail_ratio(lifetime: int, downtime: int) -> float:
    return lifetime / (lifetime + downtime)


def evaluate(model: MipModel, plan: Sequence[Sequence[int | None]], *, solver: str = "", optimal: bool = False,
             nodes: int = 0) -> Schedule:
    """Derive every model variable from a placement plan ``plan[t][m]``.

    The plan is taken as-is: no constraint is enforced here (see
    ``check_feasible``), except that VM progress stops counting once it
    reaches the remaining lifetime.
    """
    T = model.horizon_steps
    if len(plan) != T:
        raise ModelError(f"plan covers {len(plan)} steps, horizon is {T}")
    cons = [[[0.0] * T for _ in range(kn)] for kn in model.rmdcs_per_subgraph]
    placements: list[dict[str, tuple[int, int] | None]] = [{} for _ in range(T)]
    migrations: list[Migration] = []
    uptime = {vm.vm_id: [] for vm in model.vms}
    completion: dict[str, int | None] = {}
    downtime: dict[str, int] = {}
    for m, vm in enumerate(model.vms):
        n = vm.subgraph
        mig_w = model.migration_watts(vm)
        prev = vm.initial_rmdc
        up = vm.prior_uptime_steps
        down = vm.prior_downtime_steps
        done_at = None
        for t in range(T):
            k = plan[t][m]
            placements[t][vm.vm_id] = None if k is None else (n, k)
            if k is not None:
                cons[n][k][t] += vm.power_watts[t]
                if prev is not None and prev != k:
                    migrations.append(Migration(vm.vm_id, n, prev, k, t))
                    cons[n][prev][t] += mig_w
                    cons[n][k][t] += mig_w
                up += 1
            elif done_at is None and t >= vm.release_step and up < vm.lifetime_steps:
                down += 1
            if done_at is None and up >= vm.lifetime_steps:
                done_at = t
            uptime[vm.vm_id].append(up)
            prev = k
        completion[vm.vm_id] = done_at
        downtime[vm.vm_id] = down
    migrations.sort(key=lambda mg: (mg.step, mg.vm_id))

    grid = [[[0.0] * T for _ in range(kn)] for kn in model.rmdcs_per_subgraph]
    renew = [[[0.0] * T for _ in range(kn)] for kn in model.rmdcs_per_subgraph]
    carbon = 0.0
    for n, k in model.cells():
        for t in range(T):
            c = cons[n][k][t]
            ru = min(c, model.supply_watts[n][k][t])
            renew[n][k][t] = ru
            grid[n][k][t] = c - ru
            carbon += model.cell_carbon(n, k, t, c)

    avail = {vm.vm_id: avail_ratio(vm.lifetime_steps, downtime[vm.vm_id]) for vm in model.vms if vm.evictable}
    ev_uptime = sum(avail.values()) / len(avail) if avail else 1.0
    sched = Schedule(
        placements=placements,
        migrations=migrations,
        consumption_watts=cons,
        grid_draw_watts=grid,
        renewable_used_watts=renew,
        uptime_steps=uptime,
        completion_step=completion,
        downtime_steps=downtime,
        avail=avail,
        objective_carbon_g=carbon,
        evictable_uptime=ev_uptime,
        migration_count=len(migrations),
        optimal=optimal,
        nodes=nodes,
        solver=solver,
    )
    sched._step_hours = model.step_hours
    return sched


def plan_of(model: MipModel, schedule: Schedule) -> list[list[int | None]]:
    return [[schedule.rmdc_of(vm.vm_id, t) for vm in model.vms] for t in range(model.horizon_steps)]


def avail_feasible(model: MipModel, avail_sum: float, n_evictable: int) -> bool:
    total = model.avail_history_count + n_evictable
    if total == 0:
        return True
    return (model.avail_history_sum + avail_sum) / total >= model.avail_target - 1e-12


def extract_migrations(prev: dict, nxt: dict) -> list[tuple[str, int, int]]:
    """VMs on in both steps whose rMDC changed, as ``(vm_id, from, to)``.

    ``prev`` and ``nxt`` map vm_id to ``(subgraph, rmdc)`` or ``None``. A VM
    that is off in either step is a suspension or restart, not a migration.
    """
    out = []
    for vm_id in sorted(nxt):
        a, b = prev.get(vm_id), nxt[vm_id]
        if a is not None and b is not None and a != b:
            out.append((vm_id, a[1], b[1]))
    return out
