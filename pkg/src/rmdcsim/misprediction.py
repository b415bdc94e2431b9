"""Reacting to supply and lifetime forecast errors once actual power is known."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

from .uptime import UptimeBook

OVER = "over"
UNDER = "under"
EXACT = "exact"

# quadrant by (lifetime, power) direction after folding "exact" onto the benign side
_QUADRANT = {(OVER, UNDER): 1, (OVER, OVER): 2, (UNDER, UNDER): 3, (UNDER, OVER): 4}

MIGRATE = "migrate"
EVICT = "evict"
GRID = "grid"
_STAGE = {MIGRATE: 0, EVICT: 1, GRID: 2}


@dataclass(frozen=True)
class MisCase:
    lifetime: str
    power: str
    case_id: int

    def __post_init__(self):
        for v in (self.lifetime, self.power):
            if v not in (OVER, UNDER, EXACT):
                raise ValueError(f"unknown direction {v!r}")
        lt = UNDER if self.lifetime == UNDER else OVER
        pw = OVER if self.power == OVER else UNDER
        if _QUADRANT[(lt, pw)] != self.case_id:
            raise ValueError(f"case {self.case_id} does not match ({self.lifetime}, {self.power})")

    @property
    def power_deficiency(self) -> bool:
        return self.case_id in (2, 4)

    @property
    def extra_lifetime(self) -> bool:
        return self.case_id in (3, 4)


def _direction(predicted: float, actual: float) -> str:
    if predicted > actual:
        return OVER
    if predicted < actual:
        return UNDER
    return EXACT


def classify(
    predicted_supply: float,
    actual_supply: float,
    predicted_lifetimes: Sequence[int],
    actual_progress: Sequence[tuple[int, bool]],
) -> MisCase:
    """Quadrant for one rMDC.

    ``actual_progress`` holds ``(uptime_steps, completed)`` per VM, aligned
    with ``predicted_lifetimes``. Lifetime is under-predicted when some VM has
    reached its prediction and is still running, over-predicted when some VM
    completed before it.
    """
    if len(predicted_lifetimes) != len(actual_progress):
        raise ValueError("predicted lifetimes and progress differ in length")
    lifetime = EXACT
    for pred, (up, done) in zip(predicted_lifetimes, actual_progress):
        if not done and up >= pred:
            lifetime = UNDER
            break
        if done and up < pred:
            lifetime = OVER
    power = _direction(predicted_supply, actual_supply)
    lt = UNDER if lifetime == UNDER else OVER
    pw = OVER if power == OVER else UNDER
    return MisCase(lifetime, power, _QUADRANT[(lt, pw)])


@dataclass
class LifetimeCorrector:
    """Mean overrun of VMs that outlived their prediction, added to later predictions."""

    offset_steps: float = 0.0
    samples: int = 0

    def corrected(self, predicted_steps: int) -> int:
        return predicted_steps + round(self.offset_steps)


def update_lifetime_offset(corrector: LifetimeCorrector, predicted_steps: int, actual_steps: int) -> LifetimeCorrector:
    """Fold one completed VM in; only under-predicted lifetimes move the offset."""
    if actual_steps > predicted_steps:
        corrector.samples += 1
        corrector.offset_steps += (actual_steps - predicted_steps - corrector.offset_steps) / corrector.samples
    return corrector


# --------------------------------------------------------------------------
# deficit handling


@dataclass
class LiveVm:
    vm_id: str
    power_watts: float
    mem_gb: float
    evictable: bool
    rmdc: int | None  # None while suspended
    movable: bool = True  # False once the VM already moved this step


@dataclass
class SubgraphState:
    """Actual supply and current draw of one subgraph during a step.

    ``grid_watts`` starts at the planned grid draw and grows with the handler.
    ``extra_watts`` carries migration draw already committed this step.
    """

    renewable_watts: list[float]
    grid_watts: list[float]
    vms: list[LiveVm]
    migration_watts_per_gb: float = 0.0
    extra_watts: list[float] | None = None

    def __post_init__(self):
        if len(self.grid_watts) != len(self.renewable_watts):
            raise ValueError("grid and renewable tables differ in length")
        if self.extra_watts is None:
            self.extra_watts = [0.0] * len(self.renewable_watts)

    def consumption(self, k: int) -> float:
        return sum(vm.power_watts for vm in self.vms if vm.rmdc == k) + self.extra_watts[k]

    def supply(self, k: int) -> float:
        return self.renewable_watts[k] + self.grid_watts[k]

    def surplus(self, k: int) -> float:
        return self.supply(k) - self.consumption(k)


@dataclass
class Actions:
    migrations: list[tuple[str, int, int]] = field(default_factory=list)
    evictions: list[str] = field(default_factory=list)
    grid_watts: float = 0.0
    events: list[dict] = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return not (self.migrations or self.evictions or self.grid_watts)


def _relieve(k: int, state: SubgraphState, book: UptimeBook, acts: Actions, step: int, round_: int) -> bool:
    """Migration then eviction stage for rMDC ``k``; True if anything changed."""
    eps = 1e-9
    if state.surplus(k) >= -eps:
        return False
    before = len(acts.events)

    def log(action, vm, **extra):
        acts.events.append({"step": step, "rmdc": k, "round": round_, "action": action,
                            "magnitude": vm.power_watts, "vm": vm.vm_id, **extra})

    siblings = [j for j in range(len(state.renewable_watts)) if j != k]
    for vm in sorted((v for v in state.vms if v.rmdc == k), key=lambda v: (-v.power_watts, v.vm_id)):
        if state.surplus(k) >= -eps or not siblings:
            break
        mig_w = vm.mem_gb * state.migration_watts_per_gb
        if not vm.movable or vm.power_watts <= mig_w:
            continue
        target = min(siblings, key=lambda j: (-state.surplus(j), j))
        if state.surplus(target) < vm.power_watts + mig_w - eps:
            continue
        vm.rmdc = target
        vm.movable = False
        state.extra_watts[k] += mig_w
        state.extra_watts[target] += mig_w
        acts.migrations.append((vm.vm_id, k, target))
        log(MIGRATE, vm, to=target)

    for vm in sorted((v for v in state.vms if v.rmdc == k and v.evictable), key=lambda v: (-v.power_watts, v.vm_id)):
        if state.surplus(k) >= -eps:
            break
        if vm.vm_id not in book.entries or not book.can_suspend(vm.vm_id):
            continue
        book.suspend(vm.vm_id)
        vm.rmdc = None
        acts.evictions.append(vm.vm_id)
        log(EVICT, vm)
    return len(acts.events) > before


def _fill(k: int, state: SubgraphState, acts: Actions, step: int) -> None:
    gap = -state.surplus(k)
    if gap > 1e-9:
        state.grid_watts[k] += gap
        acts.grid_watts += gap
        acts.events.append({"step": step, "rmdc": k, "action": GRID, "magnitude": gap})


def handle(k: int, state: SubgraphState, book: UptimeBook, step: int = 0) -> Actions:
    """Close rMDC ``k``'s deficit: migrate, then evict, then draw from the grid.

    Migrations take VMs in descending power to the sibling with the most
    spare supply, as long as the VM plus its transfer draw fits there and the
    move lowers the local draw. Evictions take evictable VMs in descending
    power while the uptime book stays at its floor. The grid covers whatever
    is left. ``state`` and ``book`` are updated in place, so a second call in
    the same step finds no deficit and does nothing.
    """
    acts = Actions()
    _relieve(k, state, book, acts, step, 0)
    _fill(k, state, acts, step)
    return acts


def handle_subgraph(state: SubgraphState, book: UptimeBook, step: int = 0) -> Actions:
    """Relieve every deficit rMDC of a subgraph, grid last.

    Migration and eviction run in rounds, largest deficit first, until a
    round changes nothing: an eviction that overshoots one rMDC's deficit
    leaves room a sibling handled earlier can still migrate into. Only then
    does the grid cover what remains.
    """
    acts = Actions()
    K = len(state.renewable_watts)
    round_ = 0
    while True:
        order = sorted(range(K), key=lambda k: (state.surplus(k), k))
        changed = False
        for k in order:
            changed |= _relieve(k, state, book, acts, step, round_)
        if not changed:
            break
        round_ += 1
    for k in sorted(range(K), key=lambda k: (state.surplus(k), k)):
        _fill(k, state, acts, step)
    return acts


def audit_stage_order(events: Sequence[dict]) -> list[str]:
    """Problems in an action log.

    Per step, rMDC and round, migrations precede evictions; per step and rMDC,
    nothing follows a grid draw.
    """
    problems = []
    last: dict[tuple, int] = {}
    filled: set[tuple] = set()
    for i, ev in enumerate(events):
        if ev.get("action") not in _STAGE:
            continue
        cell = (ev["step"], ev["rmdc"])
        if cell in filled:
            problems.append(f"event {i}: {ev['action']} after the grid draw at step {cell[0]} rMDC {cell[1]}")
        if ev["action"] == GRID:
            filled.add(cell)
            continue
        key = (*cell, ev.get("round", 0))
        stage = _STAGE[ev["action"]]
        if stage < last.get(key, 0):
            problems.append(f"event {i}: {ev['action']} after a later stage at step {cell[0]} rMDC {cell[1]}")
        last[key] = max(stage, last.get(key, 0))
    return problems


def events_to_jsonl(events: Sequence[dict]) -> str:
    return "".join(json.dumps(ev, sort_keys=True) + "\n" for ev in events)
