"""Numerical constraint audit of a schedule against its model."""
from __future__ import annotations

from dataclasses import dataclass

from .model import POWER_TOL, Migration, MipModel, Schedule, avail_ratio

# constraint labels
STRUCTURE = "structure"
ALWAYS_ON = "always_on"
C1 = "C1"  # power balance: Consum = NR + RU, RU <= RS
C1P = "C1'"  # consumption = VM power + migration energy at both ends
C2 = "C2"  # progress
C3 = "C3"  # completion
C4 = "C4"  # availability
C5 = "C5"  # migration linking


@dataclass(frozen=True)
class Violation:
    constraint: str
    index: tuple
    message: str

    def __str__(self) -> str:
        return f"{self.constraint} violated at {self.index}: {self.message}"


def check_feasible(model: MipModel, schedule: Schedule) -> Violation | None:
    """Return the first violated constraint, or ``None`` when the schedule is feasible."""
    T = model.horizon_steps
    if len(schedule.placements) != T:
        return Violation(STRUCTURE, (), f"{len(schedule.placements)} placement steps for horizon {T}")

    # placements are well-formed and walk each VM through its lifecycle
    expected_migrations: list[Migration] = []
    for vm in model.vms:
        n = vm.subgraph
        prev = vm.initial_rmdc
        up = vm.prior_uptime_steps
        completed_at = None
        reported_up = schedule.uptime_steps.get(vm.vm_id)
        for t in range(T):
            if vm.vm_id not in schedule.placements[t]:
                return Violation(STRUCTURE, (vm.vm_id, t), "VM missing from placement map")
            p = schedule.placements[t][vm.vm_id]
            if p is not None:
                if p[0] != n or not 0 <= p[1] < model.rmdcs_per_subgraph[n]:
                    return Violation(STRUCTURE, (vm.vm_id, t), f"placement {p} outside subgraph {n}")
                if t < vm.release_step:
                    return Violation(STRUCTURE, (vm.vm_id, t), "VM on before its release step")
            k = None if p is None else p[1]
            done = up >= vm.lifetime_steps
            if done and k is not None:
                return Violation(C3, (vm.vm_id, t), "VM still powered after completion")
            if not vm.evictable and not done and t >= vm.release_step and k is None:
                return Violation(ALWAYS_ON, (vm.vm_id, t), "regular VM powered off before completion")
            if k is not None:
                up += 1
                if prev is not None and prev != k:
                    expected_migrations.append(Migration(vm.vm_id, n, prev, k, t))
            if reported_up is None or len(reported_up) != T or reported_up[t] != up:
                got = None if reported_up is None or len(reported_up) <= t else reported_up[t]
                return Violation(C2, (vm.vm_id, t), f"progress {got} != {up}")
            if completed_at is None and up >= vm.lifetime_steps:
                completed_at = t
            prev = k
        if schedule.completion_step.get(vm.vm_id, "missing") != completed_at:
            return Violation(
                C3, (vm.vm_id,), f"completion step {schedule.completion_step.get(vm.vm_id)} != {completed_at}"
            )

    expected_migrations.sort(key=lambda mg: (mg.step, mg.vm_id))
    got = sorted(schedule.migrations, key=lambda mg: (mg.step, mg.vm_id))
    seen = set()
    for mg in got:
        if (mg.vm_id, mg.step) in seen:
            return Violation(C5, (mg.vm_id, mg.step), "VM migrated twice in one step")
        seen.add((mg.vm_id, mg.step))
    if got != expected_migrations:
        extra = [mg for mg in got if mg not in expected_migrations]
        missing = [mg for mg in expected_migrations if mg not in got]
        ref, what = (extra[0], "recorded without a placement change") if extra else (
            missing[0], "placement change without a migration record")
        return Violation(C5, (ref.vm_id, ref.subgraph, ref.src, ref.dst, ref.step), f"migration {what}")

    # consumption must equal VM draw plus migration energy at source and target
    expect = [[[0.0] * T for _ in range(kn)] for kn in model.rmdcs_per_subgraph]
    for t in range(T):
        for vm in model.vms:
            p = schedule.placements[t][vm.vm_id]
            if p is not None:
                expect[p[0]][p[1]][t] += vm.power_watts[t]
    by_id = {vm.vm_id: vm for vm in model.vms}
    for mg in got:
        w = model.migration_watts(by_id[mg.vm_id])
        expect[mg.subgraph][mg.src][mg.step] += w
        expect[mg.subgraph][mg.dst][mg.step] += w
    for n, k in model.cells():
        for t in range(T):
            c = schedule.consumption_watts[n][k][t]
            if abs(c - expect[n][k][t]) > POWER_TOL:
                return Violation(C1P, (n, k, t), f"consumption {c} != VM+migration draw {expect[n][k][t]}")

    for n, k in model.cells():
        for t in range(T):
            c = schedule.consumption_watts[n][k][t]
            nr = schedule.grid_draw_watts[n][k][t]
            ru = schedule.renewable_used_watts[n][k][t]
            rs = model.supply_watts[n][k][t]
            if nr < -POWER_TOL or ru < -POWER_TOL:
                return Violation(C1, (n, k, t), "negative power draw")
            if ru > rs + POWER_TOL:
                return Violation(C1, (n, k, t), f"renewable use {ru} exceeds supply {rs}")
            if abs(c - (nr + ru)) > POWER_TOL:
                return Violation(C1, (n, k, t), f"consumption {c} != grid {nr} + renewable {ru}")

    avail_sum = 0.0
    n_ev = 0
    for vm in model.vms:
        d = vm.prior_downtime_steps
        up = vm.prior_uptime_steps
        for t in range(T):
            if schedule.placements[t][vm.vm_id] is not None:
                up += 1
            elif t >= vm.release_step and up < vm.lifetime_steps:
                d += 1
        if schedule.downtime_steps.get(vm.vm_id) != d:
            return Violation(C4, (vm.vm_id,), f"downtime {schedule.downtime_steps.get(vm.vm_id)} != {d}")
        if vm.evictable:
            a = avail_ratio(vm.lifetime_steps, d)
            if abs(schedule.avail.get(vm.vm_id, -1.0) - a) > 1e-12:
                return Violation(C4, (vm.vm_id,), f"availability {schedule.avail.get(vm.vm_id)} != {a}")
            avail_sum += a
            n_ev += 1
    total = model.avail_history_count + n_ev
    if total:
        mean = (model.avail_history_sum + avail_sum) / total
        if mean < model.avail_target - 1e-12:
            return Violation(C4, (), f"mean evictable availability {mean:.6f} < target {model.avail_target}")
    return None
