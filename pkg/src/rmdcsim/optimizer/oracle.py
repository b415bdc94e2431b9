"""Exhaustive reference solver for tiny instances.

Enumerates every joint placement sequence. Sequences that reach the same
(placement, progress, downtime) state after a step share their futures, so
only the best prefix per state is kept; this merges identical subtrees without
discarding any distinct outcome. It shares nothing with the branch-and-bound
search except the final ``evaluate`` used to report the schedule.
"""
from __future__ import annotations

import itertools

from .model import MipModel, ModelError, Schedule, evaluate

MAX_VMS = 4
MAX_RMDCS = 3
MAX_STEPS = 5


def _step_cost(model: MipModel, t: int, prev: tuple, action: tuple) -> tuple[float, int]:
    cons = {}
    migrations = 0
    for vm, p, k in zip(model.vms, prev, action):
        if k is None:
            continue
        n = vm.subgraph
        cons[(n, k)] = cons.get((n, k), 0.0) + vm.power_watts[t]
        if p is not None and p != k:
            migrations += 1
            e = vm.mem_gb * model.power_migr_wh_per_gb / model.step_hours
            cons[(n, p)] = cons.get((n, p), 0.0) + e
            cons[(n, k)] = cons.get((n, k), 0.0) + e
    grams = 0.0
    for (n, k), c in cons.items():
        supply = model.supply_watts[n][k][t]
        renewable = c if c < supply else supply
        grid = c - renewable
        ci_r = model.ci_renewable[n][k] if model.objective == "carbon" else 0.0
        grams += (renewable * ci_r + grid * model.ci_grid) * model.step_hours / 1000.0
    return grams, migrations


def brute_force_oracle(model: MipModel) -> Schedule:
    V = len(model.vms)
    if V > MAX_VMS or max(model.rmdcs_per_subgraph) > MAX_RMDCS or model.horizon_steps > MAX_STEPS:
        raise ModelError(
            f"instance exceeds oracle bounds ({MAX_VMS} VMs, {MAX_RMDCS} rMDCs, {MAX_STEPS} steps)"
        )
    if V == 0:
        return evaluate(model, [[] for _ in range(model.horizon_steps)], solver="oracle", optimal=True)

    start = (
        tuple(vm.initial_rmdc for vm in model.vms),
        tuple(vm.prior_uptime_steps for vm in model.vms),
        tuple(vm.prior_downtime_steps for vm in model.vms),
    )
    # state -> (carbon, migrations, plan)
    frontier = {start: (0.0, 0, ())}
    cost_cache: dict[tuple, tuple[float, int]] = {}
    for t in range(model.horizon_steps):
        nxt: dict[tuple, tuple[float, int, tuple]] = {}
        for (place, up, down), (carbon, migr, plan) in frontier.items():
            choices = []
            for vm, u in zip(model.vms, up):
                if t < vm.release_step or u >= vm.lifetime_steps:
                    choices.append((None,))
                else:
                    ks = tuple(range(model.rmdcs_per_subgraph[vm.subgraph]))
                    choices.append(ks + (None,) if vm.evictable else ks)
            for action in itertools.product(*choices):
                ck = (t, place, action)
                if ck not in cost_cache:
                    cost_cache[ck] = _step_cost(model, t, place, action)
                grams, moved = cost_cache[ck]
                new_up = tuple(u + (k is not None) for u, k in zip(up, action))
                new_down = tuple(
                    d + (k is None and t >= vm.release_step and u < vm.lifetime_steps)
                    for vm, u, d, k in zip(model.vms, up, down, action)
                )
                state = (action, new_up, new_down)
                cand = (carbon + grams, migr + moved, plan + (action,))
                old = nxt.get(state)
                if old is None or (cand[0], cand[1]) < (old[0], old[1]):
                    nxt[state] = cand
        frontier = nxt

    best = None
    best_key = None
    total = model.avail_history_count + sum(1 for vm in model.vms if vm.evictable)
    for (_, _, down), (carbon, migr, plan) in frontier.items():
        avail = sum(
            vm.lifetime_steps / (vm.lifetime_steps + d) for vm, d in zip(model.vms, down) if vm.evictable
        )
        if total and (model.avail_history_sum + avail) / total < model.avail_target - 1e-12:
            continue
        key = (carbon, -avail, migr)
        if best_key is None or _lex_lt(key, best_key):
            best_key, best = key, plan
    if best is None:
        raise ModelError("no schedule satisfies the availability target")
    return evaluate(model, [list(a) for a in best], solver="oracle", optimal=True)


def _lex_lt(a, b) -> bool:
    if abs(a[0] - b[0]) > 1e-9 * max(1.0, abs(a[0]), abs(b[0])):
        return a[0] < b[0]
    if abs(a[1] - b[1]) > 1e-12:
        return a[1] < b[1]
    return a[2] < b[2]
