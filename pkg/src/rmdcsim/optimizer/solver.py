"""Exact depth-first branch-and-bound over placement binaries.

Decisions are taken step-major, VM-minor. Continuous grid/renewable draws
follow analytically once a step's placements are fixed, so the only bound
needed is a carbon lower bound: cost of completed steps, plus the current and
future steps with the still-undecided mandatory (regular) demand spread over
each subgraph's renewable headroom as if VMs were divisible. Splitting demand
across cells never lowers grid draw, so the bound is valid.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

from .model import (
    OBJECTIVE_CARBON,
    MipModel,
    Schedule,
    avail_ratio,
    carbon_close,
    evaluate,
    lex_better,
    plan_of,
)


class NoSolutionError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolveLimits:
    max_nodes: int = 500_000
    time_limit_s: float | None = None


class _Budget(Exception):
    pass


def _fill_cost(rooms: list[tuple[float, float]], demand: float, ci_grid: float) -> float:
    """Cheapest way to serve divisible ``demand`` given (ci_renewable, room) pairs; energy-free units."""
    cost = 0.0
    for ci, room in sorted(rooms):
        if demand <= 0:
            break
        take = min(room, demand)
        cost += take * ci
        demand -= take
    if demand > 0:
        cost += demand * ci_grid
    return cost


class _Search:
    def __init__(self, model: MipModel, limits: SolveLimits):
        self.model = model
        self.limits = limits
        self.T = model.horizon_steps
        self.vms = model.vms
        self.V = len(model.vms)
        self.kwh = model.step_hours / 1000.0
        self.ci_grid = model.ci_grid
        self.ci_r = [
            [ci if model.objective == OBJECTIVE_CARBON else 0.0 for ci in row] for row in model.ci_renewable
        ]
        self.mig_w = [model.migration_watts(vm) for vm in self.vms]
        self.n_ev = sum(1 for vm in self.vms if vm.evictable)
        self.nodes = 0
        self.started = time.monotonic()
        self.best_key = None
        self.best_plan = None

        # mandatory regular demand per (subgraph, step)
        self.forced = [[0.0] * self.T for _ in model.rmdcs_per_subgraph]
        self.forced_vm = [[False] * self.T for _ in self.vms]
        for m, vm in enumerate(self.vms):
            if vm.evictable:
                continue
            for t in range(vm.release_step, min(self.T, vm.release_step + vm.remaining_steps)):
                self.forced[vm.subgraph][t] += vm.power_watts[t]
                self.forced_vm[m][t] = True
        # carbon lower bound of steps t..T-1 with nothing decided yet
        self.future_lb = [0.0] * (self.T + 1)
        for t in range(self.T - 1, -1, -1):
            step = 0.0
            for n, kn in enumerate(model.rmdcs_per_subgraph):
                rooms = [(self.ci_r[n][k], model.supply_watts[n][k][t]) for k in range(kn)]
                step += _fill_cost(rooms, self.forced[n][t], self.ci_grid) * self.kwh
            self.future_lb[t] = self.future_lb[t + 1] + step

    # ------------------------------------------------------------------

    def step_lb(self, t: int, cons, pending) -> float:
        model = self.model
        total = 0.0
        for n, kn in enumerate(model.rmdcs_per_subgraph):
            rooms = []
            for k in range(kn):
                c = cons[n][k]
                s = model.supply_watts[n][k][t]
                ru = min(c, s)
                total += ru * self.ci_r[n][k] + (c - ru) * self.ci_grid
                rooms.append((self.ci_r[n][k], s - ru))
            total += _fill_cost(rooms, pending[n], self.ci_grid)
        return total * self.kwh

    def avail_ub(self, down) -> float:
        return sum(
            avail_ratio(vm.lifetime_steps, down[m]) for m, vm in enumerate(self.vms) if vm.evictable
        )

    def cannot_improve(self, carbon_lb: float, avail_ub: float, migr: int) -> bool:
        model = self.model
        total = model.avail_history_count + self.n_ev
        if total and (model.avail_history_sum + avail_ub) / total < model.avail_target - 1e-12:
            return True
        b = self.best_key
        if b is None:
            return False
        if carbon_close(carbon_lb, b[0]):
            if abs(avail_ub + b[1]) > 1e-12:
                return -avail_ub > b[1]
            return migr >= b[2]
        return carbon_lb > b[0]

    def tick(self):
        self.nodes += 1
        if self.nodes > self.limits.max_nodes:
            raise _Budget
        if self.limits.time_limit_s is not None and self.nodes % 256 == 0:
            if time.monotonic() - self.started > self.limits.time_limit_s:
                raise _Budget

    # ------------------------------------------------------------------

    def run(self):
        model = self.model
        cons = [[0.0] * kn for kn in model.rmdcs_per_subgraph]
        pending = [self.forced[n][0] for n in range(len(model.rmdcs_per_subgraph))]
        prev = [vm.initial_rmdc for vm in self.vms]
        up = [vm.prior_uptime_steps for vm in self.vms]
        down = [vm.prior_downtime_steps for vm in self.vms]
        plan = [[None] * self.V for _ in range(self.T)]
        self.state = (cons, pending, prev, up, down, plan)
        self._dfs(0, 0, 0.0, 0)

    def _order(self, t: int, m: int, opts, cons):
        """Stay put first, then rMDCs by descending headroom, switching off last."""
        vm = self.vms[m]
        n = vm.subgraph
        prev = self.state[2][m]

        def key(k):
            if k is None:
                return (2, 0.0, 0)
            head = self.model.supply_watts[n][k][t] - cons[n][k]
            return (0 if k == prev else 1, -head, k)

        return sorted(opts, key=key)

    def _dfs(self, t: int, m: int, carbon: float, migr: int):
        cons, pending, prev, up, down, plan = self.state
        model = self.model
        if m == self.V:
            step = 0.0
            for n, kn in enumerate(model.rmdcs_per_subgraph):
                for k in range(kn):
                    step += self._cell(n, k, t, cons[n][k])
            carbon2 = carbon + step
            if t + 1 == self.T:
                key = (carbon2, -self.avail_ub(down), migr)
                total = model.avail_history_count + self.n_ev
                feasible = not total or (model.avail_history_sum - key[1]) / total >= model.avail_target - 1e-12
                if feasible and lex_better(key, self.best_key):
                    self.best_key = key
                    self.best_plan = [row[:] for row in plan]
                return
            saved = [row[:] for row in cons]
            saved_pending = pending[:]
            for row in cons:
                for k in range(len(row)):
                    row[k] = 0.0
            for n in range(len(pending)):
                pending[n] = self.forced[n][t + 1]
            if not self.cannot_improve(carbon2 + self.future_lb[t + 1], self.avail_ub(down), migr):
                self._dfs(t + 1, 0, carbon2, migr)
            for n, row in enumerate(saved):
                cons[n][:] = row
            pending[:] = saved_pending
            return

        vm = self.vms[m]
        n = vm.subgraph
        done = up[m] >= vm.lifetime_steps
        opts = model.options(vm, t, done)
        forced_here = self.forced_vm[m][t]
        if forced_here:
            pending[n] -= vm.power_watts[t]
        p_prev, u_prev, d_prev = prev[m], up[m], down[m]
        for k in self._order(t, m, opts, cons) if len(opts) > 1 else opts:
            self.tick()
            extra_migr = 0
            if k is not None:
                cons[n][k] += vm.power_watts[t]
                if p_prev is not None and p_prev != k:
                    extra_migr = 1
                    cons[n][p_prev] += self.mig_w[m]
                    cons[n][k] += self.mig_w[m]
                up[m] = u_prev + 1
            elif not done and t >= vm.release_step:
                down[m] = d_prev + 1
            prev[m] = k
            plan[t][m] = k
            lb = carbon + self.step_lb(t, cons, pending) + self.future_lb[t + 1]
            if not self.cannot_improve(lb, self.avail_ub(down), migr + extra_migr):
                self._dfs(t, m + 1, carbon, migr + extra_migr)
            if k is not None:
                cons[n][k] -= vm.power_watts[t]
                if extra_migr:
                    cons[n][p_prev] -= self.mig_w[m]
                    cons[n][k] -= self.mig_w[m]
            prev[m], up[m], down[m] = p_prev, u_prev, d_prev
            plan[t][m] = None
        if forced_here:
            pending[n] += vm.power_watts[t]

    def _cell(self, n: int, k: int, t: int, c: float) -> float:
        s = self.model.supply_watts[n][k][t]
        ru = min(c, s)
        return (ru * self.ci_r[n][k] + (c - ru) * self.ci_grid) * self.kwh


def solve(
    model: MipModel,
    limits: SolveLimits = SolveLimits(),
    warm_start: Schedule | None = None,
) -> Schedule:
    """Lexicographic optimum: min carbon, then max evictable uptime, then fewest migrations.

    A best-effort schedule seeds the incumbent unless ``warm_start`` is given.
    When the node/time budget runs out the incumbent is returned with
    ``optimal=False``.
    """
    search = _Search(model, limits)
    if warm_start is None:
        from ..policies import best_effort_plan

        warm_start = best_effort_plan(model)
    if warm_start is not None:
        from .feasibility import check_feasible

        if check_feasible(model, warm_start) is None:
            search.best_key = warm_start.key()
            search.best_plan = plan_of(model, warm_start)
    exhausted = False
    try:
        search.run()
    except _Budget:
        exhausted = True
    if search.best_plan is None:
        raise NoSolutionError(f"no feasible schedule found within {search.nodes} nodes")
    # keep float rounding of the incremental search out of the reported objective
    return evaluate(model, search.best_plan, solver="bnb", optimal=not exhausted, nodes=search.nodes)
