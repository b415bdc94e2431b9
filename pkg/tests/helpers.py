import numpy as np

from rmdcsim.sites import Site
from rmdcsim.stats import Location
from rmdcsim.traces import PowerTrace


def make_site(site_id, samples, lat=40.0, lon=-100.0, kind="wind", step=3600):
    samples = np.asarray(samples, dtype=float)
    cap = float(max(samples.max(), 1.0))
    return Site(site_id, Location(lat, lon), kind, PowerTrace(site_id, step, samples, cap))


def square(n, period=2, hi=1.0, lo=0.0, shift=0):
    return np.array([hi if ((i + shift) // (period // 2 or 1)) % 2 == 0 else lo for i in range(n)])


def random_deficit_step(rng, max_rmdcs=4, max_vms=10, error=0.5):
    """A subgraph whose actual supply misses a load-matched forecast by up to ``error``."""
    from rmdcsim.misprediction import LiveVm, SubgraphState
    from rmdcsim.uptime import UptimeBook

    K = int(rng.integers(1, max_rmdcs + 1))
    vms = []
    for i in range(int(rng.integers(0, max_vms + 1))):
        vms.append(LiveVm(f"v{i}", float(rng.uniform(10, 200)), float(rng.choice([1, 4, 16])),
                          bool(rng.random() < 0.4), int(rng.integers(0, K))))
    load = [sum(v.power_watts for v in vms if v.rmdc == k) for k in range(K)]
    forecast = [max(0.0, x * rng.uniform(0.5, 1.5)) for x in load]
    actual = [f * (1 + rng.uniform(-error, error)) for f in forecast]
    planned_grid = [max(0.0, c - f) for c, f in zip(load, forecast)]
    book = UptimeBook(floor=0.9, history_sum=float(rng.integers(0, 20)), history_count=0)
    book.history_count = int(book.history_sum) + int(rng.integers(0, 3))
    for v in vms:
        if v.evictable:
            book.add(v.vm_id, int(rng.integers(1, 30)), int(rng.integers(0, 3)))
    state = SubgraphState(actual, planned_grid, vms, float(rng.choice([0.0, 0.5, 2.0])))
    return state, book


def handler_problems(state, book, acts):
    """Invariant and stage-order checks after ``handle_subgraph``."""
    from rmdcsim.misprediction import audit_stage_order

    problems = list(audit_stage_order(acts.events))
    K = len(state.renewable_watts)
    for k in range(K):
        if state.consumption(k) > state.supply(k) + 1e-6:
            problems.append(f"rMDC {k}: consumption {state.consumption(k)} > supply {state.supply(k)}")
    for ev in acts.events:
        if ev["action"] != "grid":
            continue
        k = ev["rmdc"]
        for v in state.vms:
            mig_w = v.mem_gb * state.migration_watts_per_gb
            if v.rmdc != k or not v.movable or v.power_watts <= mig_w:
                continue
            room = [j for j in range(K) if j != k and state.surplus(j) >= v.power_watts + mig_w + 1e-9]
            if room:
                problems.append(f"rMDC {k}: grid used while {v.vm_id} fits on rMDC {room[0]}")
        if any(v.rmdc == k and v.evictable and v.vm_id in book.entries and book.can_suspend(v.vm_id)
               for v in state.vms):
            problems.append(f"rMDC {k}: grid used while an evictable could still be suspended")
    return problems
