"""Random desk-scale instances for cross-checking solvers."""
from __future__ import annotations

import numpy as np

from .model import EVICTABLE, REGULAR, MipModel, ModelVm
from .oracle import MAX_RMDCS, MAX_STEPS, MAX_VMS


def random_model(rng: np.random.Generator, *, max_vms: int = MAX_VMS, max_rmdcs: int = MAX_RMDCS,
                 max_steps: int = MAX_STEPS) -> MipModel:
    """One subgraph with dyadic powers, supplies and migration draws.

Every energy and carbon term is then a small multiple of 1/8, so any
summation order gives the same float and objectives compare exactly. The
availability target is capped at what prior downtime still allows.
"""
    T = int(rng.integers(1, max_steps + 1))
    K = int(rng.integers(1, max_rmdcs + 1))
    V = int(rng.integers(0, max_vms + 1))
    supply = [[float(x) for x in rng.integers(0, 5, T) * 500] for _ in range(K)]
    vms = []
    for m in range(V):
        evictable = rng.random() < 0.35
        release = int(rng.integers(0, T))
        lifetime = int(rng.integers(1, T + 2))
        prior_up = int(rng.integers(0, lifetime)) if rng.random() < 0.3 else 0
        start_at = None if release > 0 or rng.random() < 0.4 else int(rng.integers(0, K))
        vms.append(ModelVm(
            vm_id=f"vm{m}",
            subgraph=0,
            power_watts=tuple(float(x) for x in rng.integers(1, 5, T) * 250),
            mem_gb=float(rng.choice([0, 4, 8, 16, 64])),
            lifetime_steps=lifetime,
            category=EVICTABLE if evictable else REGULAR,
            prior_uptime_steps=prior_up,
            prior_downtime_steps=int(rng.integers(0, 2)) if evictable else 0,
            initial_rmdc=start_at,
            release_step=release,
        ))
    target = float(rng.choice([0.0, 0.5, 0.75, 0.9]))
    ev = [vm for vm in vms if vm.category == EVICTABLE]
    if ev:
        best = sum(vm.lifetime_steps / (vm.lifetime_steps + vm.prior_downtime_steps) for vm in ev) / len(ev)
        target = min(target, best)
    return MipModel(
        vms=vms,
        rmdcs_per_subgraph=[K],
        supply_watts=[supply],
        ci_renewable=[[float(rng.choice([11, 41])) for _ in range(K)]],
        ci_grid=700.0,
        horizon_steps=T,
        power_migr_wh_per_gb=float(rng.choice([0.0, 7.8125, 31.25])),
        avail_target=target,
        avail_history_sum=0.0,
        avail_history_count=0,
    )
