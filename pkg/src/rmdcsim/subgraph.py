"""Enumerate, rank and select groups of sites with complementary production."""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .sites import Site
from .stats import distance_matrix

DEFAULT_K = 3
DEFAULT_MAX_MILES = 500.0
DEFAULT_REIDENTIFY_DAYS = 14
_BATCH = 4096


@dataclass(frozen=True)
class Subgraph:
    member_ids: tuple[str, ...]
    agg_cov: float
    min_agg_power_watts: float
    max_pairwise_miles: float

    @property
    def k(self) -> int:
        return len(self.member_ids)

    def to_dict(self) -> dict:
        return {
            "members": list(self.member_ids),
            "agg_cov": self.agg_cov,
            "min_agg_power_watts": self.min_agg_power_watts,
            "max_pairwise_miles": self.max_pairwise_miles,
        }


def _score_batch(samples: np.ndarray, combos: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    agg = samples[combos].sum(axis=1)
    mean = agg.mean(axis=1)
    std = agg.std(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        cv = np.where(mean > 0, std / np.where(mean > 0, mean, 1.0), np.inf)
    return cv, agg.min(axis=1)


def enumerate_candidates(
    sites: Sequence[Site],
    k: int = DEFAULT_K,
    max_miles: float = DEFAULT_MAX_MILES,
    window_steps: int | None = None,
    workers: int = 1,
) -> list[Subgraph]:
    """All k-combinations within the distance bound, scored on the summed trace.

    Output follows lexicographic order of (sorted) member ids. A zero-mean
    aggregate scores ``agg_cov = inf``.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    if len(sites) < k:
        raise ValueError(f"need at least k={k} sites, got {len(sites)}")
    ordered = sorted(sites, key=lambda s: s.site_id)
    ids = [s.site_id for s in ordered]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate site ids")
    dist = distance_matrix([s.location for s in ordered])
    samples = np.stack([s.trace.samples for s in ordered])
    if window_steps is not None:
        samples = samples[:, -window_steps:]

    combos = []
    spans = []
    for combo in itertools.combinations(range(len(ordered)), k):
        span = max(dist[i, j] for i, j in itertools.combinations(combo, 2))
        if span <= max_miles:
            combos.append(combo)
            spans.append(span)
    if not combos:
        return []
    idx = np.asarray(combos, dtype=np.intp)
    batches = [idx[i:i + _BATCH] for i in range(0, len(idx), _BATCH)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            scored = list(pool.map(lambda b: _score_batch(samples, b), batches))
    else:
        scored = [_score_batch(samples, b) for b in batches]
    cvs = np.concatenate([s[0] for s in scored])
    floors = np.concatenate([s[1] for s in scored])
    return [
        Subgraph(tuple(ids[i] for i in combo), float(cv), float(fl), float(span))
        for combo, cv, fl, span in zip(combos, cvs, floors, spans)
    ]


def rank_key(sg: Subgraph):
    return (sg.agg_cov, -sg.min_agg_power_watts, sg.member_ids)


def rank_candidates(candidates: Sequence[Subgraph]) -> list[Subgraph]:
    return sorted(candidates, key=rank_key)


def select_disjoint(ranked: Sequence[Subgraph]) -> list[Subgraph]:
    taken: set[str] = set()
    out = []
    for sg in ranked:
        if taken.isdisjoint(sg.member_ids):
            out.append(sg)
            taken.update(sg.member_ids)
    return out


def identify(
    sites: Sequence[Site],
    k: int = DEFAULT_K,
    max_miles: float = DEFAULT_MAX_MILES,
    window_steps: int | None = None,
) -> list[Subgraph]:
    if len(sites) < k:
        return []
    return select_disjoint(rank_candidates(enumerate_candidates(sites, k, max_miles, window_steps)))


def membership(subgraphs: Sequence[Subgraph]) -> dict[str, tuple[str, ...]]:
    return {sid: sg.member_ids for sg in subgraphs for sid in sg.member_ids}


def reidentify(
    sites: Sequence[Site],
    current: Sequence[Subgraph],
    k: int = DEFAULT_K,
    max_miles: float = DEFAULT_MAX_MILES,
    window_steps: int | None = None,
) -> tuple[list[Subgraph], list[str]]:
    """Re-run selection over the trailing window and report sites whose group changed."""
    new = identify(sites, k, max_miles, window_steps)
    before, after = membership(current), membership(new)
    everyone = set(before) | set(after) | {s.site_id for s in sites}
    changed = sorted(sid for sid in everyone if before.get(sid) != after.get(sid))
    return new, changed


def complementary_window(
    agg_series: Sequence[float],
    cov_threshold: float = 0.4,
    min_steps: int = 168,
) -> list[tuple[int, int]]:
    """Maximal spans in which every ``min_steps``-long window has CoV below the threshold."""
    arr = np.asarray(agg_series, dtype=float)
    n = arr.size
    if min_steps < 1:
        raise ValueError("min_steps must be >= 1")
    if min_steps > n:
        return []
    windows = np.lib.stride_tricks.sliding_window_view(arr, min_steps)
    mean = windows.mean(axis=1)
    std = windows.std(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        rolling = np.where(mean > 0, std / np.where(mean > 0, mean, 1.0), math.inf)
    good = rolling < cov_threshold
    spans = []
    i = 0
    while i < good.size:
        if not good[i]:
            i += 1
            continue
        j = i
        while j + 1 < good.size and good[j + 1]:
            j += 1
        spans.append((i, j - i + min_steps))
        i = j + 1
    return spans
