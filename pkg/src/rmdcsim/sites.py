"""Rank renewable farms by production stability and pick rMDC sites."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

from .stats import Location, UndefinedCoVError, cov, stable_power
from .traces import Forecast, PowerTrace

ENERGY_KINDS = ("solar", "wind")


@dataclass(frozen=True)
class Site:
    site_id: str
    location: Location
    energy_kind: str
    trace: PowerTrace
    forecast: Forecast | None = None

    def __post_init__(self):
        if self.energy_kind not in ENERGY_KINDS:
            raise ValueError(f"site {self.site_id}: unknown energy kind {self.energy_kind!r}")
        if self.trace.site_id != self.site_id:
            raise ValueError(f"site {self.site_id}: trace belongs to {self.trace.site_id}")
        if self.forecast is not None and self.forecast.site_id != self.site_id:
            raise ValueError(f"site {self.site_id}: forecast belongs to {self.forecast.site_id}")


@dataclass(frozen=True)
class RankedSite:
    site_id: str
    cov: float
    stable_power: float
    undefined: bool = False


def _rank_key(r: RankedSite):
    return (r.undefined, r.cov if not r.undefined else math.inf, -r.stable_power, r.site_id)


def rank_sites(sites: Sequence[Site], window_steps: int | None = None) -> list[RankedSite]:
    """Ascending CoV; ties by larger stable power, then site id.

    Sites whose CoV is undefined (zero mean) go last, flagged.
    """
    ranked = []
    for site in sites:
        samples = site.trace.samples
        w = len(samples) if window_steps is None else window_steps
        if w > len(samples):
            raise ValueError(f"site {site.site_id}: window {w} exceeds trace length {len(samples)}")
        tail = samples[-w:]
        floor = stable_power(tail)
        try:
            ranked.append(RankedSite(site.site_id, cov(tail), floor))
        except UndefinedCoVError:
            ranked.append(RankedSite(site.site_id, math.nan, floor, undefined=True))
    ranked.sort(key=_rank_key)
    return ranked


def select_top(ranked: Sequence[RankedSite], n: int) -> list[str]:
    if n < 0:
        raise ValueError("n must be >= 0")
    if n > len(ranked):
        warnings.warn(f"requested {n} sites but only {len(ranked)} available", stacklevel=2)
    return [r.site_id for r in ranked[:n]]
