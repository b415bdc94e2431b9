"""Power and VM trace ingestion, rescaling, and synthetic generators.

Power-trace CSV: header ``timestamp,normalized_production``; ISO-8601
timestamps at a uniform step; production normalized to [0, 1].

VM-trace CSV: header ``vm_id,arrival,mem_gb,vcpus,power_watts,
predicted_lifetime,actual_lifetime,category``; ``arrival`` and both lifetimes
are in seconds and are quantized to whole steps (arrivals round up).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .stats import cov

DEFAULT_STEP_SECONDS = 3600
DEFAULT_START = "2015-01-01T00:00:00"

POWER_HEADER = ("timestamp", "normalized_production")
VM_HEADER = (
    "vm_id",
    "arrival",
    "mem_gb",
    "vcpus",
    "power_watts",
    "predicted_lifetime",
    "actual_lifetime",
    "category",
)
VM_CATEGORIES = ("regular", "evictable")


class TraceParseError(ValueError):
    def __init__(self, path, row: int, message: str):
        self.path = str(path)
        self.row = row
        super().__init__(f"{path}: row {row}: {message}")


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PowerTrace:
    site_id: str
    step_seconds: float
    samples: np.ndarray
    capacity_watts: float
    start: str = DEFAULT_START

    def __post_init__(self):
        object.__setattr__(self, "samples", _frozen(self.samples))
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise ValueError(f"trace {self.site_id}: samples must be a non-empty 1-D sequence")
        if not self.step_seconds > 0:
            raise ValueError(f"trace {self.site_id}: step_seconds must be > 0")
        if self.capacity_watts < 0:
            raise ValueError(f"trace {self.site_id}: negative capacity")
        if self.samples.min() < 0 or self.samples.max() > self.capacity_watts:
            raise ValueError(f"trace {self.site_id}: samples outside [0, capacity]")

    def __len__(self) -> int:
        return int(self.samples.size)

    def __eq__(self, other):
        if not isinstance(other, PowerTrace):
            return NotImplemented
        return (
            self.site_id == other.site_id
            and self.step_seconds == other.step_seconds
            and self.capacity_watts == other.capacity_watts
            and self.start == other.start
            and np.array_equal(self.samples, other.samples)
        )

    __hash__ = None

    def window(self, start: int, stop: int) -> "PowerTrace":
        return PowerTrace(self.site_id, self.step_seconds, self.samples[start:stop], self.capacity_watts, self.start)


@dataclass(frozen=True)
class Forecast:
    site_id: str
    horizon_steps: int
    predicted: np.ndarray
    error_ratio_bound: float

    def __post_init__(self):
        object.__setattr__(self, "predicted", _frozen(self.predicted))
        if self.predicted.size and self.predicted.min() < 0:
            raise ValueError("negative prediction")
        if not 0.0 <= self.error_ratio_bound <= 1.0:
            raise ValueError("error_ratio_bound must lie in [0, 1]")


@dataclass(frozen=True)
class VmSpec:
    vm_id: str
    arrival_step: int
    mem_gb: float
    vcpus: int
    power_watts: float
    predicted_lifetime_steps: int
    actual_lifetime_steps: int
    category: str = "regular"

    def __post_init__(self):
        if self.category not in VM_CATEGORIES:
            raise ValueError(f"unknown VM category {self.category!r}")
        if not self.mem_gb > 0:
            raise ValueError("mem_gb must be > 0")
        if self.vcpus < 1:
            raise ValueError("vcpus must be >= 1")
        if not self.power_watts > 0:
            raise ValueError("power_watts must be > 0")
        if self.predicted_lifetime_steps < 1 or self.actual_lifetime_steps < 1:
            raise ValueError("lifetimes must be >= 1 step")
        if self.arrival_step < 0:
            raise ValueError("arrival_step must be >= 0")

    @property
    def evictable(self) -> bool:
        return self.category == "evictable"


def _parse_time(text: str) -> datetime:
    return datetime.fromisoformat(text.strip())


def load_power_trace(
    path,
    capacity_watts: float,
    site_id: str | None = None,
) -> PowerTrace:
    """Read a normalized production CSV and scale it to ``capacity_watts``."""
    path = Path(path)
    if site_id is None:
        site_id = path.stem
    times: list[datetime] = []
    values: list[float] = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != POWER_HEADER:
            raise TraceParseError(path, 1, f"expected header {','.join(POWER_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise TraceParseError(path, lineno, f"expected 2 columns, got {len(row)}")
            try:
                ts = _parse_time(row[0])
                value = float(row[1])
            except ValueError as exc:
                raise TraceParseError(path, lineno, str(exc)) from None
            if not 0.0 <= value <= 1.0:
                raise TraceParseError(path, lineno, f"normalized value {value} outside [0, 1]")
            if times and ts <= times[-1]:
                raise TraceParseError(path, lineno, "timestamps not strictly increasing")
            if len(times) >= 2 and ts - times[-1] != times[1] - times[0]:
                raise TraceParseError(path, lineno, "non-uniform timestep")
            times.append(ts)
            values.append(value)
    if not values:
        raise TraceParseError(path, 2, "no samples")
    step = (times[1] - times[0]).total_seconds() if len(times) > 1 else DEFAULT_STEP_SECONDS
    samples = np.asarray(values) * capacity_watts
    return PowerTrace(site_id, step, samples, capacity_watts, times[0].isoformat())


def _normalized_for(sample: float, capacity: float) -> float:
    # pick a neighbour of sample/capacity whose product reproduces sample exactly
    if capacity == 0:
        return 0.0
    guess = sample / capacity
    cands = [guess]
    lo = hi = guess
    for _ in range(4):
        lo = math.nextafter(lo, -math.inf)
        hi = math.nextafter(hi, math.inf)
        cands += [lo, hi]
    for c in cands:
        if 0.0 <= c <= 1.0 and c * capacity == sample:
            return c
    return min(max(guess, 0.0), 1.0)


def write_power_trace(trace: PowerTrace, path) -> None:
    start = _parse_time(trace.start)
    step = timedelta(seconds=trace.step_seconds)
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(POWER_HEADER)
        for i, s in enumerate(trace.samples):
            writer.writerow([(start + i * step).isoformat(), repr(_normalized_for(float(s), trace.capacity_watts))])


def scale_to_rmdc(trace: PowerTrace, rmdc_peak_watts: float) -> PowerTrace:
    if not rmdc_peak_watts > 0:
        raise ValueError("rmdc_peak_watts must be > 0")
    if trace.capacity_watts == 0:
        raise ValueError(f"trace {trace.site_id} has zero capacity; cannot rescale")
    factor = rmdc_peak_watts / trace.capacity_watts
    samples = np.minimum(trace.samples * factor, rmdc_peak_watts)
    return PowerTrace(trace.site_id, trace.step_seconds, samples, rmdc_peak_watts, trace.start)


def inject_error(trace: PowerTrace, ratio: float, seed: int) -> Forecast:
    """Forecast = actual * (1 + u), u ~ U[-ratio, ratio] per step, clamped at 0."""
    if not 0.0 <= ratio <= 1.0:
        raise ValueError("ratio must lie in [0, 1]")
    actual = trace.samples
    if ratio == 0:
        return Forecast(trace.site_id, len(trace), actual.copy(), 0.0)
    rng = np.random.default_rng(seed)
    u = rng.uniform(-ratio, ratio, size=actual.size)
    predicted = np.maximum(actual * (1.0 + u), 0.0)
    return Forecast(trace.site_id, len(trace), predicted, ratio)


def check_aligned(traces: Sequence[PowerTrace]) -> None:
    if not traces:
        return
    step, n = traces[0].step_seconds, len(traces[0])
    for t in traces[1:]:
        if t.step_seconds != step or len(t) != n:
            raise ValueError(
                f"trace {t.site_id} ({len(t)} x {t.step_seconds}s) not aligned with "
                f"{traces[0].site_id} ({n} x {step}s)"
            )


def load_vm_trace(path, step_seconds: float = DEFAULT_STEP_SECONDS) -> list[VmSpec]:
    path = Path(path)
    out: list[VmSpec] = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return out
        if tuple(h.strip() for h in header) != VM_HEADER:
            raise TraceParseError(path, 1, f"expected header {','.join(VM_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(VM_HEADER):
                raise TraceParseError(path, lineno, f"expected {len(VM_HEADER)} columns, got {len(row)}")
            rec = dict(zip(VM_HEADER, (c.strip() for c in row)))
            if rec["category"] not in VM_CATEGORIES:
                raise TraceParseError(path, lineno, f"unknown category {rec['category']!r}")
            try:
                spec = VmSpec(
                    vm_id=rec["vm_id"],
                    arrival_step=math.ceil(float(rec["arrival"]) / step_seconds),
                    mem_gb=float(rec["mem_gb"]),
                    vcpus=int(rec["vcpus"]),
                    power_watts=float(rec["power_watts"]),
                    predicted_lifetime_steps=max(1, math.ceil(float(rec["predicted_lifetime"]) / step_seconds)),
                    actual_lifetime_steps=max(1, math.ceil(float(rec["actual_lifetime"]) / step_seconds)),
                    category=rec["category"],
                )
            except ValueError as exc:
                raise TraceParseError(path, lineno, str(exc)) from None
            out.append(spec)
    return out


def write_vm_trace(vms: Iterable[VmSpec], path, step_seconds: float = DEFAULT_STEP_SECONDS) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(VM_HEADER)
        for vm in vms:
            writer.writerow([
                vm.vm_id,
                vm.arrival_step * step_seconds,
                vm.mem_gb,
                vm.vcpus,
                vm.power_watts,
                vm.predicted_lifetime_steps * step_seconds,
                vm.actual_lifetime_steps * step_seconds,
                vm.category,
            ])


def synth_complementary(
    n_sites: int,
    steps: int,
    peak_watts: float,
    phase: str = "anti-phase",
    period: int = 24,
    step_seconds: float = DEFAULT_STEP_SECONDS,
    prefix: str = "site",
) -> list[PowerTrace]:
    """Synthetic traces with a known aggregate.

    ``anti-phase``: rotating square waves; exactly one site produces
    ``peak_watts`` at each step, so the sum is constant.
    ``offsets`` (alias ``third-offsets``): sinusoids shifted by 2*pi/n; the sum
    is constant up to rounding.
    ``in-phase``: identical sinusoids; the sum is as variable as each site.
    """
    if n_sites < 1:
        raise ValueError("n_sites must be >= 1")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if period < n_sites and phase == "anti-phase":
        raise ValueError("period must be >= n_sites for anti-phase waves")
    t = np.arange(steps)
    out = []
    for i in range(n_sites):
        if phase == "anti-phase":
            slot = ((t % period) * n_sites) // period
            samples = np.where(slot == i, peak_watts, 0.0)
        elif phase in ("offsets", "third-offsets"):
            angle = 2 * np.pi * t / period + 2 * np.pi * i / n_sites
            samples = np.clip(0.5 * peak_watts * (1.0 + np.sin(angle)), 0.0, peak_watts)
        elif phase == "in-phase":
            angle = 2 * np.pi * t / period
            samples = np.clip(0.5 * peak_watts * (1.0 + np.sin(angle)), 0.0, peak_watts)
        else:
            raise ValueError(f"unknown phase pattern {phase!r}")
        out.append(PowerTrace(f"{prefix}{i}", step_seconds, samples, peak_watts))
    return out


def synth_vm_trace(
    n_vms: int,
    seed: int,
    horizon_steps: int,
    evictable_fraction: float = 0.1,
    mean_lifetime_steps: float = 12.0,
    per_core_watts: float = 13.5,
    lifetime_error: float = 0.0,
) -> list[VmSpec]:
    """Random VM workload with Azure-like shape (small VMs, heavy-tailed lifetimes)."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n_vms):
        vcpus = int(rng.choice([1, 2, 4, 8, 16], p=[0.3, 0.3, 0.2, 0.15, 0.05]))
        actual = max(1, int(round(rng.exponential(mean_lifetime_steps))))
        if lifetime_error:
            predicted = max(1, int(round(actual * (1 + rng.uniform(-lifetime_error, lifetime_error)))))
        else:
            predicted = actual
        out.append(VmSpec(
            vm_id=f"vm{i:05d}",
            arrival_step=int(rng.integers(0, max(1, horizon_steps))),
            mem_gb=float(vcpus * 4),
            vcpus=vcpus,
            power_watts=vcpus * per_core_watts,
            predicted_lifetime_steps=predicted,
            actual_lifetime_steps=actual,
            category="evictable" if rng.random() < evictable_fraction else "regular",
        ))
    out.sort(key=lambda v: (v.arrival_step, v.vm_id))
    return out


def trace_cov(trace: PowerTrace) -> float:
    return cov(trace.samples)
