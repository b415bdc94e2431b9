"""Evictable-VM availability bookkeeping shared by suspension decisions."""
from __future__ import annotations

from dataclasses import dataclass, field

DEFAULT_FLOOR = 0.9


@dataclass
class UptimeBook:
    """Per-VM (lifetime, downtime) in steps; availability = L / (L + D)."""

    floor: float = DEFAULT_FLOOR
    entries: dict[str, list[int]] = field(default_factory=dict)
    history_sum: float = 0.0
    history_count: int = 0

    def add(self, vm_id: str, lifetime: int, downtime: int = 0) -> None:
        self.entries[vm_id] = [lifetime, downtime]

    def close(self, vm_id: str) -> float:
        """Move a finished VM into the history and return its availability."""
        lifetime, downtime = self.entries.pop(vm_id)
        a = lifetime / (lifetime + downtime)
        self.history_sum += a
        self.history_count += 1
        return a

    def _sum(self) -> float:
        return sum(l / (l + d) for l, d in self.entries.values())

    def mean(self) -> float:
        total = self.history_count + len(self.entries)
        if total == 0:
            return 1.0
        return (self.history_sum + self._sum()) / total

    def can_suspend(self, vm_id: str) -> bool:
        """True when one more step of downtime for ``vm_id`` keeps the mean at or above the floor."""
        lifetime, downtime = self.entries[vm_id]
        total = self.history_count + len(self.entries)
        s = self.history_sum + self._sum() - lifetime / (lifetime + downtime) + lifetime / (lifetime + downtime + 1)
        return s / total >= self.floor - 1e-12

    def suspend(self, vm_id: str) -> None:
        self.entries[vm_id][1] += 1

    def copy(self) -> "UptimeBook":
        return UptimeBook(self.floor, {k: v[:] for k, v in self.entries.items()}, self.history_sum, self.history_count)
