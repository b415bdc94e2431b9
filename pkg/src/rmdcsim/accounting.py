"""Carbon and amortized monetary cost ledgers."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields

HOURS_PER_YEAR = 8760.0

# report line labels
EMB_SERVER = "Emb-Server"
EMB_BATTERY = "Emb-Battery"
EMB_COOLING = "Emb-Cooling"
OP_RENEWABLE = "Op-Renewable"
OP_GRID = "Op-Grid"
CARBON_LINES = (EMB_SERVER, EMB_BATTERY, EMB_COOLING, OP_RENEWABLE, OP_GRID)

COST_LINES = ("servers", "battery", "transmission", "construction")


class _Params:
    @classmethod
    def from_dict(cls, data: dict | None):
        data = dict(data or {})
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"{type(self).__name__}.{f.name} must be >= 0")


@dataclass(frozen=True)
class CarbonParams(_Params):
    intensity_solar: float = 41.0  # gCO2eq/kWh
    intensity_wind: float = 11.0
    intensity_brown: float = 700.0
    embodied_server: float = 591.0  # kgCO2eq per server
    server_lifetime_years: float = 4.0
    embodied_battery: float = 146.0  # kgCO2eq per kWh
    battery_lifetime_years: float = 10.0
    embodied_cooling: float = 50.0  # kgCO2eq per m2
    cooling_lifetime_years: float = 20.0

    def intensity(self, source: str) -> float:
        try:
            return {"solar": self.intensity_solar, "wind": self.intensity_wind, "brown": self.intensity_brown}[source]
        except KeyError:
            raise ValueError(f"unknown energy source {source!r}") from None


@dataclass(frozen=True)
class CostParams(_Params):
    server_usd: float = 3000.0
    server_lifetime_years: float = 4.0
    battery_usd_per_kwh: float = 1250.0
    battery_lifetime_years: float = 10.0
    transmission_usd_per_km: float = 300_000.0
    transmission_lifetime_years: float = 20.0
    construction_usd_per_watt: float = 10.0
    construction_lifetime_years: float = 20.0


@dataclass(frozen=True)
class RmdcConfig(_Params):
    racks: int = 10
    servers_per_rack: int = 15
    cores_per_server: int = 16
    per_core_watts: float = 13.5
    rack_power_kw: float = 150.0  # all server racks of one module together
    cooling_kw: float = 35.0
    battery_backup_minutes: float = 15.0
    footprint_rack_m2: float = 20.6
    footprint_cooling_m2: float = 5.8
    footprint_battery_m2: float = 5.8
    grid_line_km: float = 0.5  # hookup line per co-located module

    @property
    def servers(self) -> int:
        return self.racks * self.servers_per_rack

    @property
    def peak_server_watts(self) -> float:
        return self.rack_power_kw * 1000.0

    @property
    def per_server_watts(self) -> float:
        return self.peak_server_watts / self.servers

    @property
    def backup_battery_kwh(self) -> float:
        return self.rack_power_kw * self.battery_backup_minutes / 60.0

    def inventory(self, extra_battery_kwh: float = 0.0) -> "Inventory":
        return Inventory(
            servers=self.servers,
            battery_kwh=self.backup_battery_kwh + extra_battery_kwh,
            cooling_m2=self.footprint_cooling_m2,
            transmission_km=self.grid_line_km,
            construction_watts=self.peak_server_watts,
        )


@dataclass(frozen=True)
class Inventory:
    """Physical assets that embodied carbon and cost are amortized over."""

    servers: float = 0.0
    battery_kwh: float = 0.0
    cooling_m2: float = 0.0
    transmission_km: float = 0.0
    construction_watts: float = 0.0

    def __add__(self, other: "Inventory") -> "Inventory":
        return Inventory(*(getattr(self, f.name) + getattr(other, f.name) for f in fields(self)))


def _as_inventory(item) -> Inventory:
    return item.inventory() if isinstance(item, RmdcConfig) else item


def operational_carbon(energy_kwh: float, source: str, params: CarbonParams = CarbonParams()) -> float:
    """Grams CO2eq for ``energy_kwh`` drawn from ``source``."""
    if energy_kwh < 0:
        raise ValueError("energy must be >= 0")
    return energy_kwh * params.intensity(source)


def embodied_breakdown(item, params: CarbonParams, duration_hours: float) -> dict[str, float]:
    inv = _as_inventory(item)
    if duration_hours < 0:
        raise ValueError("duration must be >= 0")

    def amortize(total_kg: float, years: float) -> float:
        return total_kg * 1000.0 / (years * HOURS_PER_YEAR) * duration_hours

    return {
        EMB_SERVER: amortize(inv.servers * params.embodied_server, params.server_lifetime_years),
        EMB_BATTERY: amortize(inv.battery_kwh * params.embodied_battery, params.battery_lifetime_years),
        EMB_COOLING: amortize(inv.cooling_m2 * params.embodied_cooling, params.cooling_lifetime_years),
    }


def embodied_carbon_amortized(item, params: CarbonParams, duration_hours: float) -> float:
    return sum(embodied_breakdown(item, params, duration_hours).values())


def amortized_cost(item, params: CostParams, duration_years: float) -> dict[str, float]:
    inv = _as_inventory(item)
    if duration_years < 0:
        raise ValueError("duration must be >= 0")
    out = {
        "servers": inv.servers * params.server_usd / params.server_lifetime_years * duration_years,
        "battery": inv.battery_kwh * params.battery_usd_per_kwh / params.battery_lifetime_years * duration_years,
        "transmission": inv.transmission_km * params.transmission_usd_per_km
        / params.transmission_lifetime_years * duration_years,
        "construction": inv.construction_watts * params.construction_usd_per_watt
        / params.construction_lifetime_years * duration_years,
    }
    out["total"] = sum(out[k] for k in COST_LINES)
    return out


def migration_energy_wh(mem_gb: float, power_migr_wh_per_gb: float) -> float:
    if mem_gb < 0 or power_migr_wh_per_gb < 0:
        raise ValueError("arguments must be >= 0")
    return mem_gb * power_migr_wh_per_gb
