import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rmdcsim.accounting import CARBON_LINES
from rmdcsim.config import load_config, load_sites, load_vms
from rmdcsim.engine import BatteryState, Ledger, SimConfig, metrics_finalize, run, step_battery
from rmdcsim.policies import PolicyKind
from rmdcsim.traces import VmSpec

from helpers import make_site


def _fixture(fixtures, name, **over):
    rc = load_config(fixtures / name / "config.json")
    sites = load_sites(rc)
    vms = load_vms(rc, min(len(s.trace) for s in sites))
    return sites, vms, dataclasses.replace(rc.sim_config(), **over)


# battery -------------------------------------------------------------------

def test_battery_examples():
    full = BatteryState(1.0, 1.0)
    assert step_battery(full, 500.0, 3600)[1] == 0.0
    empty = BatteryState(1.0, 0.0)
    assert step_battery(empty, -500.0, 3600)[2] == 0.0
    s, absorbed, _ = step_battery(BatteryState(1.0, 0.0, max_rate_kw=2.0), 2000.0, 3600)
    assert absorbed == 1000.0 and s.charge_kwh == 1.0


def test_battery_validation():
    with pytest.raises(ValueError):
        BatteryState(1.0, 2.0)
    with pytest.raises(ValueError):
        BatteryState(1.0, efficiency=0.0)


@given(st.floats(0, 10), st.floats(0, 1), st.floats(-1e4, 1e4), st.floats(0.1, 5), st.sampled_from([900, 3600]))
def test_battery_conserves_energy(cap, frac, surplus, rate, step):
    b = BatteryState(cap, cap * frac, max_rate_kw=rate)
    s, absorbed, discharged = step_battery(b, surplus, step)
    hours = step / 3600
    assert 0 <= s.charge_kwh <= s.capacity_kwh
    assert absorbed >= 0 and discharged >= 0 and min(absorbed, discharged) == 0
    assert absorbed <= max(surplus, 0) + 1e-9 and discharged <= max(-surplus, 0) + 1e-9
    delta_wh = (s.charge_kwh - b.charge_kwh) * 1000
    assert delta_wh == pytest.approx((absorbed - discharged) * hours, abs=1e-6)


# metrics -------------------------------------------------------------------

def _ledger(steps=3):
    led = Ledger("skybox_mip", 3600.0)
    for label in CARBON_LINES:
        led.carbon_g[label] = [1.0 + i for i in range(steps)]
    led.consumption_wh = led.renewable_wh = led.grid_wh = led.charge_wh = led.discharge_wh = [0.0] * steps
    return led


def test_migration_frequency():
    led = _ledger()
    for i in range(3):
        led.log(i, f"vm{i % 2}", "migrate", src="a", dst="b")
    led.log(0, "vm0", "suspend")
    led.vm_runtime_hours = {"vm0": 100.0, "vm1": 100.0}
    rep = metrics_finalize(led)
    assert rep.migration_frequency == 0.015


def test_vacuous_uptime_and_totals():
    rep = metrics_finalize(_ledger())
    assert rep.evictable_uptime == 1.0 and rep.evictable_uptime_vacuous and rep.evictable_count == 0
    assert rep.carbon_total_g == sum(rep.carbon_totals_g.values())
    assert rep.cumulative_carbon_g == list(np.cumsum(rep.step_carbon_g))


def test_ragged_ledger_rejected():
    led = _ledger()
    led.carbon_g[CARBON_LINES[0]] = [1.0]
    with pytest.raises(ValueError):
        metrics_finalize(led)


# end to end ----------------------------------------------------------------

def _check_report(rep):
    s = rep.series
    for t in range(rep.steps):
        lhs = s["renewable_wh"][t] + s["grid_wh"][t] + s["discharge_wh"][t] - s["charge_wh"][t]
        assert lhs == pytest.approx(s["consumption_wh"][t], abs=1e-6)
    assert all(b >= a for a, b in zip(rep.cumulative_carbon_g, rep.cumulative_carbon_g[1:]))
    acc = 0.0
    for g, c in zip(rep.step_carbon_g, rep.cumulative_carbon_g):
        acc += g
        assert c == acc
    assert sum(w["total"] for w in rep.weekly) == pytest.approx(rep.carbon_total_g, rel=1e-12)


def test_abundant_power():
    site = make_site("solo", [5000.0] * 24)
    vms = [VmSpec("r", 0, 2.0, 2, 27.0, 6, 6), VmSpec("e", 2, 2.0, 1, 13.5, 4, 4, "evictable")]
    rep = run([site], vms, SimConfig(policy="skybox_mip"))
    assert rep.grid_kwh == 0.0 and rep.migration_count == 0 and rep.evictable_uptime == 1.0
    assert not rep.truncated
    _check_report(rep)


def test_truncation_flag():
    site = make_site("solo", [5000.0] * 4)
    rep = run([site], [VmSpec("r", 0, 2.0, 2, 27.0, 10, 10)], SimConfig(policy="distr_grid"))
    assert rep.truncated and rep.unfinished_vms == 1


def test_anti_phase_direction(fixtures):
    sites, vms, cfg = _fixture(fixtures, "anti3")
    sky = run(sites, vms, cfg)
    grid = run(sites, vms, dataclasses.replace(cfg, policy=PolicyKind.DISTR_GRID))
    assert sky.grid_kwh == 0.0 and grid.grid_kwh > 0.0
    assert grid.migration_count == 0 and sky.migration_count > 0
    _check_report(sky)
    _check_report(grid)


@pytest.mark.parametrize("policy", [p.value for p in PolicyKind])
def test_every_policy_with_forecast_error(fixtures, policy):
    sites, vms, cfg = _fixture(fixtures, "six", policy=policy, forecast_error=0.5, max_steps=24)
    rep = run(sites, vms, cfg)
    _check_report(rep)
    assert rep.steps == 24
    if not PolicyKind(policy).migrates:
        assert rep.migration_count == 0
        assert not any(ev["event"] == "migrate" for ev in rep.events)
    if policy == "distr_battery":
        assert rep.battery_discharge_kwh >= 0


def test_deterministic(fixtures):
    sites, vms, cfg = _fixture(fixtures, "six", forecast_error=0.3)
    a, b = run(sites, vms, cfg), run(sites, vms, cfg)
    assert a.summary() == b.summary() and a.events == b.events and a.series == b.series


def test_admission_cap_delays_arrivals(fixtures):
    sites, vms, cfg = _fixture(fixtures, "six", max_steps=12)
    capped = run(sites, vms, dataclasses.replace(cfg, admission_utilization=0.05))
    free = run(sites, vms, cfg)
    assert capped.vm_runtime_hours <= free.vm_runtime_hours


def test_sim_config_validation():
    with pytest.raises(ValueError):
        SimConfig(horizon_steps=0)
    with pytest.raises(ValueError):
        SimConfig(resolve_steps=4, horizon_steps=3)
    with pytest.raises(ValueError):
        SimConfig(policy="nope")
    with pytest.raises(ValueError):
        SimConfig(admission_utilization=1.5)
