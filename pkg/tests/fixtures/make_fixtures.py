"""Regenerate the checked-in fixtures: python3 tests/fixtures/make_fixtures.py"""
import json
from pathlib import Path

from rmdcsim.traces import PowerTrace, VmSpec, synth_complementary, write_power_trace, write_vm_trace

HERE = Path(__file__).parent

SMALL_RMDC = {"racks": 1, "servers_per_rack": 2, "rack_power_kw": 0.4}


def anti3():
    d = HERE / "anti3"
    d.mkdir(exist_ok=True)
    traces = synth_complementary(3, 72, 300.0, period=3)
    coords = [(40.0, -100.0), (41.0, -101.0), (40.5, -99.0)]
    sites = []
    for tr, (lat, lon) in zip(traces, coords):
        write_power_trace(tr, d / f"{tr.site_id}.csv")
        sites.append({"id": tr.site_id, "lat": lat, "lon": lon, "kind": "wind",
                      "trace": f"{tr.site_id}.csv", "capacity_watts": 300.0})
    vms = [
        VmSpec("vm00", 0, 4.0, 2, 100.0, 60, 60),
        VmSpec("vm01", 0, 4.0, 2, 100.0, 60, 60),
        VmSpec("vm02", 2, 4.0, 2, 50.0, 30, 30, "evictable"),
    ]
    write_vm_trace(vms, d / "vms.csv")
    config = {
        "sites": sites,
        "vm_trace": "vms.csv",
        "k": 3,
        "policy": "skybox_mip",
        "policies": ["skybox_mip", "distr_grid"],
        "power_migr_wh_per_gb": 0.0,
        "rmdc": SMALL_RMDC,
        "seed": 7,
    }
    (d / "config.json").write_text(json.dumps(config, indent=2) + "\n")


def six():
    d = HERE / "six"
    d.mkdir(exist_ok=True)
    west = synth_complementary(3, 48, 300.0, period=3, prefix="w")
    east = synth_complementary(3, 48, 300.0, phase="offsets", period=24, prefix="e")
    coords = {"w0": (40.0, -100.0), "w1": (41.0, -101.0), "w2": (40.5, -99.0),
              "e0": (42.0, -75.0), "e1": (42.5, -76.0), "e2": (41.5, -74.5)}
    sites = []
    for tr in west + east:
        write_power_trace(tr, d / f"{tr.site_id}.csv")
        lat, lon = coords[tr.site_id]
        sites.append({"id": tr.site_id, "lat": lat, "lon": lon, "kind": "solar" if tr.site_id[0] == "e" else "wind",
                      "trace": f"{tr.site_id}.csv", "capacity_watts": 300.0})
    config = {"sites": sites, "k": 3, "max_miles": 500.0, "synthetic_vms": {"n_vms": 8, "seed": 3},
              "rmdc": SMALL_RMDC, "power_migr_wh_per_gb": 0.0}
    (d / "config.json").write_text(json.dumps(config, indent=2) + "\n")


if __name__ == "__main__":
    anti3()
    six()
