import csv
import json
import shutil
import statistics

import pytest

from rmdcsim.cli import EXIT_CONFIG, EXIT_DATA, EXIT_OK, main
from rmdcsim.config import ConfigError, apply_overrides, load_config
from rmdcsim.optimizer.io import model_from_dict


@pytest.fixture
def six(tmp_path, fixtures):
    dst = tmp_path / "six"
    shutil.copytree(fixtures / "six", dst)
    return dst


@pytest.fixture
def anti3(tmp_path, fixtures):
    dst = tmp_path / "anti3"
    shutil.copytree(fixtures / "anti3", dst)
    return dst


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _edit(cfg_dir, **changes):
    path = cfg_dir / "config.json"
    data = json.loads(path.read_text())
    data.update(changes)
    path.write_text(json.dumps(data))
    return path


# config --------------------------------------------------------------------

def test_overrides():
    d = apply_overrides({"battery": {"hours": 1}}, ["battery.hours=2.5", "policy=distr_grid", "seed=4"])
    assert d == {"battery": {"hours": 2.5}, "policy": "distr_grid", "seed": 4}
    with pytest.raises(ConfigError):
        apply_overrides({}, ["novalue"])
    with pytest.raises(ConfigError):
        apply_overrides({}, ['policies=["a"]'])


def test_defaults_and_reidentify_steps(six):
    rc = load_config(six / "config.json")
    cfg = rc.sim_config()
    assert cfg.reidentify_steps == 14 * 24 and cfg.horizon_steps == 3
    assert rc.policies == ["skybox_mip"]


@pytest.mark.parametrize("change", [
    {"colour": "blue"},
    {"k": 1},
    {"policy": "centr_local"},
    {"policies": ["distr_grid", "distr_grid"]},
    {"vm_trace": "missing.csv"},
    {"horizon_steps": 2, "resolve_steps": 3},
])
def test_invalid_configs(six, change):
    _edit(six, **change)
    with pytest.raises(ConfigError):
        load_config(six / "config.json")


def test_constants_roundtrip(six):
    from rmdcsim.accounting import CarbonParams, CostParams

    _edit(six, carbon=CarbonParams().to_dict(), cost=CostParams().to_dict())
    cfg = load_config(six / "config.json").sim_config()
    assert cfg.carbon == CarbonParams() and cfg.cost == CostParams()


# cli -----------------------------------------------------------------------

def test_select_sites(six, tmp_path):
    out = tmp_path / "out"
    assert main(["select-sites", str(six / "config.json"), "--out", str(out)]) == EXIT_OK
    rows = _rows(out / "ranking.csv")
    assert len(rows) == 6
    covs = [float(r["cov"]) for r in rows]
    assert covs == sorted(covs)
    samples = {}
    for r in rows:
        with open(six / f"{r['site_id']}.csv") as fh:
            vals = [float(line.split(",")[1]) for line in fh.readlines()[1:]]
        assert float(r["cov"]) == pytest.approx(statistics.pstdev(vals) / statistics.fmean(vals), rel=1e-9)
    assert main(["select-sites", str(six / "config.json"), "--out", str(out), "--top", "2"]) == EXIT_OK
    assert len(_rows(out / "ranking.csv")) == 2
    assert (out / "manifest.json").exists()


def test_empty_site_list(six, tmp_path):
    _edit(six, sites=[])
    assert main(["select-sites", str(six / "config.json"), "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_subgraphs(six, tmp_path):
    out = tmp_path / "out"
    assert main(["subgraphs", str(six / "config.json"), "--out", str(out)]) == EXIT_OK
    first = (out / "subgraphs.json").read_bytes()
    doc = json.loads(first)
    assert len(doc["subgraphs"]) == 2 and doc["candidates"] == 2
    members = [m for sg in doc["subgraphs"] for m in sg["members"]]
    assert len(members) == len(set(members)) == 6
    assert main(["subgraphs", str(six / "config.json"), "--out", str(out)]) == EXIT_OK
    assert (out / "subgraphs.json").read_bytes() == first
    with pytest.warns(UserWarning):
        assert main(["subgraphs", str(six / "config.json"), "--out", str(out), "--set", "max_miles=0"]) == EXIT_OK
    assert json.loads((out / "subgraphs.json").read_text())["subgraphs"] == []


def test_simulate_outputs(anti3, tmp_path):
    out = tmp_path / "out"
    assert main(["simulate", str(anti3 / "config.json"), "--out", str(out)]) == EXIT_OK
    for name in ("report.json", "timeseries.csv", "weekly.csv", "events.jsonl",
                 "cumulative_carbon.png", "carbon_breakdown.png", "manifest.json"):
        assert (out / name).exists(), name
    assert (out / "cumulative_carbon.png").read_bytes()[:4] == b"\x89PNG"
    report = json.loads((out / "report.json").read_text())
    assert report["summary"]["grid_kwh"] == 0.0
    manifest = json.loads((out / "manifest.json").read_text())
    assert {e["path"] for e in manifest["files"]} >= {"report.json", "events.jsonl"}
    assert manifest["command"] == "simulate"


def test_simulate_missing_trace_is_config_error(anti3, tmp_path):
    (anti3 / "site1.csv").unlink()
    out = tmp_path / "out"
    assert main(["simulate", str(anti3 / "config.json"), "--out", str(out)]) == EXIT_CONFIG
    assert not (out / "report.json").exists()


def test_bad_trace_is_data_error(anti3, tmp_path):
    (anti3 / "site1.csv").write_text("timestamp,normalized_production\n2020-01-01T00:00:00,1.7\n")
    assert main(["simulate", str(anti3 / "config.json"), "--out", str(tmp_path / "o")]) == EXIT_DATA


def test_missing_config(tmp_path):
    assert main(["simulate", str(tmp_path / "nope.json")]) == EXIT_CONFIG


def test_compare(anti3, tmp_path):
    out = tmp_path / "out"
    assert main(["compare", str(anti3 / "config.json"), "--out", str(out), "--jobs", "2"]) == EXIT_OK
    rows = {r["policy"]: r for r in _rows(out / "matrix.csv")}
    assert float(rows["skybox_mip"]["grid_kwh"]) < float(rows["distr_grid"]["grid_kwh"])
    assert (out / "skybox_mip" / "report.json").exists() and (out / "carbon_breakdown.png").exists()
    assert main(["compare", str(anti3 / "config.json"), "--out", str(out), "--policies", "distr_grid",
                 "--no-figures"]) == EXIT_OK
    assert len(_rows(out / "matrix.csv")) == 1
    assert main(["compare", str(anti3 / "config.json"), "--out", str(out),
                 "--policies", "distr_grid", "distr_grid"]) == EXIT_CONFIG


def test_dump_model(anti3, tmp_path):
    out = tmp_path / "out"
    assert main(["dump-model", str(anti3 / "config.json"), "--out", str(out), "--step", "3"]) == EXIT_OK
    (path,) = out.glob("model_step3_group*.json")
    model = model_from_dict(json.loads(path.read_text()))
    assert model.rmdcs_per_subgraph == [3] and len(model.vms) == 3
