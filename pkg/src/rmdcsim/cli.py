"""Command line: site ranking, subgraph search, simulation, policy comparison, model export."""
from __future__ import annotations

import argparse
import logging
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import engine, report
from .config import ConfigError, DataError, RunConfig, load_config, load_sites, load_vms
from .optimizer.io import model_to_dict
from .sites import rank_sites, select_top
from .subgraph import enumerate_candidates, rank_candidates, select_disjoint

EXIT_OK = 0
EXIT_CONFIG = 3
EXIT_DATA = 4
EXIT_RUNTIME = 5

log = logging.getLogger("rmdcsim")


def _out_dir(args, rc: RunConfig) -> Path:
    out = Path(args.out or rc.data.get("out") or "out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _selected_sites(rc: RunConfig):
    sites = load_sites(rc)
    if not sites:
        raise ConfigError("site list is empty")
    top = rc.data.get("top_sites")
    if top:
        keep = set(select_top(rank_sites(sites), top))
        sites = [s for s in sites if s.site_id in keep]
    return sites


def cmd_select_sites(args, rc: RunConfig) -> list[Path]:
    sites = load_sites(rc)
    if not sites:
        raise ConfigError("site list is empty")
    ranked = rank_sites(sites)
    n = args.top if args.top is not None else len(ranked)
    keep = select_top(ranked, n)
    rows = [
        {"rank": i + 1, "site_id": r.site_id, "cov": r.cov, "stable_power_watts": r.stable_power,
         "undefined_cov": r.undefined}
        for i, r in enumerate(ranked[:len(keep)])
    ]
    out = _out_dir(args, rc)
    return [report.write_csv(rows, out / "ranking.csv",
                             ["rank", "site_id", "cov", "stable_power_watts", "undefined_cov"])]


def cmd_subgraphs(args, rc: RunConfig) -> list[Path]:
    sites = _selected_sites(rc)
    k, max_miles = rc.data["k"], rc.data["max_miles"]
    candidates = enumerate_candidates(sites, k, max_miles) if len(sites) >= k else []
    chosen = select_disjoint(rank_candidates(candidates))
    if not chosen:
        warnings.warn(f"no subgraph of {k} sites within {max_miles} miles", stacklevel=1)
    out = _out_dir(args, rc)
    doc = {"k": k, "max_miles": max_miles, "candidates": len(candidates),
           "subgraphs": [sg.to_dict() for sg in chosen]}
    return [report.write_json(doc, out / "subgraphs.json")]


def _simulate(rc: RunConfig, policy: str) -> engine.SimReport:
    sites = _selected_sites(rc)
    steps = min(len(s.trace) for s in sites)
    return engine.run(sites, load_vms(rc, steps), rc.sim_config(policy))


def cmd_simulate(args, rc: RunConfig) -> list[Path]:
    policy = args.policy or rc.data["policy"]
    rep = _simulate(rc, policy)
    out = _out_dir(args, rc)
    log.info("%s: %.1f kg CO2eq, %.3f kWh grid, %d migrations", policy, rep.carbon_total_g / 1000,
             rep.grid_kwh, rep.migration_count)
    return report.write_simulation(rep, out, figures=not args.no_figures)


def _simulate_job(job):
    rc, policy = job
    return _simulate(rc, policy)


def cmd_compare(args, rc: RunConfig) -> list[Path]:
    policies = args.policies or rc.policies
    if len(set(policies)) != len(policies):
        raise ConfigError(f"duplicate policies: {policies}")
    jobs = [(rc, p) for p in policies]
    workers = min(len(jobs), args.jobs or os.cpu_count() or 1)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(_simulate_job, jobs))
    else:
        reports = [_simulate_job(j) for j in jobs]
    out = _out_dir(args, rc)
    files = []
    for rep in reports:
        files += report.write_simulation(rep, out / rep.policy, figures=False)
    rows = [rep.summary() for rep in reports]
    files.append(report.write_csv(rows, out / "matrix.csv"))
    if not args.no_figures:
        files.append(report.plot_cumulative(reports, out / "cumulative_carbon.png"))
        files.append(report.plot_breakdown(reports, out / "carbon_breakdown.png"))
    return files


def cmd_dump_model(args, rc: RunConfig) -> list[Path]:
    sites = _selected_sites(rc)
    steps = min(len(s.trace) for s in sites)
    models = engine.planning_models(sites, load_vms(rc, steps), rc.sim_config(), step=args.step)
    out = _out_dir(args, rc)
    files = []
    for i, model in enumerate(models):
        files.append(report.write_json(model_to_dict(model), out / f"model_step{args.step}_group{i}.json"))
    if not models:
        log.warning("no active VMs at step %d; nothing to dump", args.step)
    return files


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rmdcsim", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("config", help="run configuration (JSON)")
        sp.add_argument("--out", help="output directory (default: config 'out' or ./out)")
        sp.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a scalar config key; dotted keys reach into sections")
        sp.set_defaults(func=func)
        return sp

    sp = add("select-sites", cmd_select_sites, "rank sites by production stability")
    sp.add_argument("--top", type=int, help="keep only the N stablest sites")
    add("subgraphs", cmd_subgraphs, "pick disjoint complementary site groups")
    sp = add("simulate", cmd_simulate, "replay one policy")
    sp.add_argument("--policy", help="override the configured policy")
    sp.add_argument("--no-figures", action="store_true")
    sp = add("compare", cmd_compare, "replay several policies and tabulate metrics")
    sp.add_argument("--policies", nargs="+", help="policies to compare (default: config 'policies')")
    sp.add_argument("--jobs", type=int, help="parallel simulations (default: CPU count)")
    sp.add_argument("--no-figures", action="store_true")
    sp = add("dump-model", cmd_dump_model, "write the placement models for an external solver")
    sp.add_argument("--step", type=int, default=0)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        rc = load_config(args.config, args.overrides)
        if getattr(args, "top", None) is not None and args.top < 0:
            raise ConfigError("--top must be >= 0")
        files = args.func(args, rc)
        out = _out_dir(args, rc)
        files.append(report.write_manifest(out, files, args.command, rc.data))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        log.debug("runtime failure", exc_info=True)
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for f in files:
        print(f)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
