"""Report files: deterministic JSON/CSV/JSON-lines plus matplotlib figures."""
from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .accounting import CARBON_LINES  # noqa: E402
from .engine import SimReport  # noqa: E402

# PNG metadata would otherwise carry the matplotlib version string
_PNG_META = {"Software": None}


def write_json(data, path: Path) -> Path:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    return path


def write_csv(rows: Sequence[dict], path: Path, columns: Sequence[str] | None = None) -> Path:
    columns = list(columns or (rows[0].keys() if rows else []))
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({c: _cell(row.get(c)) for c in columns})
    return path


def _cell(v):
    if isinstance(v, float):
        return repr(v)
    return v


def write_events(events: Sequence[dict], path: Path) -> Path:
    with open(path, "w") as fh:
        for ev in events:
            fh.write(json.dumps(ev, sort_keys=True) + "\n")
    return path


def report_json(report: SimReport) -> dict:
    return {
        "summary": report.summary(),
        "carbon_totals_g": report.carbon_totals_g,
        "cost_usd": report.cost_usd,
        "weekly": report.weekly,
        "mis_cases": {str(k): v for k, v in report.mis_cases.items()},
        "evictable_uptime_vacuous": report.evictable_uptime_vacuous,
        "step_seconds": report.step_seconds,
    }


def timeseries_rows(report: SimReport) -> list[dict]:
    rows = []
    for t in range(report.steps):
        row = {"step": t}
        for key, series in report.series.items():
            row[key] = series[t]
        row["carbon_g"] = report.step_carbon_g[t]
        row["cumulative_carbon_g"] = report.cumulative_carbon_g[t]
        rows.append(row)
    return rows


def plot_cumulative(reports: Sequence[SimReport], path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for r in reports:
        days = [(t + 1) * r.step_seconds / 86400 for t in range(r.steps)]
        ax.plot(days, [g / 1e6 for g in r.cumulative_carbon_g], label=r.policy)
    ax.set_xlabel("time (days)")
    ax.set_ylabel("cumulative carbon (tCO2eq)")
    ax.legend(frameon=False, fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)
    return path


def plot_breakdown(reports: Sequence[SimReport], path: Path) -> Path:
    """Stacked carbon lines per policy."""
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    names = [r.policy for r in reports]
    bottom = [0.0] * len(reports)
    for label in CARBON_LINES:
        vals = [r.carbon_totals_g[label] / 1e6 for r in reports]
        ax.bar(names, vals, bottom=bottom, label=label)
        bottom = [b + v for b, v in zip(bottom, vals)]
    ax.set_ylabel("carbon (tCO2eq)")
    ax.legend(frameon=False, fontsize=8)
    ax.tick_params(axis="x", labelrotation=30)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)
    return path


def write_simulation(report: SimReport, out: Path, figures: bool = True) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    files = [
        write_json(report_json(report), out / "report.json"),
        write_csv(timeseries_rows(report), out / "timeseries.csv"),
        write_csv(report.weekly, out / "weekly.csv", ["week", *CARBON_LINES, "total"]),
        write_events(report.events, out / "events.jsonl"),
    ]
    if figures:
        files.append(plot_cumulative([report], out / "cumulative_carbon.png"))
        files.append(plot_breakdown([report], out / "carbon_breakdown.png"))
    return files


def write_manifest(out: Path, files: Sequence[Path], command: str, config: dict) -> Path:
    entries = []
    for f in sorted(files):
        entries.append({
            "path": str(f.relative_to(out)),
            "sha256": hashlib.sha256(f.read_bytes()).hexdigest(),
            "bytes": f.stat().st_size,
        })
    return write_json({"command": command, "config": config, "files": entries}, out / "manifest.json")
