"""Figure rendering for sweep reports.

Writes PNGs next to the results CSV: absolute makespans per workload and
strategy, and the percentage deltas against the fifo baseline.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from cws.bench import ExperimentRow, baseline_deltas


def render_figures(rows: list[ExperimentRow], csv_path: str | Path, baseline: str = "fifo") -> list[Path]:
    csv_path = Path(csv_path)
    written = []
    makespans: dict[str, dict[str, float]] = {}
    for r in rows:
        if r.makespan_s >= 0:
            makespans.setdefault(r.workload, {}).setdefault(r.strategy, r.makespan_s)
    if not makespans:
        return written

    written.append(_grouped_bars(
        makespans,
        title="Makespan by strategy",
        ylabel="makespan [s]",
        path=csv_path.with_name(csv_path.stem + "_makespan.png"),
    ))
    deltas = baseline_deltas(rows, baseline=baseline)
    delta_data = {
        wl: {s: v for s, v in per.items() if s != baseline}
        for wl, per in deltas.items()
    }
    delta_data = {wl: per for wl, per in delta_data.items() if per}
    if delta_data:
        written.append(_grouped_bars(
            delta_data,
            title=f"Makespan reduction vs {baseline} [%]",
            ylabel="reduction [%]",
            path=csv_path.with_name(csv_path.stem + "_delta_vs_fifo.png"),
        ))
    return written


def _grouped_bars(data: dict[str, dict[str, float]], title: str, ylabel: str, path: Path) -> Path:
    workloads = sorted(data)
    strategies = sorted({s for per in data.values() for s in per})
    fig, ax = plt.subplots(figsize=(max(6.0, 1.8 * len(workloads)), 4.0))
    width = 0.8 / max(len(strategies), 1)
    for si, strategy in enumerate(strategies):
        xs = [wi + si * width for wi in range(len(workloads))]
        ys = [data[wl].get(strategy, 0.0) for wl in workloads]
        ax.bar(xs, ys, width=width, label=strategy)
    ax.set_xticks([wi + 0.4 - width / 2 for wi in range(len(workloads))])
    ax.set_xticklabels(workloads, rotation=15, ha="right")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend(fontsize=8)
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
