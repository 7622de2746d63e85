"""Experiment harness: strategy sweeps, result table, CSV round-trip.

One row per (workload, strategy, seed). A failing cell is recorded, not
fatal: the sweep continues and the row carries the failure count. The
printed comparison shows per-workload percentage deltas against the
fifo baseline (the stand-in for a workflow-blind resource manager, not
claimed identical to any real one).
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

from cws.cluster import ClusterDef
from cws.config import CwsConfig
from cws.errors import CwsError
from cws.sim import run_simulation
from cws.workload import WorkloadDef

logger = logging.getLogger(__name__)

CSV_COLUMNS = ("workload", "strategy", "seed", "makespan_s", "failed", "wastage")


@dataclass(frozen=True)
class ExperimentRow:
    workload: str
    strategy: str
    seed: int
    makespan_s: float
    failed: int
    wastage: float


def run_experiment(
    workloads: list[WorkloadDef],
    strategies: list[str],
    cluster: ClusterDef,
    repetitions: int = 1,
    config: CwsConfig | None = None,
    capture=None,
) -> list[ExperimentRow]:
    """Cartesian product of workload x strategy x repetition, in-process."""
    rows = []
    for wl in workloads:
        for strategy in strategies:
            for rep in range(repetitions):
                seed = cluster.rng_seed + rep
                try:
                    result, service = run_simulation(cluster, wl, strategy, config=config)
                    row = ExperimentRow(
                        workload=wl.name,
                        strategy=strategy,
                        seed=seed,
                        makespan_s=result.makespan_s,
                        failed=result.failed,
                        wastage=result.wastage,
                    )
                    if capture is not None:
                        capture(row, result, service)
                except CwsError as exc:
                    logger.warning("run %s/%s failed: %s", wl.name, strategy, exc)
                    row = ExperimentRow(
                        workload=wl.name,
                        strategy=strategy,
                        seed=seed,
                        makespan_s=-1.0,
                        failed=len(wl.tasks),
                        wastage=0.0,
                    )
                rows.append(row)
    return rows


def write_csv(rows: list[ExperimentRow], path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in rows:
            writer.writerow([r.workload, r.strategy, r.seed, repr(r.makespan_s), r.failed, repr(r.wastage)])


def read_csv(path: str | Path) -> list[ExperimentRow]:
    rows = []
    with Path(path).open("r", newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for rec in reader:
            rows.append(
                ExperimentRow(
                    workload=rec["workload"],
                    strategy=rec["strategy"],
                    seed=int(rec["seed"]),
                    makespan_s=float(rec["makespan_s"]),
                    failed=int(rec["failed"]),
                    wastage=float(rec["wastage"]),
                )
            )
    return rows


def baseline_deltas(rows: list[ExperimentRow], baseline: str = "fifo") -> dict[str, dict[str, float]]:
    """Per workload: strategy -> % makespan reduction vs the baseline strategy.

    Repetitions of one cell are averaged (they are identical for
    deterministic workloads, but a failing rep would show up here).
    """
    cells: dict[tuple[str, str], list[float]] = {}
    for r in rows:
        if r.makespan_s >= 0:
            cells.setdefault((r.workload, r.strategy), []).append(r.makespan_s)
    out: dict[str, dict[str, float]] = {}
    for (workload, strategy), values in sorted(cells.items()):
        base = cells.get((workload, baseline))
        if not base:
            continue
        base_mean = sum(base) / len(base)
        mean = sum(values) / len(values)
        if base_mean == 0:
            continue
        out.setdefault(workload, {})[strategy] = 100.0 * (1.0 - mean / base_mean)
    return out


def format_delta_table(deltas: dict[str, dict[str, float]], baseline: str = "fifo") -> str:
    lines = [f"makespan reduction vs {baseline} baseline (positive = faster):"]
    for workload in sorted(deltas):
        for strategy in sorted(deltas[workload]):
            if strategy == baseline:
                continue
            lines.append(f"  {workload:<24} {strategy:<14} {deltas[workload][strategy]:+7.1f}%")
    return "\n".join(lines)
