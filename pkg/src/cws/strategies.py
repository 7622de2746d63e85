"""Scheduling strategy catalogue: priority orders and node placement rules.

Six strategies. fifo and rr keep submission order; the rank family orders
by longest-path-to-sink rank (weighted by predicted runtimes for
wrank_rr); group_match buckets nodes by benchmark speed and processes by
observed peak memory, then round-robins within matching buckets.
Placement debits node free resources immediately so a single batch can
never over-commit a node.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from cws.cluster import NodeState
from cws.errors import ValidationError
from cws.model import WorkflowDag, weighted_ranks

STRATEGY_NAMES = ("fifo", "rr", "rank_min_rr", "rank_max_rr", "wrank_rr", "group_match")

# strategies whose priority order is plain submission order
_SUBMISSION_ORDER = ("fifo", "rr", "group_match")


@dataclass(frozen=True)
class Assignment:
    task_id: str
    node_id: str
    memory_allocation_bytes: int
    sequence_number: int


@dataclass(frozen=True)
class Requirement:
    """Resources a placement must reserve for one task."""

    cpu: Fraction
    memory_bytes: int


def filter_feasible(cpu_request: Fraction, memory_allocation: int, nodes: list[NodeState]) -> list[NodeState]:
    """Nodes that can hold the task right now, input order preserved."""
    return [n for n in nodes if n.fits(cpu_request, memory_allocation)]


def prioritize(
    strategy: str,
    ready: list[str],
    dag: WorkflowDag,
    ranks: dict[str, int],
    submission_index: dict[str, int],
    estimates: dict[str, float] | None = None,
) -> list[str]:
    """Total order over the ready set for one scheduling tick."""
    if strategy not in STRATEGY_NAMES:
        raise ValidationError(f"unknown strategy {strategy!r}")
    if strategy in _SUBMISSION_ORDER:
        return sorted(ready, key=lambda t: submission_index[t])
    if strategy == "rank_min_rr":
        return sorted(ready, key=lambda t: (-ranks[t], dag.tasks[t].input_bytes_total, t))
    if strategy == "rank_max_rr":
        return sorted(ready, key=lambda t: (-ranks[t], -dag.tasks[t].input_bytes_total, t))
    # wrank_rr
    if estimates is None:
        raise ValidationError("wrank_rr requires runtime estimates")
    wr = weighted_ranks(dag, estimates)
    return sorted(ready, key=lambda t: (-wr[t], t))


def place_first_fit(
    ordered: list[str],
    requirements: dict[str, Requirement],
    nodes: list[NodeState],
) -> list[tuple[str, NodeState]]:
    """Stateless scan from the first node; the fifo baseline's placement."""
    placed = []
    for task_id in ordered:
        req = requirements[task_id]
        for node in nodes:
            if node.fits(req.cpu, req.memory_bytes):
                node.debit(req.cpu, req.memory_bytes)
                placed.append((task_id, node))
                break
    return placed


def place_round_robin(
    ordered: list[str],
    requirements: dict[str, Requirement],
    nodes: list[NodeState],
    cursor: int,
) -> tuple[list[tuple[str, NodeState]], int]:
    """Walk each task to the next feasible node after the cursor, wrapping.

    cursor is the index of the last node that received a task (-1 before
    any placement); it persists across ticks within a workflow. Tasks with
    no feasible node stay queued.
    """
    placed = []
    for task_id in ordered:
        req = requirements[task_id]
        for offset in range(1, len(nodes) + 1):
            idx = (cursor + offset) % len(nodes)
            node = nodes[idx]
            if node.fits(req.cpu, req.memory_bytes):
                node.debit(req.cpu, req.memory_bytes)
                placed.append((task_id, node))
                cursor = idx
                break
    return placed, cursor


def split_into_groups(values: list[Fraction | float | int], group_count: int) -> list[list]:
    """Chunk the sorted distinct values into group_count runs, low to high.

    [100, 110, 900, 1000] with two groups splits as [100, 110] | [900, 1000].
    """
    distinct = sorted(set(values))
    if group_count <= 0:
        raise ValidationError("group_count must be >= 1")
    return [list(chunk) for chunk in np.array_split(np.array(distinct, dtype=object), group_count)]


def node_group_count(nodes: list[NodeState]) -> int:
    return min(3, len(set(n.bench_score for n in nodes)))


def assign_node_groups(nodes: list[NodeState], group_count: int) -> dict[str, int]:
    """node_id -> group index; group 0 holds the slowest scores."""
    chunks = split_into_groups([n.bench_score for n in nodes], group_count)
    of_score = {}
    for gi, chunk in enumerate(chunks):
        for score in chunk:
            of_score[score] = gi
    return {n.node_id: of_score[n.bench_score] for n in nodes}


def assign_process_groups(median_peaks: dict[str, float], group_count: int) -> dict[str, int]:
    """process_name -> group index by median observed peak memory."""
    if not median_peaks:
        return {}
    chunks = split_into_groups(list(median_peaks.values()), group_count)
    of_value = {}
    for gi, chunk in enumerate(chunks):
        for value in chunk:
            of_value[value] = gi
    return {p: of_value[v] for p, v in median_peaks.items()}


def middle_group(group_count: int) -> int:
    # with an even split the "middle" maps to the higher (faster) group
    return group_count // 2


def stored_input_fraction(input_files, node: NodeState) -> Fraction:
    """Fraction of the task's input bytes already present on the node."""
    total = sum(f.size_bytes for f in input_files)
    if total == 0:
        return Fraction(0)
    held = sum(f.size_bytes for f in input_files if f.path in node.stored_files)
    return Fraction(held, total)


def place_group_match(
    ordered: list[str],
    requirements: dict[str, Requirement],
    input_files_of: dict[str, tuple],
    nodes: list[NodeState],
    node_groups: dict[str, int],
    task_group_of: dict[str, int],
    group_count: int,
    cursors: dict[int, int],
) -> list[tuple[str, NodeState]]:
    """Round-robin within the task's node group, spilling to nearby groups.

    At equal group distance the tie-break is data locality: prefer the
    group whose best candidate already stores the larger fraction of the
    task's input bytes, then the faster group.
    """
    members: dict[int, list[int]] = {g: [] for g in range(group_count)}
    for idx, node in enumerate(nodes):
        members[node_groups[node.node_id]].append(idx)

    placed = []
    for task_id in ordered:
        req = requirements[task_id]
        home = task_group_of[task_id]
        for distance in range(group_count):
            candidates = [g for g in (home + distance, home - distance) if 0 <= g < group_count and members.get(g)]
            candidates = sorted(set(candidates))
            if len(candidates) == 2:
                candidates.sort(
                    key=lambda g: (
                        -_best_locality(input_files_of[task_id], members[g], nodes),
                        -g,
                    )
                )
            hit = None
            for g in candidates:
                hit = _walk_group(req, members[g], nodes, cursors, g)
                if hit is not None:
                    break
            if hit is not None:
                placed.append((task_id, hit))
                break
    return placed


def _best_locality(input_files, member_idx: list[int], nodes: list[NodeState]) -> Fraction:
    return max((stored_input_fraction(input_files, nodes[i]) for i in member_idx), default=Fraction(0))


def _walk_group(req: Requirement, member_idx: list[int], nodes: list[NodeState], cursors: dict[int, int], group: int) -> NodeState | None:
    cursor = cursors.get(group, -1)
    for offset in range(1, len(member_idx) + 1):
        pos = (cursor + offset) % len(member_idx)
        node = nodes[member_idx[pos]]
        if node.fits(req.cpu, req.memory_bytes):
            node.debit(req.cpu, req.memory_bytes)
            cursors[group] = pos
            return node
    return None
