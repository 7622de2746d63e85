"""The scheduler service: workflow registration, task intake, decisions.

One scheduling actor per workflow (its lock) consumes readiness and
status events; the node registry is shared across workflows behind its
own lock. Every decision and lifecycle step lands in the provenance
store. Transport adapters (HTTP server, in-process client) stay thin so
both paths make identical decisions from identical inputs.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from fractions import Fraction
from statistics import median

from cws.cluster import ClusterDef, NodeState
from cws.config import CwsConfig
from cws.errors import (
    ConflictError,
    NotFoundError,
    UnknownStrategyError,
    ValidationError,
)
from cws.model import TaskSpec, TaskState, WorkflowDag, compute_ranks, weighted_ranks
from cws.predict import Attempt, MemoryModel, NodeFactors, RuntimeModel, wastage_report
from cws.protocol import RegisterRequest, StatusReport, task_spec_to_wire
from cws.provenance import ProvenanceStore
from cws.strategies import (
    STRATEGY_NAMES,
    Assignment,
    Requirement,
    assign_node_groups,
    assign_process_groups,
    middle_group,
    node_group_count,
    place_first_fit,
    place_group_match,
    place_round_robin,
    prioritize,
)


class WallClock:
    kind = "wall"

    def now(self) -> str:
        return datetime.now(timezone.utc).isoformat(timespec="microseconds").replace("+00:00", "Z")


class SimulatedClock:
    """Clock owned by a driving simulator; value is exact rational seconds."""

    kind = "simulated"

    def __init__(self, value: Fraction = Fraction(0)):
        self.value = value

    def now(self) -> str:
        return str(self.value)


@dataclass
class _Workflow:
    dag: WorkflowDag
    strategy: str
    engine_name: str
    lock: threading.RLock = field(default_factory=threading.RLock)
    cond: threading.Condition = field(default_factory=threading.Condition)
    submission_index: dict[str, int] = field(default_factory=dict)
    next_index: int = 0
    rr_cursor: int = -1
    group_cursors: dict[int, int] = field(default_factory=dict)
    assignments: list[Assignment] = field(default_factory=list)
    active: dict[str, Assignment] = field(default_factory=dict)  # ASSIGNED/RUNNING holds
    allocations: dict[str, int] = field(default_factory=dict)  # post-OOM overrides
    attempts: dict[str, int] = field(default_factory=dict)
    oom_counts: dict[str, int] = field(default_factory=dict)
    closed: bool = False
    summary: dict | None = None


class CwsService:
    def __init__(
        self,
        cluster: ClusterDef,
        config: CwsConfig | None = None,
        provenance: ProvenanceStore | None = None,
        clock=None,
    ):
        self.config = config or CwsConfig()
        self.provenance = provenance or ProvenanceStore()
        self.clock = clock or WallClock()
        self.nodes: list[NodeState] = cluster.fresh_nodes()
        self.max_node_memory = cluster.max_memory_capacity
        self.factors = NodeFactors()
        for n in self.nodes:
            self.factors.register(n.node_id, n.bench_score)
        self._runtime_model = RuntimeModel(self.factors, self.config.predictor)
        self._memory_model = MemoryModel(self.config.memory)
        self._workflows: dict[str, _Workflow] = {}
        self._workflows_lock = threading.Lock()
        self._registry_lock = threading.RLock()
        self._predictor_lock = threading.Lock()
        # ordered debit/credit history, for capacity-replay checks
        self.capacity_log: list[tuple[str, str, Fraction, int]] = []

    # ------------------------------------------------------------------ API

    def list_strategies(self) -> list[str]:
        return list(STRATEGY_NAMES)

    def register_workflow(self, request: RegisterRequest) -> str:
        if request.strategy not in STRATEGY_NAMES:
            raise UnknownStrategyError(request.strategy, list(STRATEGY_NAMES))
        dag = WorkflowDag(request.workflow_id)  # validates non-empty id
        with self._workflows_lock:
            if request.workflow_id in self._workflows:
                raise ConflictError(f"workflow {request.workflow_id!r} already registered")
            wf = _Workflow(dag=dag, strategy=request.strategy, engine_name=request.engine_name)
            self._workflows[request.workflow_id] = wf
        if request.dag_hint:
            dag.add_abstract_edges(list(request.dag_hint))
        self._record(
            request.workflow_id,
            "REGISTERED",
            payload={"strategy": request.strategy, "engine_name": request.engine_name},
        )
        return request.workflow_id  # the token; auth is the shared bearer

    def submit_tasks(self, workflow_id: str, specs: list[TaskSpec]) -> int:
        wf = self._wf(workflow_id)
        if not specs:
            return 0
        with wf.lock:
            ready = wf.dag.add_tasks(specs)
            for spec in specs:
                wf.submission_index[spec.task_id] = wf.next_index
                wf.next_index += 1
                self._record(
                    workflow_id,
                    "SUBMITTED",
                    task_id=spec.task_id,
                    payload={"task": task_spec_to_wire(spec), "process_name": spec.process_name},
                )
            for tid in ready:
                self._record(workflow_id, "READY", task_id=tid)
            self._tick(workflow_id, wf)
        return len(specs)

    def push_dag_edges(
        self,
        workflow_id: str,
        physical: list[tuple[str, str]] = (),
        abstract: list[tuple[str, str]] = (),
    ) -> None:
        wf = self._wf(workflow_id)
        with wf.lock:
            if abstract:
                wf.dag.add_abstract_edges(list(abstract))
            if physical:
                newly_ready = wf.dag.add_physical_edges(list(physical))
                for tid in newly_ready:
                    self._record(workflow_id, "READY", task_id=tid)
            self._tick(workflow_id, wf)

    def fetch_assignments(
        self, workflow_id: str, after_sequence: int = 0, wait: bool = False, timeout_ms: int | None = None
    ) -> list[Assignment]:
        wf = self._wf(workflow_id)
        deadline_ms = self.config.poll_timeout_ms if timeout_ms is None else timeout_ms
        with wf.cond:
            fresh = [a for a in wf.assignments if a.sequence_number > after_sequence]
            if fresh or not wait:
                return fresh
            wf.cond.wait(deadline_ms / 1000.0)
            return [a for a in wf.assignments if a.sequence_number > after_sequence]

    def report_status(self, workflow_id: str, report: StatusReport) -> dict:
        wf = self._wf(workflow_id)
        with wf.lock:
            spec = wf.dag.tasks.get(report.task_id)
            if spec is None:
                raise NotFoundError(f"unknown task {report.task_id!r}")
            attempt = wf.attempts.get(report.task_id, 1)
            if report.new_state == "RUNNING":
                wf.dag.set_state(report.task_id, TaskState.RUNNING)
                held = wf.active[report.task_id]
                self._record(
                    workflow_id,
                    "STARTED",
                    task_id=report.task_id,
                    payload={
                        "node_id": held.node_id,
                        "attempt": attempt,
                        "memory_allocation_bytes": held.memory_allocation_bytes,
                        "process_name": spec.process_name,
                    },
                )
                return {"ok": True}
            if report.new_state == "SUCCEEDED":
                released = wf.dag.mark_finished(report.task_id, TaskState.SUCCEEDED)
                held = self._release(wf, report.task_id, spec)
                metrics = report.metrics
                self._record(
                    workflow_id,
                    "SUCCEEDED",
                    task_id=report.task_id,
                    payload={
                        "process_name": spec.process_name,
                        "node_id": held.node_id,
                        "attempt": attempt,
                        "memory_allocation_bytes": held.memory_allocation_bytes,
                        "metrics": metrics.to_wire(),
                    },
                )
                with self._predictor_lock:
                    self._runtime_model.observe(
                        spec.process_name, metrics.input_bytes_total, held.node_id, metrics.wall_time_s
                    )
                    self._memory_model.observe_peak(spec.process_name, metrics.peak_memory_bytes)
                with self._registry_lock:
                    self._node(held.node_id).stored_files.update(f.path for f in spec.input_files)
                for tid in released:
                    self._record(workflow_id, "READY", task_id=tid)
                self._tick(workflow_id, wf)
                return {"ok": True, "newly_ready": released}
            # FAILED
            wf.dag.mark_finished(report.task_id, TaskState.FAILED)
            held = self._release(wf, report.task_id, spec)
            retry_allocation = None
            if report.failure_kind == "OOM":
                wf.oom_counts[report.task_id] = wf.oom_counts.get(report.task_id, 0) + 1
                with self._predictor_lock:
                    retry_allocation = self._memory_model.on_oom(
                        spec.process_name,
                        held.memory_allocation_bytes,
                        wf.oom_counts[report.task_id],
                        self.max_node_memory,
                    )
            payload = {
                "process_name": spec.process_name,
                "node_id": held.node_id,
                "attempt": attempt,
                "memory_allocation_bytes": held.memory_allocation_bytes,
                "failure_kind": report.failure_kind,
                "will_retry": retry_allocation is not None,
            }
            if report.metrics is not None:
                payload["metrics"] = report.metrics.to_wire()
            self._record(workflow_id, "FAILED", task_id=report.task_id, payload=payload)
            if retry_allocation is not None:
                wf.allocations[report.task_id] = retry_allocation
                wf.attempts[report.task_id] = attempt + 1
                wf.dag.resubmit(report.task_id)
                self._record(
                    workflow_id,
                    "RESUBMITTED",
                    task_id=report.task_id,
                    payload={"attempt": attempt + 1, "memory_allocation_bytes": retry_allocation},
                )
            self._tick(workflow_id, wf)
            return {"ok": True, "will_retry": retry_allocation is not None}

    def close_workflow(self, workflow_id: str) -> dict:
        wf = self._wf(workflow_id)
        with wf.lock:
            holding = sorted(
                t
                for t, s in wf.dag.state.items()
                if s in (TaskState.RUNNING, TaskState.ASSIGNED)
            )
            if holding:
                raise ConflictError(f"cannot close: task(s) still running or assigned: {', '.join(holding)}")
            counts = wf.dag.counts_by_state()
            summary = {
                "workflow_id": workflow_id,
                "makespan_s": self._makespan_seconds(workflow_id),
                "task_count": len(wf.dag),
                "counts": counts,
                "failed": counts[TaskState.FAILED.value],
            }
            wf.summary = summary
            wf.closed = True
            wf.dag = WorkflowDag(workflow_id)  # release task memory; provenance retained
            with wf.cond:
                wf.cond.notify_all()
            return summary

    def wastage_report(self, workflow_id: str) -> list:
        wf = self._wf(workflow_id, allow_closed=True)
        if not wf.closed:
            raise ConflictError(f"workflow {workflow_id!r} is not closed yet")
        attempts = []
        for r in self.provenance.query(workflow_id=workflow_id):
            if r.event_kind not in ("SUCCEEDED", "FAILED"):
                continue
            metrics = r.payload.get("metrics")
            if metrics is None:
                continue
            attempts.append(
                Attempt(
                    process_name=r.payload["process_name"],
                    allocation_bytes=r.payload["memory_allocation_bytes"],
                    peak_bytes=metrics["peak_memory_bytes"],
                    wall_time_s=metrics["wall_time_s"],
                )
            )
        return wastage_report(attempts)

    # ------------------------------------------------------- scheduling tick

    def _tick(self, workflow_id: str, wf: _Workflow) -> None:
        if wf.closed:
            return
        ready = sorted(wf.dag.ready_tasks(), key=lambda t: wf.submission_index[t])
        if not ready:
            return
        ranks = compute_ranks(wf.dag)
        estimates = None
        if wf.strategy == "wrank_rr":
            with self._predictor_lock:
                estimates = {
                    tid: self._runtime_model.predict(spec.process_name, spec.input_bytes_total)[0]
                    for tid, spec in wf.dag.tasks.items()
                }
        ordered = prioritize(wf.strategy, ready, wf.dag, ranks, wf.submission_index, estimates)
        requirements = {}
        for tid in ordered:
            spec = wf.dag.tasks[tid]
            alloc = wf.allocations.get(tid)
            if alloc is None:
                with self._predictor_lock:
                    alloc = self._memory_model.initial_allocation(
                        spec.process_name, spec.memory_request_bytes, self.max_node_memory
                    )
            requirements[tid] = Requirement(cpu=spec.cpu_request, memory_bytes=alloc)

        with self._registry_lock:
            placed = self._place(wf, ordered, requirements)
            for tid, node in placed:
                req = requirements[tid]
                self.capacity_log.append(("debit", node.node_id, req.cpu, req.memory_bytes))

        if not placed:
            return
        rank_key = ranks if wf.strategy in ("rank_min_rr", "rank_max_rr") else None
        wrank = weighted_ranks(wf.dag, estimates) if wf.strategy == "wrank_rr" else None
        for tid, node in placed:
            req = requirements[tid]
            seq = len(wf.assignments) + 1
            assignment = Assignment(
                task_id=tid,
                node_id=node.node_id,
                memory_allocation_bytes=req.memory_bytes,
                sequence_number=seq,
            )
            wf.assignments.append(assignment)
            wf.active[tid] = assignment
            wf.attempts.setdefault(tid, 1)
            wf.dag.set_state(tid, TaskState.ASSIGNED)
            self._record(
                workflow_id,
                "ASSIGNED",
                task_id=tid,
                payload={
                    "node_id": node.node_id,
                    "memory_allocation_bytes": req.memory_bytes,
                    "sequence_number": seq,
                    "attempt": wf.attempts[tid],
                },
            )
            priority_value = None
            if rank_key is not None:
                priority_value = rank_key[tid]
            elif wrank is not None:
                priority_value = float(wrank[tid])
            self._record(
                workflow_id,
                "DECISION",
                task_id=tid,
                payload={
                    "node_id": node.node_id,
                    "strategy": wf.strategy,
                    "sequence_number": seq,
                    "rank": priority_value,
                    "memory_allocation_bytes": req.memory_bytes,
                },
            )
        with wf.cond:
            wf.cond.notify_all()

    def _place(self, wf: _Workflow, ordered: list[str], requirements: dict[str, Requirement]):
        if wf.strategy == "fifo":
            return place_first_fit(ordered, requirements, self.nodes)
        if wf.strategy == "group_match":
            return self._place_grouped(wf, ordered, requirements)
        placed, wf.rr_cursor = place_round_robin(ordered, requirements, self.nodes, wf.rr_cursor)
        return placed

    def _place_grouped(self, wf: _Workflow, ordered: list[str], requirements: dict[str, Requirement]):
        group_count = node_group_count(self.nodes)
        node_groups = assign_node_groups(self.nodes, group_count)
        with self._predictor_lock:
            med = {p: median(peaks) for p, peaks in self._memory_model.peaks.items() if peaks}
        process_groups = assign_process_groups(med, group_count)
        fallback = middle_group(group_count)
        task_group_of = {
            tid: process_groups.get(wf.dag.tasks[tid].process_name, fallback) for tid in ordered
        }
        input_files_of = {tid: wf.dag.tasks[tid].input_files for tid in ordered}
        return place_group_match(
            ordered,
            requirements,
            input_files_of,
            self.nodes,
            node_groups,
            task_group_of,
            group_count,
            wf.group_cursors,
        )

    # ----------------------------------------------------------- internals

    def _release(self, wf: _Workflow, task_id: str, spec: TaskSpec) -> Assignment:
        held = wf.active.pop(task_id)
        with self._registry_lock:
            self._node(held.node_id).credit(spec.cpu_request, held.memory_allocation_bytes)
            self.capacity_log.append(("credit", held.node_id, spec.cpu_request, held.memory_allocation_bytes))
        return held

    def _node(self, node_id: str) -> NodeState:
        for n in self.nodes:
            if n.node_id == node_id:
                return n
        raise NotFoundError(f"unknown node {node_id!r}")

    def _wf(self, workflow_id: str, allow_closed: bool = False) -> _Workflow:
        with self._workflows_lock:
            wf = self._workflows.get(workflow_id)
        if wf is None:
            raise NotFoundError(f"unknown workflow {workflow_id!r}")
        if wf.closed and not allow_closed:
            raise ConflictError(f"workflow {workflow_id!r} is closed")
        return wf

    def _record(self, workflow_id: str, event_kind: str, task_id: str | None = None, payload: dict | None = None) -> None:
        self.provenance.append(
            ts=self.clock.now(),
            clock=self.clock.kind,
            workflow_id=workflow_id,
            event_kind=event_kind,
            task_id=task_id,
            payload=payload or {},
        )

    def _makespan_seconds(self, workflow_id: str) -> float:
        starts, ends = [], []
        for r in self.provenance.query(workflow_id=workflow_id):
            if r.event_kind == "STARTED":
                starts.append(_parse_ts(r.ts, r.clock))
            elif r.event_kind in ("SUCCEEDED", "FAILED"):
                ends.append(_parse_ts(r.ts, r.clock))
        if not starts or not ends:
            return 0.0
        return float(max(ends) - min(starts))


def _parse_ts(ts: str, clock: str) -> float:
    if clock == "simulated":
        return float(Fraction(ts))
    return datetime.fromisoformat(ts.replace("Z", "+00:00")).timestamp()
