"""Deterministic discrete-event cluster simulator and synthetic engine.

The simulator stands in for the resource manager's execution layer:
assigned tasks occupy their node for true_runtime / node_factor seconds
(exact rationals, so event order is bit-stable), raise an out-of-memory
event shortly after start when the allocation is below the true peak,
and add their outputs to the node's stored files. The engine driver
submits tasks the way a workflow system would (all at once or as
dependencies finish), reports every outcome back through the scheduler
interface, and never leaks ground truth.

Event queue order is (time, kind, task_id) with kinds compared
lexicographically, so finishes apply before same-instant starts.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from fractions import Fraction

from cws.client import LocalEngineClient
from cws.cluster import ClusterDef, NodeState
from cws.config import CwsConfig
from cws.errors import CwsError, ValidationError
from cws.predict import Attempt, WastageRow, total_wastage, wastage_report
from cws.protocol import StatusReport, TaskMetrics, task_spec_to_wire
from cws.provenance import ProvenanceStore
from cws.service import CwsService, SimulatedClock
from cws.strategies import Assignment
from cws.workload import WorkloadDef, WorkloadTask

EVENT_START = "TASK_START"
EVENT_FINISH = "TASK_FINISH"
EVENT_OOM = "TASK_OOM"


@dataclass(frozen=True)
class SimEvent:
    time: Fraction
    kind: str
    task_id: str
    node_id: str

    @property
    def key(self):
        return (self.time, self.kind, self.task_id)

    def line(self) -> str:
        return f"{self.time}|{self.kind}|{self.task_id}|{self.node_id}"


@dataclass(frozen=True)
class AttemptRecord:
    """One execution attempt as the simulator saw it."""

    task_id: str
    process_name: str
    node_id: str
    attempt: int
    allocation_bytes: int
    start: Fraction
    end: Fraction
    outcome: str  # SUCCEEDED | OOM
    peak_bytes: int

    @property
    def wall_time_s(self) -> float:
        return float(self.end - self.start)


@dataclass
class _Running:
    node_id: str
    allocation_bytes: int
    start: Fraction
    attempt: int


class Simulation:
    """Owns virtual time, node occupancy, and the event queue."""

    def __init__(self, cluster: ClusterDef, workload: WorkloadDef, oom_delay_s: float = 1.0):
        self.cluster = cluster
        self.workload = workload
        self.oom_delay = Fraction(str(oom_delay_s))
        self.nodes: dict[str, NodeState] = {n.node_id: n for n in cluster.fresh_nodes()}
        self.node_order = [n.node_id for n in cluster.nodes]
        self.clock_source = SimulatedClock()
        self.events: list[SimEvent] = []
        self.attempts: list[AttemptRecord] = []
        self._heap: list[tuple] = []
        self._pending_start: dict[str, tuple[str, int]] = {}
        self._running: dict[str, _Running] = {}
        self._attempt_no: dict[str, int] = {}
        self._tasks: dict[str, WorkloadTask] = {t.spec.task_id: t for t in workload.tasks}
        self._validate_fit()

    def _validate_fit(self) -> None:
        for t in self.workload.tasks:
            if not any(
                n.cpu_capacity >= t.spec.cpu_request and n.memory_capacity >= t.spec.memory_request_bytes
                for n in self.cluster.nodes
            ):
                raise ValidationError(
                    f"task {t.spec.task_id}: no node in the cluster can ever fit "
                    f"{t.spec.cpu_request} cores / {t.spec.memory_request_bytes} bytes"
                )

    @property
    def clock(self) -> Fraction:
        return self.clock_source.value

    def heap_empty(self) -> bool:
        return not self._heap

    def schedule_start(self, assignment: Assignment) -> None:
        """Queue a TASK_START at the current virtual time."""
        if assignment.task_id not in self._tasks:
            raise ValidationError(f"assignment for unknown task {assignment.task_id!r}")
        if assignment.node_id not in self.nodes:
            raise ValidationError(f"assignment to unknown node {assignment.node_id!r}")
        self._pending_start[assignment.task_id] = (assignment.node_id, assignment.memory_allocation_bytes)
        self._push(SimEvent(self.clock, EVENT_START, assignment.task_id, assignment.node_id))

    def step(self) -> SimEvent | None:
        """Pop and apply exactly one event; None when the queue is drained."""
        if not self._heap:
            return None
        _, _, _, event = heapq.heappop(self._heap)
        self.clock_source.value = event.time
        if event.kind == EVENT_START:
            self._apply_start(event)
        else:
            self._apply_end(event)
        self.events.append(event)
        return event

    def _apply_start(self, event: SimEvent) -> None:
        node_id, allocation = self._pending_start.pop(event.task_id)
        task = self._tasks[event.task_id]
        node = self.nodes[node_id]
        node.debit(task.spec.cpu_request, allocation)
        attempt = self._attempt_no.get(event.task_id, 0) + 1
        self._attempt_no[event.task_id] = attempt
        self._running[event.task_id] = _Running(node_id, allocation, event.time, attempt)
        if allocation < task.truth.peak_memory_bytes:
            end = event.time + self.oom_delay
            self._push(SimEvent(end, EVENT_OOM, event.task_id, node_id))
        else:
            end = event.time + task.truth.runtime_s / node.factor
            self._push(SimEvent(end, EVENT_FINISH, event.task_id, node_id))

    def _apply_end(self, event: SimEvent) -> None:
        run = self._running.pop(event.task_id)
        task = self._tasks[event.task_id]
        node = self.nodes[run.node_id]
        node.credit(task.spec.cpu_request, run.allocation_bytes)
        if event.kind == EVENT_FINISH:
            node.stored_files.update(f.path for f in task.truth.outputs)
            peak = task.truth.peak_memory_bytes
            outcome = "SUCCEEDED"
        else:
            peak = run.allocation_bytes  # hit the ceiling
            outcome = "OOM"
        self.attempts.append(
            AttemptRecord(
                task_id=event.task_id,
                process_name=task.spec.process_name,
                node_id=run.node_id,
                attempt=run.attempt,
                allocation_bytes=run.allocation_bytes,
                start=run.start,
                end=event.time,
                outcome=outcome,
                peak_bytes=peak,
            )
        )

    def capacity_check(self) -> list[str]:
        """Diagnostic: recompute occupancy from running tasks vs capacities."""
        violations = []
        for node_id, node in self.nodes.items():
            cpu_used = sum(
                self._tasks[t].spec.cpu_request for t, r in self._running.items() if r.node_id == node_id
            )
            mem_used = sum(r.allocation_bytes for r in self._running.values() if r.node_id == node_id)
            if cpu_used > node.cpu_capacity:
                violations.append(f"node {node_id}: cpu over-committed ({cpu_used} > {node.cpu_capacity})")
            if mem_used > node.memory_capacity:
                violations.append(f"node {node_id}: memory over-committed ({mem_used} > {node.memory_capacity})")
            if node.cpu_free != node.cpu_capacity - cpu_used or node.memory_free != node.memory_capacity - mem_used:
                violations.append(f"node {node_id}: free-resource accounting drifted")
        return violations

    def inject_running(self, task_id: str, node_id: str, allocation_bytes: int) -> None:
        """Test hook: fake occupancy without accounting, to exercise capacity_check."""
        self._running[task_id] = _Running(node_id, allocation_bytes, self.clock, 1)

    def _push(self, event: SimEvent) -> None:
        heapq.heappush(self._heap, (*event.key, event))


@dataclass
class SimResult:
    workload: str
    strategy: str
    makespan: Fraction
    events: list[SimEvent]
    attempts: list[AttemptRecord]
    wastage_rows: list[WastageRow]
    summary: dict
    assignments: list[Assignment]
    task_count: int
    failed: int

    @property
    def makespan_s(self) -> float:
        return float(self.makespan)

    @property
    def wastage(self) -> float:
        return total_wastage(self.wastage_rows)

    def event_log_text(self) -> str:
        return "\n".join(e.line() for e in self.events)


class EngineDriver:
    """Synthetic engine: submit per reveal_mode, execute, report, close."""

    def __init__(self, client, workload: WorkloadDef, sim: Simulation):
        self.client = client
        self.workload = workload
        self.sim = sim
        self.assignments: list[Assignment] = []
        self._last_seq = 0
        self._submitted: set[str] = set()
        self._succeeded: set[str] = set()
        self._permanently_failed: set[str] = set()

    def run(self, strategy: str) -> dict:
        hint = self._abstract_hint()
        self.client.register(strategy, dag_hint=hint)
        self._submit_initial()
        self._drain()
        while True:
            event = self.sim.step()
            if event is None:
                self._drain()
                if self.sim.heap_empty():
                    break
                continue
            if event.kind == EVENT_START:
                self.client.report(StatusReport(task_id=event.task_id, new_state="RUNNING"))
                continue
            attempt = self.sim.attempts[-1]
            metrics = TaskMetrics(
                wall_time_s=attempt.wall_time_s,
                peak_memory_bytes=attempt.peak_bytes,
                input_bytes_total=self._spec(event.task_id).input_bytes_total,
            )
            if event.kind == EVENT_FINISH:
                self.client.report(
                    StatusReport(task_id=event.task_id, new_state="SUCCEEDED", metrics=metrics)
                )
                self._succeeded.add(event.task_id)
                if self.workload.reveal_mode == "INCREMENTAL":
                    self._submit_newly_ready()
            else:
                response = self.client.report(
                    StatusReport(
                        task_id=event.task_id, new_state="FAILED", failure_kind="OOM", metrics=metrics
                    )
                )
                if not response.get("will_retry"):
                    self._permanently_failed.add(event.task_id)
            self._drain()
        return self.client.close()

    # ------------------------------------------------------------ internals

    def _spec(self, task_id: str):
        return next(t.spec for t in self.workload.tasks if t.spec.task_id == task_id)

    def _abstract_hint(self) -> list[tuple[str, str]]:
        by_id = {t.spec.task_id: t.spec.process_name for t in self.workload.tasks}
        seen = []
        for t in self.workload.tasks:
            for dep in t.spec.depends_on:
                pair = (by_id[dep], t.spec.process_name)
                if pair not in seen and pair[0] != pair[1]:
                    seen.append(pair)
        return seen

    def _submit_initial(self) -> None:
        if self.workload.reveal_mode == "FULL_DAG":
            batch = list(self.workload.tasks)
        else:
            batch = [t for t in self.workload.tasks if not t.spec.depends_on]
        self._submit(batch)

    def _submit_newly_ready(self) -> None:
        batch = [
            t
            for t in self.workload.tasks
            if t.spec.task_id not in self._submitted
            and all(d in self._succeeded for d in t.spec.depends_on)
        ]
        self._submit(batch)

    def _submit(self, batch: list[WorkloadTask]) -> None:
        if not batch:
            return
        # sim_truth never crosses the interface
        self.client.submit([task_spec_to_wire(t.spec) for t in batch])
        self._submitted.update(t.spec.task_id for t in batch)

    def _drain(self) -> None:
        fresh = self.client.fetch(self._last_seq, wait=False)
        for assignment in fresh:
            self.assignments.append(assignment)
            self._last_seq = assignment.sequence_number
            self.sim.schedule_start(assignment)


def _result_from_driver(
    workload: WorkloadDef, strategy: str, sim: Simulation, driver: EngineDriver, summary: dict
) -> SimResult:
    makespan = max((e.time for e in sim.events), default=Fraction(0))
    rows = wastage_report(
        [
            Attempt(
                process_name=a.process_name,
                allocation_bytes=a.allocation_bytes,
                peak_bytes=a.peak_bytes,
                wall_time_s=a.wall_time_s,
            )
            for a in sim.attempts
        ]
    )
    failed = summary["counts"]["FAILED"]
    result = SimResult(
        workload=workload.name,
        strategy=strategy,
        makespan=makespan,
        events=list(sim.events),
        attempts=list(sim.attempts),
        wastage_rows=rows,
        summary=summary,
        assignments=list(driver.assignments),
        task_count=len(workload.tasks),
        failed=failed,
    )
    if failed == 0 and result.task_count > 0 and len(driver._succeeded) == result.task_count:
        bound = critical_path_bound(workload, sim.cluster)
        if result.makespan < bound:
            raise CwsError(
                f"makespan {result.makespan} below critical-path bound {bound} "
                f"for {workload.name}/{strategy}"
            )
    return result


def critical_path_bound(workload: WorkloadDef, cluster: ClusterDef) -> Fraction:
    """Infinite-node lower bound: longest true-runtime path over the fastest factor."""
    from cws.model import WorkflowDag, weighted_ranks

    dag = WorkflowDag(workload.name or "bound")
    dag.add_tasks([t.spec for t in workload.tasks])
    if not workload.tasks:
        return Fraction(0)
    estimates = {t.spec.task_id: t.truth.runtime_s for t in workload.tasks}
    wr = weighted_ranks(dag, estimates)
    return max(wr.values()) / cluster.max_factor


def run_simulation(
    cluster: ClusterDef,
    workload: WorkloadDef,
    strategy: str,
    config: CwsConfig | None = None,
    provenance: ProvenanceStore | None = None,
) -> tuple[SimResult, CwsService]:
    """Full in-process loop: engine client, scheduler, simulated cluster."""
    config = config or CwsConfig()
    sim = Simulation(cluster, workload, oom_delay_s=config.sim.oom_delay_s)
    service = CwsService(cluster, config=config, provenance=provenance, clock=sim.clock_source)
    client = LocalEngineClient(service, workload.name)
    driver = EngineDriver(client, workload, sim)
    summary = driver.run(strategy)
    return _result_from_driver(workload, strategy, sim, driver, summary), service


def drive_live_server(
    url: str,
    workload: WorkloadDef,
    cluster: ClusterDef,
    strategy: str,
    bearer_token: str = "",
    config: CwsConfig | None = None,
) -> SimResult:
    """Same loop over HTTP; the server must be running with the same cluster."""
    from cws.client import HttpEngineClient

    config = config or CwsConfig()
    sim = Simulation(cluster, workload, oom_delay_s=config.sim.oom_delay_s)
    client = HttpEngineClient(url, workload.name, bearer_token=bearer_token)
    driver = EngineDriver(client, workload, sim)
    try:
        summary = driver.run(strategy)
    finally:
        client.close_connection()
    return _result_from_driver(workload, strategy, sim, driver, summary)
