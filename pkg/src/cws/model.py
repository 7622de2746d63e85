"""In-memory workflow representation: tasks, dependency graphs, readiness, ranks.

Tasks advance through SUBMITTED -> READY -> ASSIGNED -> RUNNING ->
SUCCEEDED | FAILED. Only physical edges drive readiness; abstract edges
(over process names) are advisory metadata kept for provenance. The edge
set is re-checked for acyclicity on every accepted mutation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction

from cws.errors import ConflictError, CycleError, IllegalTransitionError, NotFoundError, ValidationError


class TaskState(str, Enum):
    SUBMITTED = "SUBMITTED"
    READY = "READY"
    ASSIGNED = "ASSIGNED"
    RUNNING = "RUNNING"
    SUCCEEDED = "SUCCEEDED"
    FAILED = "FAILED"


# legal (from, to) pairs; resubmission (FAILED -> READY) is handled separately
_TRANSITIONS = {
    TaskState.SUBMITTED: {TaskState.READY},
    TaskState.READY: {TaskState.ASSIGNED},
    TaskState.ASSIGNED: {TaskState.RUNNING, TaskState.SUCCEEDED, TaskState.FAILED},
    TaskState.RUNNING: {TaskState.SUCCEEDED, TaskState.FAILED},
    TaskState.SUCCEEDED: set(),
    TaskState.FAILED: set(),
}


@dataclass(frozen=True)
class InputFile:
    path: str
    size_bytes: int

    def __post_init__(self):
        if not self.path:
            raise ValidationError("input file path must be non-empty")
        if self.size_bytes < 0:
            raise ValidationError(f"input file {self.path}: negative size")


@dataclass(frozen=True)
class TaskSpec:
    """One task invocation: resource requests, inputs, parameters, predecessors."""

    task_id: str
    process_name: str
    cpu_request: Fraction
    memory_request_bytes: int
    input_files: tuple[InputFile, ...] = ()
    parameters: dict[str, str] = field(default_factory=dict)
    depends_on: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.task_id:
            raise ValidationError("task_id must be non-empty")
        if not self.process_name:
            raise ValidationError(f"task {self.task_id}: process_name must be non-empty")
        if self.cpu_request <= 0:
            raise ValidationError(f"task {self.task_id}: cpu_request must be > 0")
        if self.memory_request_bytes <= 0:
            raise ValidationError(f"task {self.task_id}: memory_request must be > 0")
        if self.task_id in self.depends_on:
            raise ValidationError(f"task {self.task_id} depends on itself")
        if len(set(self.depends_on)) != len(self.depends_on):
            raise ValidationError(f"task {self.task_id}: duplicate dependency ids")

    @property
    def input_bytes_total(self) -> int:
        return sum(f.size_bytes for f in self.input_files)


class WorkflowDag:
    """Mutable physical/abstract DAG for one workflow, with per-task state."""

    def __init__(self, workflow_id: str):
        if not workflow_id:
            raise ValidationError("workflow_id must be non-empty")
        self.workflow_id = workflow_id
        self.tasks: dict[str, TaskSpec] = {}
        self.state: dict[str, TaskState] = {}
        self.physical_edges: set[tuple[str, str]] = set()
        self.abstract_edges: set[tuple[str, str]] = set()
        self._succ: dict[str, set[str]] = {}
        self._pred: dict[str, set[str]] = {}

    def __len__(self) -> int:
        return len(self.tasks)

    def successors(self, task_id: str) -> set[str]:
        return self._succ.get(task_id, set())

    def predecessors(self, task_id: str) -> set[str]:
        return self._pred.get(task_id, set())

    def add_tasks(self, specs: list[TaskSpec]) -> list[str]:
        """Atomically add a batch; returns ids promoted to READY.

        Either every task in the batch is accepted or none: engines may
        submit a task together with already-known successors.
        """
        batch_ids = [s.task_id for s in specs]
        if len(set(batch_ids)) != len(batch_ids):
            raise ValidationError(f"duplicate task ids in batch: {sorted(set(i for i in batch_ids if batch_ids.count(i) > 1))}")
        for spec in specs:
            if spec.task_id in self.tasks:
                raise ConflictError(f"task {spec.task_id} already exists in workflow {self.workflow_id}")
        known = set(self.tasks) | set(batch_ids)
        new_edges = []
        for spec in specs:
            for dep in spec.depends_on:
                if dep not in known:
                    raise ValidationError(f"task {spec.task_id}: unknown dependency {dep!r}")
                new_edges.append((dep, spec.task_id))
        self._check_acyclic(new_edges, extra_nodes=batch_ids)

        ready: list[str] = []
        for spec in specs:
            self.tasks[spec.task_id] = spec
            self.state[spec.task_id] = TaskState.SUBMITTED
            self._succ.setdefault(spec.task_id, set())
            self._pred.setdefault(spec.task_id, set())
        for a, b in new_edges:
            self.physical_edges.add((a, b))
            self._succ[a].add(b)
            self._pred[b].add(a)
        for spec in specs:
            if self._preds_succeeded(spec.task_id):
                self.state[spec.task_id] = TaskState.READY
                ready.append(spec.task_id)
        return ready

    def add_physical_edges(self, edges: list[tuple[str, str]]) -> list[str]:
        """Merge physical edges between existing tasks; returns newly READY ids.

        An edge can demote nothing: a task already ASSIGNED or beyond keeps
        its state (the decision stands), but SUBMITTED/READY tasks are
        re-evaluated against the enlarged predecessor set.
        """
        fresh = []
        for a, b in edges:
            for tid in (a, b):
                if tid not in self.tasks:
                    raise ValidationError(f"edge references unknown task {tid!r}")
            if a == b:
                raise CycleError([(a, b)])
            if (a, b) not in self.physical_edges:
                fresh.append((a, b))
        self._check_acyclic(fresh)
        newly_ready: list[str] = []
        for a, b in fresh:
            self.physical_edges.add((a, b))
            self._succ[a].add(b)
            self._pred[b].add(a)
        for _, b in fresh:
            if self.state[b] == TaskState.READY and not self._preds_succeeded(b):
                self.state[b] = TaskState.SUBMITTED
        for tid in set(b for _, b in fresh):
            if self.state[tid] == TaskState.SUBMITTED and self._preds_succeeded(tid):
                self.state[tid] = TaskState.READY
                newly_ready.append(tid)
        return newly_ready

    def add_abstract_edges(self, edges: list[tuple[str, str]]) -> None:
        for a, b in edges:
            if not a or not b:
                raise ValidationError("abstract edge endpoints must be non-empty process names")
            self.abstract_edges.add((a, b))

    def set_state(self, task_id: str, new_state: TaskState) -> None:
        old = self._require(task_id)
        if new_state not in _TRANSITIONS[old]:
            raise IllegalTransitionError(
                f"task {task_id}: illegal transition {old.value} -> {new_state.value}"
            )
        self.state[task_id] = new_state

    def mark_finished(self, task_id: str, outcome: TaskState) -> list[str]:
        """Record a terminal outcome; returns successors that became READY.

        A FAILED outcome releases nothing: successors stay SUBMITTED until
        the task is resubmitted or permanently blocked.
        """
        if outcome not in (TaskState.SUCCEEDED, TaskState.FAILED):
            raise ValidationError(f"outcome must be terminal, got {outcome}")
        old = self._require(task_id)
        if old not in (TaskState.RUNNING, TaskState.ASSIGNED):
            raise IllegalTransitionError(
                f"task {task_id}: cannot finish from state {old.value}"
            )
        self.state[task_id] = outcome
        if outcome is not TaskState.SUCCEEDED:
            return []
        released = []
        for succ in sorted(self._succ[task_id]):
            if self.state[succ] == TaskState.SUBMITTED and self._preds_succeeded(succ):
                self.state[succ] = TaskState.READY
                released.append(succ)
        return released

    def resubmit(self, task_id: str) -> None:
        """Return a FAILED task to READY for a retry attempt (same id)."""
        old = self._require(task_id)
        if old != TaskState.FAILED:
            raise IllegalTransitionError(f"task {task_id}: resubmit requires FAILED, got {old.value}")
        self.state[task_id] = TaskState.READY

    def ready_tasks(self) -> list[str]:
        return [t for t, s in self.state.items() if s == TaskState.READY]

    def counts_by_state(self) -> dict[str, int]:
        counts = {s.value: 0 for s in TaskState}
        for s in self.state.values():
            counts[s.value] += 1
        return counts

    def _require(self, task_id: str) -> TaskState:
        if task_id not in self.tasks:
            raise NotFoundError(f"unknown task {task_id!r} in workflow {self.workflow_id}")
        return self.state[task_id]

    def _preds_succeeded(self, task_id: str) -> bool:
        return all(self.state[p] == TaskState.SUCCEEDED for p in self._pred.get(task_id, ()))

    def _check_acyclic(self, new_edges: list[tuple[str, str]], extra_nodes: list[str] = ()) -> None:
        succ = {t: set(s) for t, s in self._succ.items()}
        for t in extra_nodes:
            succ.setdefault(t, set())
        for a, b in new_edges:
            succ.setdefault(a, set()).add(b)
            succ.setdefault(b, set())
        indeg = {t: 0 for t in succ}
        for t, outs in succ.items():
            for s in outs:
                indeg[s] += 1
        queue = [t for t, d in indeg.items() if d == 0]
        seen = 0
        while queue:
            t = queue.pop()
            seen += 1
            for s in succ[t]:
                indeg[s] -= 1
                if indeg[s] == 0:
                    queue.append(s)
        if seen == len(succ):
            return
        offending = [(a, b) for a, b in new_edges if _reaches(succ, b, a)]
        raise CycleError(offending or list(new_edges))


def _reaches(succ: dict[str, set[str]], start: str, goal: str) -> bool:
    stack, seen = [start], set()
    while stack:
        t = stack.pop()
        if t == goal:
            return True
        if t in seen:
            continue
        seen.add(t)
        stack.extend(succ.get(t, ()))
    return False


def compute_ranks(dag: WorkflowDag) -> dict[str, int]:
    """Rank = length in edges of the longest path to any sink.

    Sinks rank 0; otherwise 1 + max over successors. Computed by reverse
    topological sweep; construction guarantees acyclicity.
    """
    order = _topological(dag)
    ranks: dict[str, int] = {}
    for tid in reversed(order):
        succ = dag.successors(tid)
        ranks[tid] = 0 if not succ else 1 + max(ranks[s] for s in succ)
    return ranks


def weighted_ranks(dag: WorkflowDag, estimates: dict[str, float | Fraction]) -> dict[str, Fraction]:
    """Upward rank with predicted runtimes as node weights, no edge costs.

    wrank(t) = estimate(t) + max over successors of wrank(s); a sink's
    weighted rank is its own estimate.
    """
    for tid in dag.tasks:
        if tid not in estimates:
            raise ValidationError(f"missing runtime estimate for task {tid!r}")
        if estimates[tid] <= 0:
            raise ValidationError(f"estimate for task {tid!r} must be > 0")
    order = _topological(dag)
    wr: dict[str, Fraction] = {}
    for tid in reversed(order):
        own = Fraction(str(estimates[tid])) if not isinstance(estimates[tid], Fraction) else estimates[tid]
        succ = dag.successors(tid)
        wr[tid] = own if not succ else own + max(wr[s] for s in succ)
    return wr


def _topological(dag: WorkflowDag) -> list[str]:
    indeg = {t: len(dag.predecessors(t)) for t in dag.tasks}
    queue = sorted(t for t, d in indeg.items() if d == 0)
    order = []
    while queue:
        t = queue.pop(0)
        order.append(t)
        for s in sorted(dag.successors(t)):
            indeg[s] -= 1
            if indeg[s] == 0:
                queue.append(s)
    if len(order) != len(dag.tasks):
        raise CycleError([])  # unreachable by construction
    return order
