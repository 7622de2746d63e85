"""Wire formats for the scheduler interface.

JSON field names are normative: task_id, process_name, cpu_request,
memory_request_bytes, input_files[{path,size_bytes}], parameters,
depends_on, new_state, failure_kind, metrics{wall_time_s,
peak_memory_bytes, input_bytes_total}. Encoding is canonical (sorted
keys, compact separators) so fixtures round-trip byte-exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from cws.cluster import as_fraction, json_number
from cws.errors import ValidationError
from cws.model import InputFile, TaskSpec
from cws.strategies import Assignment


def canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def decode_json(data: bytes) -> dict:
    try:
        obj = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ValidationError(f"malformed JSON body: {exc}") from exc
    if not isinstance(obj, dict):
        raise ValidationError("JSON body must be an object")
    return obj


@dataclass(frozen=True)
class RegisterRequest:
    workflow_id: str
    strategy: str
    engine_name: str = ""
    dag_hint: tuple[tuple[str, str], ...] = ()

    def to_wire(self) -> dict:
        out = {
            "workflow_id": self.workflow_id,
            "strategy": self.strategy,
            "engine_name": self.engine_name,
        }
        if self.dag_hint:
            out["dag_hint"] = [[a, b] for a, b in self.dag_hint]
        return out

    @classmethod
    def from_wire(cls, raw: dict) -> "RegisterRequest":
        _require(raw, "workflow_id", "strategy")
        hint = raw.get("dag_hint") or []
        return cls(
            workflow_id=str(raw["workflow_id"]),
            strategy=str(raw["strategy"]),
            engine_name=str(raw.get("engine_name", "")),
            dag_hint=tuple((str(a), str(b)) for a, b in hint),
        )


@dataclass(frozen=True)
class TaskMetrics:
    wall_time_s: float
    peak_memory_bytes: int
    input_bytes_total: int

    def to_wire(self) -> dict:
        return {
            "wall_time_s": self.wall_time_s,
            "peak_memory_bytes": self.peak_memory_bytes,
            "input_bytes_total": self.input_bytes_total,
        }

    @classmethod
    def from_wire(cls, raw: dict) -> "TaskMetrics":
        _require(raw, "wall_time_s", "peak_memory_bytes", "input_bytes_total")
        return cls(
            wall_time_s=float(raw["wall_time_s"]),
            peak_memory_bytes=int(raw["peak_memory_bytes"]),
            input_bytes_total=int(raw["input_bytes_total"]),
        )


@dataclass(frozen=True)
class StatusReport:
    task_id: str
    new_state: str  # RUNNING | SUCCEEDED | FAILED
    failure_kind: str | None = None  # OOM | ERROR
    metrics: TaskMetrics | None = None

    def __post_init__(self):
        if self.new_state not in ("RUNNING", "SUCCEEDED", "FAILED"):
            raise ValidationError(f"illegal new_state {self.new_state!r}")
        if self.new_state == "SUCCEEDED" and self.metrics is None:
            raise ValidationError("metrics required when new_state is SUCCEEDED")
        if self.failure_kind is not None and self.failure_kind not in ("OOM", "ERROR"):
            raise ValidationError(f"illegal failure_kind {self.failure_kind!r}")
        if self.new_state == "FAILED" and self.failure_kind is None:
            raise ValidationError("failure_kind required when new_state is FAILED")

    def to_wire(self) -> dict:
        out: dict = {"task_id": self.task_id, "new_state": self.new_state}
        if self.failure_kind is not None:
            out["failure_kind"] = self.failure_kind
        if self.metrics is not None:
            out["metrics"] = self.metrics.to_wire()
        return out

    @classmethod
    def from_wire(cls, raw: dict, task_id: str | None = None) -> "StatusReport":
        _require(raw, "new_state")
        tid = task_id if task_id is not None else raw.get("task_id")
        if not tid:
            raise ValidationError("status report requires task_id")
        metrics = raw.get("metrics")
        return cls(
            task_id=str(tid),
            new_state=str(raw["new_state"]),
            failure_kind=raw.get("failure_kind"),
            metrics=TaskMetrics.from_wire(metrics) if metrics is not None else None,
        )


def task_spec_to_wire(spec: TaskSpec) -> dict:
    return {
        "task_id": spec.task_id,
        "process_name": spec.process_name,
        "cpu_request": json_number(spec.cpu_request),
        "memory_request_bytes": spec.memory_request_bytes,
        "input_files": [{"path": f.path, "size_bytes": f.size_bytes} for f in spec.input_files],
        "parameters": dict(spec.parameters),
        "depends_on": list(spec.depends_on),
    }


def task_spec_from_wire(raw: dict) -> TaskSpec:
    _require(raw, "task_id", "process_name", "cpu_request", "memory_request_bytes")
    files = []
    for entry in raw.get("input_files", []):
        _require(entry, "path", "size_bytes")
        files.append(InputFile(path=str(entry["path"]), size_bytes=int(entry["size_bytes"])))
    params = raw.get("parameters", {})
    if not isinstance(params, dict):
        raise ValidationError(f"task {raw['task_id']}: parameters must be an object")
    return TaskSpec(
        task_id=str(raw["task_id"]),
        process_name=str(raw["process_name"]),
        cpu_request=as_fraction(raw["cpu_request"]),
        memory_request_bytes=int(raw["memory_request_bytes"]),
        input_files=tuple(files),
        parameters={str(k): str(v) for k, v in params.items()},
        depends_on=tuple(str(d) for d in raw.get("depends_on", [])),
    )


def assignment_to_wire(a: Assignment) -> dict:
    return {
        "task_id": a.task_id,
        "node_id": a.node_id,
        "memory_allocation_bytes": a.memory_allocation_bytes,
        "decision_sequence_number": a.sequence_number,
    }


def assignment_from_wire(raw: dict) -> Assignment:
    _require(raw, "task_id", "node_id", "memory_allocation_bytes", "decision_sequence_number")
    return Assignment(
        task_id=str(raw["task_id"]),
        node_id=str(raw["node_id"]),
        memory_allocation_bytes=int(raw["memory_allocation_bytes"]),
        sequence_number=int(raw["decision_sequence_number"]),
    )


@dataclass(frozen=True)
class EdgePatch:
    """Body of the DAG merge endpoint; both edge kinds optional."""

    physical_edges: tuple[tuple[str, str], ...] = ()
    abstract_edges: tuple[tuple[str, str], ...] = ()

    def to_wire(self) -> dict:
        return {
            "physical_edges": [[a, b] for a, b in self.physical_edges],
            "abstract_edges": [[a, b] for a, b in self.abstract_edges],
        }

    @classmethod
    def from_wire(cls, raw: dict) -> "EdgePatch":
        def pairs(key):
            out = []
            for entry in raw.get(key) or []:
                if not isinstance(entry, (list, tuple)) or len(entry) != 2:
                    raise ValidationError(f"{key} entries must be [from, to] pairs")
                out.append((str(entry[0]), str(entry[1])))
            return tuple(out)

        return cls(physical_edges=pairs("physical_edges"), abstract_edges=pairs("abstract_edges"))


def _require(raw: dict, *keys: str) -> None:
    missing = [k for k in keys if k not in raw]
    if missing:
        raise ValidationError(f"missing required field(s): {', '.join(missing)}")
