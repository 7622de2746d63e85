"""Centralized append-only trace of everything the scheduler sees.

Records are immutable once appended and carry strictly increasing ids.
Export is newline-delimited JSON with record_id as the first key on each
line, bit-stable for a sealed workflow; re-importing yields equal records.
Timestamps are strings, flagged "wall" (ISO-8601 UTC) or "simulated"
(exact rational seconds, e.g. "30" or "20/3").
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from pathlib import Path
from statistics import median

from cws.errors import NotFoundError, ValidationError

EVENT_KINDS = (
    "REGISTERED",
    "SUBMITTED",
    "READY",
    "ASSIGNED",
    "STARTED",
    "SUCCEEDED",
    "FAILED",
    "RESUBMITTED",
    "DECISION",
)

# payload keys that must be present for the event to be accepted
_REQUIRED_PAYLOAD = {
    "SUBMITTED": ("task",),
    "ASSIGNED": ("node_id", "memory_allocation_bytes"),
    "SUCCEEDED": ("metrics",),
    "DECISION": ("node_id", "strategy", "sequence_number"),
}


@dataclass(frozen=True)
class TraceRecord:
    record_id: int
    ts: str
    clock: str  # "wall" | "simulated"
    workflow_id: str
    event_kind: str
    task_id: str | None = None
    payload: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        # record_id first; payload keys sorted for byte-stable export
        return {
            "record_id": self.record_id,
            "ts": self.ts,
            "clock": self.clock,
            "workflow_id": self.workflow_id,
            "event_kind": self.event_kind,
            "task_id": self.task_id,
            "payload": _sort_deep(self.payload),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "TraceRecord":
        return cls(
            record_id=int(raw["record_id"]),
            ts=raw["ts"],
            clock=raw["clock"],
            workflow_id=raw["workflow_id"],
            event_kind=raw["event_kind"],
            task_id=raw.get("task_id"),
            payload=raw.get("payload", {}),
        )


def _sort_deep(obj):
    if isinstance(obj, dict):
        return {k: _sort_deep(obj[k]) for k in sorted(obj)}
    if isinstance(obj, (list, tuple)):
        return [_sort_deep(v) for v in obj]
    return obj


class ProvenanceStore:
    """Single appender queue, many readers; queries see a consistent prefix."""

    def __init__(self, persist_dir: str | Path | None = None):
        self._records: list[TraceRecord] = []
        self._lock = threading.Lock()
        self._persist_dir = Path(persist_dir) if persist_dir else None
        if self._persist_dir:
            self._persist_dir.mkdir(parents=True, exist_ok=True)

    def append(
        self,
        *,
        ts: str,
        clock: str,
        workflow_id: str,
        event_kind: str,
        task_id: str | None = None,
        payload: dict | None = None,
    ) -> int:
        if event_kind not in EVENT_KINDS:
            raise ValidationError(f"unknown event kind {event_kind!r}")
        if clock not in ("wall", "simulated"):
            raise ValidationError(f"clock must be wall or simulated, got {clock!r}")
        payload = payload or {}
        for key in _REQUIRED_PAYLOAD.get(event_kind, ()):
            if key not in payload:
                raise ValidationError(f"{event_kind} record requires payload key {key!r}")
        with self._lock:
            record = TraceRecord(
                record_id=len(self._records) + 1,
                ts=ts,
                clock=clock,
                workflow_id=workflow_id,
                event_kind=event_kind,
                task_id=task_id,
                payload=payload,
            )
            self._records.append(record)
            if self._persist_dir:
                line = json.dumps(record.to_dict(), separators=(",", ":"), ensure_ascii=False)
                path = self._persist_dir / f"{workflow_id}.ndjson"
                with path.open("a", encoding="utf-8") as fh:
                    fh.write(line + "\n")
            return record.record_id

    def query(
        self,
        workflow_id: str | None = None,
        process_name: str | None = None,
        event_kind: str | None = None,
        ts_range: tuple[float, float] | None = None,
    ) -> list[TraceRecord]:
        with self._lock:
            snapshot = list(self._records)
        out = []
        for r in snapshot:
            if workflow_id is not None and r.workflow_id != workflow_id:
                continue
            if event_kind is not None and r.event_kind != event_kind:
                continue
            if process_name is not None and r.payload.get("process_name") != process_name:
                continue
            if ts_range is not None:
                t = _ts_seconds(r)
                if t is None or not (ts_range[0] <= t <= ts_range[1]):
                    continue
            out.append(r)
        return out

    def export_trace(self, workflow_id: str, destination: str | Path) -> int:
        records = self.query(workflow_id=workflow_id)
        if not records:
            raise NotFoundError(f"no trace for workflow {workflow_id!r}")
        path = Path(destination)
        try:
            with path.open("w", encoding="utf-8") as fh:
                for r in records:
                    fh.write(json.dumps(r.to_dict(), separators=(",", ":"), ensure_ascii=False) + "\n")
        except OSError as exc:
            raise ValidationError(f"cannot write export to {destination}: {exc}") from exc
        return len(records)

    def aggregate_stats(self, process_name: str) -> dict | None:
        """Medians over SUCCEEDED records for one process; None when no data."""
        rows = [
            r.payload["metrics"]
            for r in self.query(event_kind="SUCCEEDED")
            if r.payload.get("process_name") == process_name
        ]
        if not rows:
            return None
        return {
            "n": len(rows),
            "median_wall_time_s": median(m["wall_time_s"] for m in rows),
            "median_peak_memory_bytes": median(m["peak_memory_bytes"] for m in rows),
            "median_input_bytes": median(m["input_bytes_total"] for m in rows),
        }


def import_trace(source: str | Path) -> list[TraceRecord]:
    records = []
    with Path(source).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(TraceRecord.from_dict(json.loads(line)))
    return records


def _ts_seconds(record: TraceRecord) -> float | None:
    """Best-effort numeric timestamp for range filters."""
    from fractions import Fraction

    if record.clock == "simulated":
        try:
            return float(Fraction(record.ts))
        except (ValueError, ZeroDivisionError):
            return None
    from datetime import datetime

    try:
        return datetime.fromisoformat(record.ts.replace("Z", "+00:00")).timestamp()
    except ValueError:
        return None
