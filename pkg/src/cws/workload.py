"""Workload files: task definitions plus simulator-only ground truth.

The JSON format keeps true runtimes and peaks in a "sim_truth" sub-object
that the engine client strips before submission, so the scheduler can
never read them. reveal_mode selects how the synthetic engine submits:
FULL_DAG sends every task up front, INCREMENTAL sends tasks as their
predecessors finish.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from cws.cluster import as_fraction, json_number
from cws.config import GIB, MIB
from cws.errors import ValidationError
from cws.model import InputFile, TaskSpec, WorkflowDag
from cws.protocol import task_spec_from_wire, task_spec_to_wire

REVEAL_MODES = ("FULL_DAG", "INCREMENTAL")
SHAPES = ("chain", "fork_join", "diamond_mesh")


@dataclass(frozen=True)
class SimTruth:
    """Ground truth the scheduler must not see."""

    runtime_s: Fraction
    peak_memory_bytes: int
    outputs: tuple[InputFile, ...] = ()

    def __post_init__(self):
        if self.runtime_s <= 0:
            raise ValidationError("sim_truth runtime must be > 0")
        if self.peak_memory_bytes <= 0:
            raise ValidationError("sim_truth peak memory must be > 0")


@dataclass(frozen=True)
class WorkloadTask:
    spec: TaskSpec
    truth: SimTruth


@dataclass
class WorkloadDef:
    name: str
    tasks: list[WorkloadTask]  # file order doubles as submission order
    reveal_mode: str = "FULL_DAG"

    def __post_init__(self):
        if self.reveal_mode not in REVEAL_MODES:
            raise ValidationError(f"reveal_mode must be one of {REVEAL_MODES}, got {self.reveal_mode!r}")
        self.validate()

    def validate(self) -> None:
        """Cycle check via a throwaway DAG, plus input-producer sanity."""
        dag = WorkflowDag(self.name or "workload")
        dag.add_tasks([t.spec for t in self.tasks])
        producers: dict[str, str] = {}
        for t in self.tasks:
            for out in t.truth.outputs:
                producers[out.path] = t.spec.task_id
        ancestors = _ancestor_map(dag)
        for t in self.tasks:
            for f in t.spec.input_files:
                producer = producers.get(f.path)
                if producer is not None and producer not in ancestors[t.spec.task_id]:
                    raise ValidationError(
                        f"task {t.spec.task_id}: input {f.path!r} is produced by "
                        f"non-predecessor {producer!r}"
                    )

    @property
    def task_ids(self) -> list[str]:
        return [t.spec.task_id for t in self.tasks]

    def truth_of(self, task_id: str) -> SimTruth:
        for t in self.tasks:
            if t.spec.task_id == task_id:
                return t.truth
        raise ValidationError(f"unknown task {task_id!r}")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "reveal_mode": self.reveal_mode,
            "tasks": [
                {
                    **task_spec_to_wire(t.spec),
                    "sim_truth": {
                        "runtime_s": json_number(t.truth.runtime_s),
                        "peak_memory_bytes": t.truth.peak_memory_bytes,
                        "outputs": [{"path": f.path, "size_bytes": f.size_bytes} for f in t.truth.outputs],
                    },
                }
                for t in self.tasks
            ],
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "WorkloadDef":
        if not isinstance(raw, dict) or "tasks" not in raw:
            raise ValidationError("workload needs a 'tasks' list")
        tasks = []
        for entry in raw["tasks"]:
            truth_raw = entry.get("sim_truth")
            if truth_raw is None:
                raise ValidationError(f"task {entry.get('task_id')!r}: missing sim_truth")
            spec = task_spec_from_wire({k: v for k, v in entry.items() if k != "sim_truth"})
            outputs = tuple(
                InputFile(path=str(o["path"]), size_bytes=int(o["size_bytes"]))
                for o in truth_raw.get("outputs", [])
            )
            truth = SimTruth(
                runtime_s=as_fraction(truth_raw["runtime_s"]),
                peak_memory_bytes=int(truth_raw["peak_memory_bytes"]),
                outputs=outputs,
            )
            tasks.append(WorkloadTask(spec=spec, truth=truth))
        return cls(
            name=str(raw.get("name", "workload")),
            tasks=tasks,
            reveal_mode=str(raw.get("reveal_mode", "FULL_DAG")),
        )


def load_workload(path: str | Path) -> WorkloadDef:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: line {exc.lineno} col {exc.colno}: {exc.msg}") from exc
    except OSError as exc:
        raise ValidationError(f"cannot read workload {path}: {exc}") from exc
    wl = WorkloadDef.from_dict(raw)
    if not wl.name or wl.name == "workload":
        wl.name = Path(path).stem
    return wl


def save_workload(wl: WorkloadDef, path: str | Path) -> None:
    Path(path).write_text(json.dumps(wl.to_dict(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def _ancestor_map(dag: WorkflowDag) -> dict[str, set[str]]:
    ancestors: dict[str, set[str]] = {}

    def visit(tid: str) -> set[str]:
        if tid in ancestors:
            return ancestors[tid]
        acc: set[str] = set()
        for p in dag.predecessors(tid):
            acc.add(p)
            acc |= visit(p)
        ancestors[tid] = acc
        return acc

    for tid in dag.tasks:
        visit(tid)
    return ancestors


# --------------------------------------------------------------- generator

_RUNTIME_RANGE_S = (10.0, 600.0)
_PEAK_RANGE_BYTES = (256 * MIB, 8 * GIB)
_REQUEST_HEADROOM = 1.4  # request above true peak so cold runs do not OOM
_INPUT_BYTES_PER_SECOND = 16 * MIB  # input size tracks runtime


def generate_workload(shape: str, n_tasks: int, seed: int, reveal_mode: str = "FULL_DAG") -> WorkloadDef:
    """Deterministic synthetic workload; same arguments, same workload."""
    if shape not in SHAPES:
        raise ValidationError(f"unknown shape {shape!r}; valid: {', '.join(SHAPES)}")
    if n_tasks < 1:
        raise ValidationError("n_tasks must be >= 1")
    rng = random.Random(seed)
    name = f"{shape}_{n_tasks}_s{seed}"
    if shape == "chain":
        layers = [[i] for i in range(n_tasks)]
        process_of_layer = [f"stage_{i:02d}" for i in range(n_tasks)]
    elif shape == "fork_join":
        if n_tasks < 3:
            layers = [[i] for i in range(n_tasks)]
            process_of_layer = [f"stage_{i:02d}" for i in range(n_tasks)]
        else:
            layers = [[0], list(range(1, n_tasks - 1)), [n_tasks - 1]]
            process_of_layer = ["scatter", "work", "gather"]
    else:  # diamond_mesh: source, mesh layers of width 4, sink
        width = 4
        mid = max(n_tasks - 2, 0)
        layers = [[0]]
        next_id = 1
        while mid > 0:
            take = min(width, mid)
            layers.append(list(range(next_id, next_id + take)))
            next_id += take
            mid -= take
        if n_tasks >= 2:
            layers.append([n_tasks - 1])
        process_of_layer = [f"layer_{i:02d}" for i in range(len(layers))]

    base_runtime = {
        p: math.exp(rng.uniform(math.log(_RUNTIME_RANGE_S[0]), math.log(_RUNTIME_RANGE_S[1])))
        for p in process_of_layer
    }
    base_peak = {
        p: math.exp(rng.uniform(math.log(_PEAK_RANGE_BYTES[0]), math.log(_PEAK_RANGE_BYTES[1])))
        for p in process_of_layer
    }
    base_cpu = {p: rng.choice([1, 1, 2]) for p in process_of_layer}

    tasks: list[WorkloadTask] = []
    for li, layer in enumerate(layers):
        process = process_of_layer[li]
        deps = [f"t{j:03d}" for j in layers[li - 1]] if li > 0 else []
        for i in layer:
            tid = f"t{i:03d}"
            runtime = round(base_runtime[process] * rng.uniform(0.8, 1.25), 3)
            peak = int(base_peak[process] * rng.uniform(0.8, 1.25))
            input_size = int(runtime * _INPUT_BYTES_PER_SECOND * rng.uniform(0.75, 1.33))
            spec = TaskSpec(
                task_id=tid,
                process_name=process,
                cpu_request=Fraction(base_cpu[process]),
                memory_request_bytes=int(peak * _REQUEST_HEADROOM),
                input_files=(InputFile(path=f"/data/{name}/{tid}.in", size_bytes=input_size),),
                parameters={"shape": shape},
                depends_on=tuple(deps),
            )
            truth = SimTruth(
                runtime_s=Fraction(str(runtime)),
                peak_memory_bytes=peak,
                outputs=(InputFile(path=f"/data/{name}/{tid}.out", size_bytes=max(input_size // 4, 1)),),
            )
            tasks.append(WorkloadTask(spec=spec, truth=truth))
    return WorkloadDef(name=name, tasks=tasks, reveal_mode=reveal_mode)
