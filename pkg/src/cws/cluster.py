"""Node state and cluster definition files.

The scheduler sees nodes through NodeState: capacities, free resources,
file paths known to be present, and a benchmark speed score (reference
machine = 1000, factor = score / 1000). Free-resource arithmetic uses
exact rationals for CPU so replayed assignment logs are bit-stable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from cws.errors import ValidationError

REFERENCE_BENCH_SCORE = 1000


def as_fraction(value) -> Fraction:
    """Exact rational from a JSON number (via its decimal literal) or Fraction."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool) or value is None:
        raise ValidationError(f"expected a number, got {value!r}")
    return Fraction(str(value))


def json_number(value: Fraction):
    """Emit an int when exact, else the float the decimal literal came from."""
    if value.denominator == 1:
        return int(value)
    return float(value)


@dataclass
class NodeState:
    node_id: str
    cpu_capacity: Fraction
    memory_capacity: int
    bench_score: Fraction
    cpu_free: Fraction = None  # type: ignore[assignment]
    memory_free: int = None  # type: ignore[assignment]
    stored_files: set[str] = field(default_factory=set)

    def __post_init__(self):
        if not self.node_id:
            raise ValidationError("node_id must be non-empty")
        if self.cpu_capacity <= 0 or self.memory_capacity <= 0:
            raise ValidationError(f"node {self.node_id}: capacities must be > 0")
        if self.bench_score <= 0:
            raise ValidationError(f"node {self.node_id}: bench_score must be > 0")
        if self.cpu_free is None:
            self.cpu_free = self.cpu_capacity
        if self.memory_free is None:
            self.memory_free = self.memory_capacity

    @property
    def factor(self) -> Fraction:
        return self.bench_score / REFERENCE_BENCH_SCORE

    def fits(self, cpu: Fraction, memory_bytes: int) -> bool:
        return self.cpu_free >= cpu and self.memory_free >= memory_bytes

    def debit(self, cpu: Fraction, memory_bytes: int) -> None:
        if not self.fits(cpu, memory_bytes):
            raise ValidationError(f"node {self.node_id}: over-commit ({cpu} cores, {memory_bytes} B)")
        self.cpu_free -= cpu
        self.memory_free -= memory_bytes

    def credit(self, cpu: Fraction, memory_bytes: int) -> None:
        self.cpu_free += cpu
        self.memory_free += memory_bytes
        if self.cpu_free > self.cpu_capacity or self.memory_free > self.memory_capacity:
            raise ValidationError(f"node {self.node_id}: freed beyond capacity")


@dataclass
class ClusterDef:
    """Parsed cluster definition: ordered node list plus the experiment seed."""

    nodes: list[NodeState]
    rng_seed: int = 0

    def __post_init__(self):
        if not self.nodes:
            raise ValidationError("cluster must define at least one node")
        ids = [n.node_id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate node_ids in cluster definition")

    @property
    def max_memory_capacity(self) -> int:
        return max(n.memory_capacity for n in self.nodes)

    @property
    def max_cpu_capacity(self) -> Fraction:
        return max(n.cpu_capacity for n in self.nodes)

    @property
    def max_factor(self) -> Fraction:
        return max(n.factor for n in self.nodes)

    def fresh_nodes(self) -> list[NodeState]:
        """Independent NodeState copies at full capacity (for replay/simulation)."""
        return [
            NodeState(
                node_id=n.node_id,
                cpu_capacity=n.cpu_capacity,
                memory_capacity=n.memory_capacity,
                bench_score=n.bench_score,
            )
            for n in self.nodes
        ]

    @classmethod
    def from_file(cls, path: str | Path) -> "ClusterDef":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read cluster file {path}: {exc}") from exc
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw: dict) -> "ClusterDef":
        if not isinstance(raw, dict) or "nodes" not in raw:
            raise ValidationError("cluster definition needs a 'nodes' list")
        nodes = []
        for entry in raw["nodes"]:
            try:
                nodes.append(
                    NodeState(
                        node_id=entry["node_id"],
                        cpu_capacity=as_fraction(entry["cpu"]),
                        memory_capacity=int(entry["memory_bytes"]),
                        bench_score=as_fraction(entry["bench_score"]),
                    )
                )
            except KeyError as exc:
                raise ValidationError(f"node entry missing field {exc}") from exc
        return cls(nodes=nodes, rng_seed=int(raw.get("seed", 0)))

    def to_dict(self) -> dict:
        return {
            "nodes": [
                {
                    "node_id": n.node_id,
                    "cpu": json_number(n.cpu_capacity),
                    "memory_bytes": n.memory_capacity,
                    "bench_score": json_number(n.bench_score),
                }
                for n in self.nodes
            ],
            "seed": self.rng_seed,
        }
