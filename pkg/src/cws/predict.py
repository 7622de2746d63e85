"""Online task runtime and memory predictors.

Runtime: per-process Bayesian linear regression on (intercept, input GiB)
with known noise precision beta and isotropic Gaussian prior of precision
alpha. Observed wall times are normalized to the reference machine by the
node's speed factor before updating, and predictions are scaled back by
the queried node's factor, so node choice never changes the argmax.

Memory: record observed peaks per process; once enough history exists,
provision safety_factor x the max observed peak instead of the engine's
request. Out-of-memory failures double the allocation up to a retry cap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from cws.config import MemoryConfig, PredictorConfig
from cws.errors import NotFoundError, ValidationError

FEATURE_SCALE = 2 ** 30  # input bytes expressed in GiB
MIN_PREDICTED_RUNTIME_S = 1.0
MIN_WARM_OBSERVATIONS = 2  # below this, predict() returns the default
MIN_MEMORY_OBSERVATIONS = 3  # below this, allocation = engine request


class NodeFactors:
    """Node speed factors relative to the reference machine (score 1000)."""

    def __init__(self):
        self._factors: dict[str, Fraction] = {}

    def register(self, node_id: str, bench_score: Fraction) -> None:
        if bench_score <= 0:
            raise ValidationError(f"node {node_id}: bench_score must be > 0")
        self._factors[node_id] = Fraction(bench_score) / 1000

    def factor(self, node_id: str) -> Fraction:
        if node_id not in self._factors:
            raise NotFoundError(f"unknown node {node_id!r}")
        return self._factors[node_id]

    def factor_or_reference(self, node_id: str | None) -> Fraction:
        """Total lookup for prediction paths; unknown nodes read as reference speed."""
        if node_id is None:
            return Fraction(1)
        return self._factors.get(node_id, Fraction(1))


@dataclass
class RegressionState:
    """Conjugate posterior over (intercept, seconds-per-GiB) weights."""

    precision: np.ndarray  # 2x2, starts at alpha * I
    moment: np.ndarray  # running beta * sum(x * y); posterior mean solves precision @ m = moment
    mean: np.ndarray
    n: int = 0


class RuntimeModel:
    def __init__(self, factors: NodeFactors, config: PredictorConfig | None = None):
        self.factors = factors
        self.config = config or PredictorConfig()
        self._states: dict[str, RegressionState] = {}

    def _fresh(self) -> RegressionState:
        alpha = self.config.alpha
        return RegressionState(
            precision=alpha * np.eye(2),
            moment=np.zeros(2),
            mean=np.zeros(2),
        )

    def state(self, process_name: str) -> RegressionState | None:
        return self._states.get(process_name)

    def observe(self, process_name: str, input_bytes: int, node_id: str, wall_time_s: float) -> RegressionState:
        """Fold one finished execution into the process posterior.

        The target is reference time y = wall * factor(node); the update is
        P <- P + beta x x', m <- P^-1 (P_old m_old + beta x y).
        """
        if wall_time_s <= 0:
            raise ValidationError(f"wall_time_s must be > 0, got {wall_time_s}")
        factor = self.factors.factor(node_id)
        y = float(wall_time_s) * float(factor)
        x = np.array([1.0, input_bytes / FEATURE_SCALE])
        st = self._states.setdefault(process_name, self._fresh())
        beta = self.config.beta
        st.precision = st.precision + beta * np.outer(x, x)
        st.moment = st.moment + beta * x * y
        st.mean = np.linalg.solve(st.precision, st.moment)
        st.n += 1
        return st

    def predict(self, process_name: str, input_bytes: int, node_id: str | None = None) -> tuple[float, float]:
        """(mean seconds, std seconds) on the given node; total function.

        Cold processes (fewer than two observations) fall back to the
        configured default runtime with std equal to the mean.
        """
        factor = float(self.factors.factor_or_reference(node_id))
        st = self._states.get(process_name)
        if st is None or st.n < MIN_WARM_OBSERVATIONS:
            mean = self.config.default_runtime_s / factor
            return mean, mean
        x = np.array([1.0, input_bytes / FEATURE_SCALE])
        ref_mean = float(st.mean @ x)
        ref_var = 1.0 / self.config.beta + float(x @ np.linalg.solve(st.precision, x))
        mean = max(ref_mean / factor, MIN_PREDICTED_RUNTIME_S)
        return mean, math.sqrt(ref_var) / factor


@dataclass
class MemoryModel:
    """Peak-memory history per process, plus the OOM retry policy."""

    config: MemoryConfig = field(default_factory=MemoryConfig)
    peaks: dict[str, list[int]] = field(default_factory=dict)

    def observe_peak(self, process_name: str, peak_bytes: int) -> None:
        if peak_bytes <= 0:
            raise ValidationError(f"peak_bytes must be > 0, got {peak_bytes}")
        self.peaks.setdefault(process_name, []).append(int(peak_bytes))

    def observation_count(self, process_name: str) -> int:
        return len(self.peaks.get(process_name, ()))

    def initial_allocation(self, process_name: str, memory_request_bytes: int, max_node_capacity: int) -> int:
        """First-attempt allocation; may undercut the request once history exists."""
        if memory_request_bytes <= 0:
            raise ValidationError("memory_request must be > 0")
        history = self.peaks.get(process_name, ())
        if len(history) < MIN_MEMORY_OBSERVATIONS:
            return memory_request_bytes
        predicted = int(math.ceil(self.config.safety_factor * max(history)))
        predicted = max(predicted, self.config.floor_bytes)
        return min(predicted, max_node_capacity)

    def on_oom(self, process_name: str, previous_allocation: int, oom_count: int, max_node_capacity: int) -> int | None:
        """Doubled allocation for the retry, or None when the task must fail.

        oom_count is the number of OOM failures including this one; the
        failed allocation is recorded as an observed peak (it is a lower
        bound on the true peak) so future initial allocations rise.
        """
        self.observe_peak(process_name, previous_allocation)
        if oom_count >= self.config.doubling_cap:
            return None
        doubled = previous_allocation * 2
        if doubled > max_node_capacity:
            return None
        return doubled


@dataclass(frozen=True)
class Attempt:
    """One execution attempt as seen in the trace: what was held, what was used."""

    process_name: str
    allocation_bytes: int
    peak_bytes: int
    wall_time_s: float


@dataclass(frozen=True)
class WastageRow:
    process_name: str
    allocated_byte_seconds: float
    used_byte_seconds: float

    @property
    def wastage(self) -> float:
        if self.allocated_byte_seconds == 0:
            return 0.0
        return 1.0 - self.used_byte_seconds / self.allocated_byte_seconds


def wastage_report(attempts: list[Attempt]) -> list[WastageRow]:
    """Per-process allocated vs used byte-seconds under a constant-usage model.

    Every attempt counts, including failed ones: an OOM attempt held its
    allocation for its whole (short) lifetime.
    """
    allocated: dict[str, float] = {}
    used: dict[str, float] = {}
    for a in attempts:
        allocated[a.process_name] = allocated.get(a.process_name, 0.0) + a.allocation_bytes * a.wall_time_s
        used[a.process_name] = used.get(a.process_name, 0.0) + min(a.peak_bytes, a.allocation_bytes) * a.wall_time_s
    return [
        WastageRow(process_name=p, allocated_byte_seconds=allocated[p], used_byte_seconds=used[p])
        for p in sorted(allocated)
    ]


def total_wastage(rows: list[WastageRow]) -> float:
    allocated = sum(r.allocated_byte_seconds for r in rows)
    used = sum(r.used_byte_seconds for r in rows)
    if allocated == 0:
        return 0.0
    return 1.0 - used / allocated
