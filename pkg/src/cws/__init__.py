"""Common workflow scheduler: workflow-aware placement behind one interface.

Engines register a workflow, submit tasks with dependencies and resource
requests, poll for assignments, and report outcomes; the scheduler keeps
the DAG, picks nodes per the configured strategy, learns runtimes and
memory peaks online, and records everything in a provenance store. A
deterministic cluster simulator and a benchmark CLI reproduce strategy
comparisons at desk scale.
"""

from cws.cluster import ClusterDef, NodeState
from cws.model import InputFile, TaskSpec, TaskState, WorkflowDag, compute_ranks, weighted_ranks
from cws.service import CwsService
from cws.sim import Simulation, drive_live_server, run_simulation
from cws.strategies import STRATEGY_NAMES, Assignment
from cws.workload import WorkloadDef, generate_workload, load_workload

__version__ = "0.1.0"

__all__ = [
    "Assignment",
    "ClusterDef",
    "CwsService",
    "InputFile",
    "NodeState",
    "STRATEGY_NAMES",
    "Simulation",
    "TaskSpec",
    "TaskState",
    "WorkflowDag",
    "WorkloadDef",
    "compute_ranks",
    "drive_live_server",
    "generate_workload",
    "load_workload",
    "run_simulation",
    "weighted_ranks",
    "__version__",
]
