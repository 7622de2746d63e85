"""Bundled desk-scale fixtures: workloads and cluster definitions."""

from pathlib import Path

_ROOT = Path(__file__).parent


def workload_path(name: str) -> Path:
    return _ROOT / "workloads" / f"{name}.json"


def cluster_path(name: str) -> Path:
    return _ROOT / "clusters" / f"{name}.json"


def workloads_dir() -> Path:
    return _ROOT / "workloads"
