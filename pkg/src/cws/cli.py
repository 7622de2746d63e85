"""Command line: serve the scheduler, run benchmarks, generate workloads.

Exit codes: 0 success, 2 validation error, 3 transport error, 4 internal
invariant violation.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from cws.bench import baseline_deltas, format_delta_table, run_experiment, write_csv
from cws.cluster import ClusterDef
from cws.config import DEFAULT_PORT, CwsConfig
from cws.errors import AuthError, ConflictError, CwsError, NotFoundError, TransportError, ValidationError
from cws.provenance import ProvenanceStore
from cws.sim import drive_live_server, run_simulation
from cws.strategies import STRATEGY_NAMES
from cws.workload import SHAPES, generate_workload, load_workload, save_workload

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_TRANSPORT = 3
EXIT_INTERNAL = 4

logger = logging.getLogger("cws")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValidationError, NotFoundError, ConflictError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (TransportError, AuthError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except CwsError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cws", description="common workflow scheduler")
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the scheduler HTTP service")
    serve.add_argument("--port", type=int, default=None, help="listen port (overrides CWS_PORT)")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--cluster", required=True, help="cluster definition JSON")
    serve.add_argument("--config", default=None, help="config file (JSON)")
    serve.add_argument("--poll-timeout-ms", type=int, default=None, help="long-poll timeout")
    serve.add_argument("--provenance-dir", default=None, help="persist trace records here")
    serve.add_argument("--token", default=None, help="bearer token (overrides CWS_TOKEN)")
    serve.set_defaults(func=cmd_serve)

    run = sub.add_parser("run", help="run one workload under one strategy")
    run.add_argument("--workload", required=True)
    run.add_argument("--cluster", required=True)
    run.add_argument("--strategy", required=True, choices=STRATEGY_NAMES)
    run.add_argument("--server", default=None, help="drive a live server instead of in-process")
    run.add_argument("--config", default=None)
    run.add_argument("--export-trace", default=None, help="write the provenance trace here (in-process only)")
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="strategy comparison over a workload directory")
    sweep.add_argument("--workloads", required=True, help="directory of workload JSON files")
    sweep.add_argument("--cluster", required=True)
    sweep.add_argument("--strategies", default=",".join(STRATEGY_NAMES), help="comma-separated names")
    sweep.add_argument("--repetitions", type=int, default=1)
    sweep.add_argument("--out", required=True, help="results CSV path")
    sweep.add_argument("--config", default=None)
    sweep.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    sweep.set_defaults(func=cmd_sweep)

    gen = sub.add_parser("gen", help="generate a synthetic workload")
    gen.add_argument("--shape", required=True, choices=SHAPES)
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--reveal-mode", default="FULL_DAG", choices=("FULL_DAG", "INCREMENTAL"))
    gen.add_argument("--out", default=None, help="output path (default: stdout)")
    gen.set_defaults(func=cmd_gen)

    export = sub.add_parser("export", help="export one workflow's provenance trace")
    export.add_argument("--workflow", required=True)
    export.add_argument("--provenance-dir", required=True, help="directory written by serve/run")
    export.add_argument("--out", required=True)
    export.set_defaults(func=cmd_export)

    return parser


def _load_config(path: str | None) -> CwsConfig:
    return CwsConfig.from_file(path) if path else CwsConfig()


def cmd_serve(args) -> int:
    from cws.server import CwsHttpServer
    from cws.service import CwsService

    port = args.port if args.port is not None else int(os.environ.get("CWS_PORT", DEFAULT_PORT))
    token = args.token if args.token is not None else os.environ.get("CWS_TOKEN", "")
    config = _load_config(args.config)
    if args.poll_timeout_ms is not None:
        config.poll_timeout_ms = args.poll_timeout_ms
    cluster = ClusterDef.from_file(args.cluster)
    provenance = ProvenanceStore(persist_dir=args.provenance_dir)
    service = CwsService(cluster, config=config, provenance=provenance)
    server = CwsHttpServer(service, host=args.host, port=port, bearer_token=token)
    print(f"cws listening on {server.url} ({len(cluster.nodes)} nodes, strategies: {', '.join(service.list_strategies())})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
    return EXIT_OK


def cmd_run(args) -> int:
    workload = load_workload(args.workload)
    cluster = ClusterDef.from_file(args.cluster)
    config = _load_config(args.config)
    if args.server:
        token = os.environ.get("CWS_TOKEN", "")
        result = drive_live_server(args.server, workload, cluster, args.strategy, bearer_token=token, config=config)
    else:
        result, service = run_simulation(cluster, workload, args.strategy, config=config)
        if args.export_trace:
            count = service.provenance.export_trace(workload.name, args.export_trace)
            print(f"exported {count} trace records to {args.export_trace}")
    print(
        f"workload={result.workload} strategy={result.strategy} "
        f"makespan_s={result.makespan_s} failed={result.failed} wastage={result.wastage:.4f}"
    )
    return EXIT_OK


def cmd_sweep(args) -> int:
    directory = Path(args.workloads)
    paths = sorted(directory.glob("*.json"))
    if not paths:
        raise ValidationError(f"no workload files in {directory}")
    workloads = [load_workload(p) for p in paths]
    cluster = ClusterDef.from_file(args.cluster)
    strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
    unknown = [s for s in strategies if s not in STRATEGY_NAMES]
    if unknown:
        raise ValidationError(f"unknown strategies: {', '.join(unknown)}")
    config = _load_config(args.config)
    rows = run_experiment(workloads, strategies, cluster, repetitions=args.repetitions, config=config)
    write_csv(rows, args.out)
    print(f"wrote {len(rows)} rows to {args.out}")
    deltas = baseline_deltas(rows)
    if deltas:
        print(format_delta_table(deltas))
    if not args.no_figures:
        from cws.report import render_figures

        for path in render_figures(rows, args.out):
            print(f"wrote figure {path}")
    return EXIT_OK


def cmd_gen(args) -> int:
    workload = generate_workload(args.shape, args.n, args.seed, reveal_mode=args.reveal_mode)
    if args.out:
        save_workload(workload, args.out)
        print(f"wrote {len(workload.tasks)} tasks to {args.out}")
    else:
        import json

        print(json.dumps(workload.to_dict(), indent=2))
    return EXIT_OK


def cmd_export(args) -> int:
    source = Path(args.provenance_dir) / f"{args.workflow}.ndjson"
    if not source.exists():
        raise NotFoundError(f"no persisted trace for workflow {args.workflow!r} in {args.provenance_dir}")
    data = source.read_text(encoding="utf-8")
    Path(args.out).write_text(data, encoding="utf-8")
    count = sum(1 for line in data.splitlines() if line.strip())
    print(f"exported {count} trace records to {args.out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
