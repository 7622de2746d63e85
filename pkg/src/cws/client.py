"""Engine-side clients for the scheduler interface.

Both clients accept wire-shaped dicts and return the same types, so the
benchmark driver is transport-agnostic and the in-process and HTTP paths
make byte-identical decisions. The HTTP client retries transport
failures a fixed number of times before surfacing them.
"""

from __future__ import annotations

import http.client
import json
import time
from urllib.parse import urlparse

from cws.errors import AuthError, ConflictError, CwsError, NotFoundError, TransportError, UnknownStrategyError, ValidationError
from cws.protocol import (
    RegisterRequest,
    StatusReport,
    assignment_from_wire,
    canonical_json,
    task_spec_from_wire,
)
from cws.service import CwsService
from cws.strategies import Assignment

_ERROR_CLASSES = {
    "validation": ValidationError,
    "cycle": ValidationError,
    "conflict": ConflictError,
    "illegal_transition": ConflictError,
    "not_found": NotFoundError,
    "unknown_strategy": ValidationError,
    "auth": AuthError,
}


class LocalEngineClient:
    """Direct calls into a CwsService, through the same codecs as the wire."""

    def __init__(self, service: CwsService, workflow_id: str):
        self.service = service
        self.workflow_id = workflow_id

    def register(self, strategy: str, engine_name: str = "bench", dag_hint=()) -> str:
        return self.service.register_workflow(
            RegisterRequest(
                workflow_id=self.workflow_id,
                strategy=strategy,
                engine_name=engine_name,
                dag_hint=tuple(dag_hint),
            )
        )

    def submit(self, wire_tasks: list[dict]) -> int:
        specs = [task_spec_from_wire(t) for t in wire_tasks]
        return self.service.submit_tasks(self.workflow_id, specs)

    def push_edges(self, physical=(), abstract=()) -> None:
        self.service.push_dag_edges(self.workflow_id, physical=list(physical), abstract=list(abstract))

    def fetch(self, after_sequence: int, wait: bool = False) -> list[Assignment]:
        return self.service.fetch_assignments(self.workflow_id, after_sequence, wait)

    def report(self, report: StatusReport) -> dict:
        return self.service.report_status(self.workflow_id, report)

    def close(self) -> dict:
        return self.service.close_workflow(self.workflow_id)

    def strategies(self) -> list[str]:
        return self.service.list_strategies()


class HttpEngineClient:
    """Speaks the versioned HTTP interface with bearer auth and retries."""

    def __init__(self, base_url: str, workflow_id: str, bearer_token: str = "", retries: int = 3, timeout_s: float = 60.0):
        parsed = urlparse(base_url)
        if parsed.scheme != "http" or not parsed.hostname:
            raise ValidationError(f"unsupported server url {base_url!r}")
        self.host = parsed.hostname
        self.port = parsed.port or 80
        self.workflow_id = workflow_id
        self.bearer_token = bearer_token
        self.retries = retries
        self.timeout_s = timeout_s
        self._conn: http.client.HTTPConnection | None = None

    # ------------------------------------------------------------ transport

    def _request(self, method: str, path: str, body: dict | None = None) -> dict:
        payload = canonical_json(body) if body is not None else b""
        headers = {"Content-Type": "application/json", "Content-Length": str(len(payload))}
        if self.bearer_token:
            headers["Authorization"] = f"Bearer {self.bearer_token}"
        last_error = None
        for attempt in range(1, self.retries + 1):
            try:
                if self._conn is None:
                    self._conn = http.client.HTTPConnection(self.host, self.port, timeout=self.timeout_s)
                self._conn.request(method, path, body=payload, headers=headers)
                response = self._conn.getresponse()
                data = response.read()
                return self._decode(response.status, data)
            except (ConnectionError, http.client.HTTPException, OSError) as exc:
                last_error = exc
                self._conn = None
                time.sleep(0.05 * attempt)
        raise TransportError(f"cannot reach {self.host}:{self.port}: {last_error}", attempts=self.retries)

    def _decode(self, status: int, data: bytes) -> dict:
        try:
            body = json.loads(data.decode("utf-8")) if data else {}
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise TransportError(f"malformed response body: {exc}", attempts=1) from exc
        if status >= 400:
            kind = body.get("error", "internal")
            detail = body.get("detail", f"HTTP {status}")
            exc_class = _ERROR_CLASSES.get(kind, CwsError)
            if exc_class is ValidationError and kind == "unknown_strategy":
                raise UnknownStrategyError(detail, [])
            raise exc_class(detail)
        return body

    def close_connection(self) -> None:
        if self._conn is not None:
            self._conn.close()
            self._conn = None

    # ------------------------------------------------------------- protocol

    def register(self, strategy: str, engine_name: str = "bench", dag_hint=()) -> str:
        request = RegisterRequest(
            workflow_id=self.workflow_id, strategy=strategy, engine_name=engine_name, dag_hint=tuple(dag_hint)
        )
        body = self._request("POST", "/v1/workflow", request.to_wire())
        return body["token"]

    def submit(self, wire_tasks: list[dict]) -> int:
        body = self._request("POST", f"/v1/workflow/{self.workflow_id}/tasks", {"tasks": wire_tasks})
        return int(body["accepted"])

    def push_edges(self, physical=(), abstract=()) -> None:
        self._request(
            "PATCH",
            f"/v1/workflow/{self.workflow_id}/dag",
            {
                "physical_edges": [[a, b] for a, b in physical],
                "abstract_edges": [[a, b] for a, b in abstract],
            },
        )

    def fetch(self, after_sequence: int, wait: bool = False) -> list[Assignment]:
        wait_str = "true" if wait else "false"
        body = self._request(
            "GET", f"/v1/workflow/{self.workflow_id}/assignments?after={after_sequence}&wait={wait_str}"
        )
        return [assignment_from_wire(a) for a in body["assignments"]]

    def report(self, report: StatusReport) -> dict:
        wire = report.to_wire()
        wire.pop("task_id", None)  # carried in the path
        return self._request(
            "POST", f"/v1/workflow/{self.workflow_id}/tasks/{report.task_id}/status", wire
        )

    def close(self) -> dict:
        return self._request("DELETE", f"/v1/workflow/{self.workflow_id}")

    def strategies(self) -> list[str]:
        return self._request("GET", "/v1/strategies")["strategies"]
