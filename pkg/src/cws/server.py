"""HTTP/1.1 + JSON transport for the scheduler service.

Thin adapter: routes decode bodies with the protocol codecs, call the
service, and encode canonical JSON back. Assignment delivery long-polls
when wait=true. Auth is one shared bearer token; no token configured
means auth is off (local benchmarking).
"""

from __future__ import annotations

import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from cws.errors import AuthError, CwsError, NotFoundError, ValidationError
from cws.protocol import (
    EdgePatch,
    RegisterRequest,
    StatusReport,
    assignment_to_wire,
    canonical_json,
    decode_json,
    task_spec_from_wire,
)
from cws.service import CwsService

_ROUTES = [
    ("POST", re.compile(r"^/v1/workflow$"), "register"),
    ("POST", re.compile(r"^/v1/workflow/([^/]+)/tasks$"), "submit"),
    ("PATCH", re.compile(r"^/v1/workflow/([^/]+)/dag$"), "patch_dag"),
    ("GET", re.compile(r"^/v1/workflow/([^/]+)/assignments$"), "assignments"),
    ("POST", re.compile(r"^/v1/workflow/([^/]+)/tasks/([^/]+)/status$"), "status"),
    ("DELETE", re.compile(r"^/v1/workflow/([^/]+)$"), "close"),
    ("GET", re.compile(r"^/v1/strategies$"), "strategies"),
]


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "cws"

    def log_message(self, fmt, *args):  # quiet; the service logs via provenance
        pass

    def do_GET(self):
        self._dispatch("GET")

    def do_POST(self):
        self._dispatch("POST")

    def do_PATCH(self):
        self._dispatch("PATCH")

    def do_DELETE(self):
        self._dispatch("DELETE")

    def _dispatch(self, method: str):
        parsed = urlparse(self.path)
        try:
            self._check_auth()
            for verb, pattern, name in _ROUTES:
                if verb != method:
                    continue
                match = pattern.match(parsed.path)
                if match:
                    handler = getattr(self, f"_handle_{name}")
                    status, body = handler(match, parse_qs(parsed.query))
                    self._reply(status, body)
                    return
            raise NotFoundError(f"no route for {method} {parsed.path}")
        except CwsError as exc:
            status = exc.http_status if exc.http_status else 500
            self._reply(status, {"error": exc.kind, "detail": str(exc)})
        except Exception as exc:  # noqa: BLE001 - surface instead of hanging the client
            self._reply(500, {"error": "internal", "detail": str(exc)})

    # ------------------------------------------------------------- handlers

    def _handle_register(self, match, query):
        request = RegisterRequest.from_wire(self._body())
        token = self.server.service.register_workflow(request)
        return 201, {"workflow_id": request.workflow_id, "token": token}

    def _handle_submit(self, match, query):
        raw = self._body()
        if "tasks" not in raw or not isinstance(raw["tasks"], list):
            raise ValidationError("body must carry a 'tasks' list")
        specs = [task_spec_from_wire(entry) for entry in raw["tasks"]]
        accepted = self.server.service.submit_tasks(match.group(1), specs)
        return 200, {"accepted": accepted}

    def _handle_patch_dag(self, match, query):
        patch = EdgePatch.from_wire(self._body())
        self.server.service.push_dag_edges(
            match.group(1), physical=list(patch.physical_edges), abstract=list(patch.abstract_edges)
        )
        return 200, {"ok": True}

    def _handle_assignments(self, match, query):
        after = int(query.get("after", ["0"])[0])
        wait = query.get("wait", ["false"])[0].lower() in ("true", "1")
        assignments = self.server.service.fetch_assignments(match.group(1), after, wait)
        return 200, {"assignments": [assignment_to_wire(a) for a in assignments]}

    def _handle_status(self, match, query):
        report = StatusReport.from_wire(self._body(), task_id=match.group(2))
        result = self.server.service.report_status(match.group(1), report)
        return 200, result

    def _handle_close(self, match, query):
        summary = self.server.service.close_workflow(match.group(1))
        return 200, summary

    def _handle_strategies(self, match, query):
        return 200, {"strategies": self.server.service.list_strategies()}

    # ------------------------------------------------------------ plumbing

    def _body(self) -> dict:
        length = int(self.headers.get("Content-Length", "0"))
        if length == 0:
            return {}
        return decode_json(self.rfile.read(length))

    def _check_auth(self):
        expected = self.server.bearer_token
        if not expected:
            return
        header = self.headers.get("Authorization", "")
        if header != f"Bearer {expected}":
            raise AuthError("missing or invalid bearer token")

    def _reply(self, status: int, body: dict):
        data = canonical_json(body)
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)


class CwsHttpServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, service: CwsService, host: str = "127.0.0.1", port: int = 0, bearer_token: str = ""):
        super().__init__((host, port), _Handler)
        self.service = service
        self.bearer_token = bearer_token

    @property
    def url(self) -> str:
        host, port = self.server_address[:2]
        return f"http://{host}:{port}"

    def serve_in_thread(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, name="cws-http", daemon=True)
        thread.start()
        return thread
