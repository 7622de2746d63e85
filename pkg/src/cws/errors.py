"""Exception hierarchy shared by the service, protocol, and CLI layers."""


class CwsError(Exception):
    """Base class; `kind` keys the wire-level error payload."""

    kind = "internal"
    http_status = 500


class ValidationError(CwsError):
    kind = "validation"
    http_status = 400


class ConflictError(CwsError):
    kind = "conflict"
    http_status = 409


class NotFoundError(CwsError):
    kind = "not_found"
    http_status = 404


class UnknownStrategyError(CwsError):
    """Carries the valid catalogue so clients can self-correct."""

    kind = "unknown_strategy"
    http_status = 422

    def __init__(self, name: str, valid: list[str]):
        super().__init__(f"unknown strategy {name!r}; valid: {', '.join(valid)}")
        self.name = name
        self.valid = list(valid)


class CycleError(ValidationError):
    """Rejected DAG mutation; `edges` lists the offending edges."""

    kind = "cycle"
    http_status = 422

    def __init__(self, edges: list[tuple[str, str]]):
        listed = ", ".join(f"({a} -> {b})" for a, b in edges)
        super().__init__(f"edge(s) would close a cycle: {listed}")
        self.edges = list(edges)


class IllegalTransitionError(ConflictError):
    kind = "illegal_transition"
    http_status = 409


class AuthError(CwsError):
    kind = "auth"
    http_status = 401


class TransportError(CwsError):
    """Client-side wrapper for connection failures, with retry count."""

    kind = "transport"
    http_status = 0

    def __init__(self, message: str, attempts: int):
        super().__init__(f"{message} (after {attempts} attempt(s))")
        self.attempts = attempts
