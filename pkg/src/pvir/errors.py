"""Exception hierarchy shared by every pipeline stage."""

from __future__ import annotations


class PvirError(Exception):
    """Base class for all errors raised by this package."""


class IoError(PvirError, OSError):
    """A file could not be read or written."""


class ParseError(PvirError, ValueError):
    """A file was readable but malformed.

    ``kind`` is a short machine tag (``"DuplicateEvent"``, ``"MissingField"``,
    ``"InvalidJSON"``), ``field`` the offending key and ``line`` the 1-based
    line number when known.
    """

    def __init__(self, kind: str, message: str = "", *, field: str | None = None,
                 line: int | None = None, path: str | None = None):
        self.kind = kind
        self.field = field
        self.line = line
        self.path = path
        where = []
        if path:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if field:
            where.append(f"field {field!r}")
        text = f"{kind}: {message}" if message else kind
        if where:
            text = f"{text} ({', '.join(where)})"
        super().__init__(text)


class SchemaError(PvirError, ValueError):
    """A document parsed but violates the data model; ``field`` is a dotted path."""

    def __init__(self, field: str, rule: str):
        self.field = field
        self.rule = rule
        super().__init__(f"{field}: {rule}")


class PhaseAbsent(PvirError, KeyError):
    def __init__(self, phase):
        self.phase = phase
        super().__init__(f"phase {int(phase)} absent from segmentation")

    def __str__(self) -> str:
        return self.args[0]


class UnknownPhase(PvirError, ValueError):
    pass


class EmptyInput(PvirError, ValueError):
    pass


class TooShort(PvirError, ValueError):
    pass


class RateMismatch(PvirError, ValueError):
    pass


class DegenerateSignal(PvirError, ValueError):
    pass


class MissingOffset(PvirError, KeyError):
    def __init__(self, view_id: str):
        self.view_id = view_id
        super().__init__(f"no offset supplied for view {view_id!r}")

    def __str__(self) -> str:
        return self.args[0]


class Unparseable(PvirError, ValueError):
    """No (phase, start, end) triple could be recovered from a model response."""

    def __init__(self, message: str, raw_text: str = ""):
        self.raw_text = raw_text
        super().__init__(message)


class LengthMismatch(PvirError, ValueError):
    pass


class EmptyCorpus(PvirError, ValueError):
    pass


class MissingGroundTruth(PvirError, KeyError):
    def __init__(self, event_id: str):
        self.event_id = event_id
        super().__init__(f"no ground truth for event {event_id!r}")

    def __str__(self) -> str:
        return self.args[0]


class EmptyInfo(PvirError, ValueError):
    pass


class SchemaViolations(PvirError, ValueError):
    """Report validation failed; ``violations`` holds ``"<json path>: <rule>"`` strings."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations) or "schema violation")


class ExhaustedRetries(PvirError):
    def __init__(self, attempts: int, violations: list[str]):
        self.attempts = attempts
        self.violations = list(violations)
        super().__init__(f"no valid report after {attempts} attempts: {'; '.join(self.violations)}")


class ConfigError(PvirError, ValueError):
    pass


class BackendError(PvirError):
    """A model backend call failed. ``fingerprint`` identifies the request."""

    def __init__(self, message: str, *, fingerprint: str | None = None):
        self.fingerprint = fingerprint
        if fingerprint:
            message = f"{message} [request {fingerprint[:12]}]"
        super().__init__(message)


class BackendTimeout(BackendError):
    pass


class BackendProtocolError(BackendError):
    pass


class NoFixture(BackendError):
    pass
