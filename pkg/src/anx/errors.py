"""Error hierarchy shared by every ANX layer.

Every error carries a stable ``code`` string that survives the HTTP/JSON
boundary unchanged, so a CLI client, the agent simulator and the browser UI
can all dispatch on the same vocabulary.
"""

from __future__ import annotations

from typing import Any


class AnxError(Exception):
    """Base class for all protocol-level errors."""

    code = "AnxError"

    def __init__(self, message: str = "", **details: Any) -> None:
        super().__init__(message or self.code)
        self.message = message or self.code
        self.details = details

    def to_payload(self) -> dict[str, Any]:
        payload: dict[str, Any] = {"code": self.code, "message": self.message}
        if self.details:
            payload["details"] = self.details
        return payload


# --- config / markup -------------------------------------------------------

class ConfigSyntaxError(AnxError):
    code = "SyntaxError"


class SchemaError(AnxError):
    """Config violates a structural rule. ``path`` points at the offender."""

    code = "SchemaError"

    def __init__(self, path: str, message: str = "") -> None:
        super().__init__(message or f"schema violation at {path}", path=path)
        self.path = path


class UnknownNick(AnxError):
    code = "UnknownNick"


class BadCardKey(AnxError):
    code = "BadCardKey"


class UnbalancedTag(AnxError):
    code = "UnbalancedTag"

    def __init__(self, message: str, line: int, column: int) -> None:
        super().__init__(message, line=line, column=column)
        self.line = line
        self.column = column


class UnknownTagKind(AnxError):
    code = "UnknownTagKind"

    def __init__(self, message: str, line: int, column: int) -> None:
        super().__init__(message, line=line, column=column)
        self.line = line
        self.column = column


# --- cli --------------------------------------------------------------------

class NotAnxCommand(AnxError):
    code = "NotAnxCommand"


class MissingField(AnxError):
    code = "MissingField"


class UnterminatedQuote(AnxError):
    code = "UnterminatedQuote"


class BadAction(AnxError):
    code = "BadAction"


# --- core -------------------------------------------------------------------

class UnknownCard(AnxError):
    code = "UnknownCard"


class UnknownAction(AnxError):
    code = "UnknownAction"


class ValidationError(AnxError):
    code = "ValidationError"

    def __init__(self, nick: str, reason: str) -> None:
        super().__init__(f"{nick}: {reason}", nick=nick, reason=reason)
        self.nick = nick
        self.reason = reason


class SensitiveViaAgentChannel(AnxError):
    code = "SensitiveViaAgentChannel"

    def __init__(self, nick: str) -> None:
        super().__init__(f"sensitive field {nick!r} cannot be supplied over the agent channel", nick=nick)
        self.nick = nick


class DatasetUnreachable(AnxError):
    code = "DatasetUnreachable"

    def __init__(self, url: str, message: str = "") -> None:
        super().__init__(message or f"dataset unreachable: {url}", url=url)
        self.url = url


class DatasetShapeError(AnxError):
    code = "DatasetShapeError"


class WrongState(AnxError):
    code = "WrongState"

    def __init__(self, current: str, attempted: str) -> None:
        super().__init__(f"cannot {attempted} while {current}", current=current, attempted=attempted)
        self.current = current
        self.attempted = attempted


class ChannelViolation(AnxError):
    code = "ChannelViolation"


class InvalidUserToken(AnxError):
    code = "InvalidUserToken"


class UnknownGate(AnxError):
    code = "UnknownGate"


class UnknownNode(AnxError):
    code = "UnknownNode"


# --- hub ---------------------------------------------------------------------

class VersionRegression(AnxError):
    code = "VersionRegression"


class UnknownApp(AnxError):
    code = "UnknownApp"


class AlreadyAssigned(AnxError):
    code = "AlreadyAssigned"


class UnknownRun(AnxError):
    code = "UnknownRun"


class UnknownStep(AnxError):
    code = "UnknownStep"


class IllegalStatusRegression(AnxError):
    code = "IllegalStatusRegression"


# --- sop ---------------------------------------------------------------------

class DanglingRef(AnxError):
    code = "DanglingRef"

    def __init__(self, uuid: str, where: str = "") -> None:
        super().__init__(f"step reference {uuid!r} does not exist ({where})", uuid=uuid, where=where)
        self.uuid = uuid


class NoStartStep(AnxError):
    code = "NoStartStep"


class MultipleStartSteps(AnxError):
    code = "MultipleStartSteps"


class SourcesCycle(AnxError):
    code = "SourcesCycle"

    def __init__(self, path: list[str]) -> None:
        super().__init__("cycle in sources: " + " -> ".join(path), path=path)
        self.path = path


class UnreachableStep(AnxError):
    code = "UnreachableStep"

    def __init__(self, uuid: str) -> None:
        super().__init__(f"step {uuid!r} is unreachable from the start step", uuid=uuid)
        self.uuid = uuid


class WrongStatus(AnxError):
    code = "WrongStatus"


class WrongKind(AnxError):
    code = "WrongKind"


class ProviderOutOfBounds(AnxError):
    code = "ProviderOutOfBounds"


class ProviderMissing(AnxError):
    code = "ProviderMissing"

    def __init__(self, agent_id: str) -> None:
        super().__init__(f"no decision provider for agent {agent_id!r}", agent_id=agent_id)
        self.agent_id = agent_id


# --- simulator ----------------------------------------------------------------

class Transport(AnxError):
    code = "Transport"

    def __init__(self, step: int, message: str = "") -> None:
        super().__init__(message or f"transport failure at step {step}", step=step)
        self.step = step


class ExpectFailed(AnxError):
    code = "ExpectFailed"

    def __init__(self, step: int, detail: str) -> None:
        super().__init__(f"expectation failed at step {step}: {detail}", step=step, detail=detail)
        self.step = step
        self.detail = detail
