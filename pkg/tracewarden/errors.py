from typing import Iterable, Optional


class TracewardenError(Exception):
    """Base class for every error raised by the library."""


# events


class InvalidEvent(TracewardenError, ValueError):
    pass


class InvalidPort(InvalidEvent):
    pass


class TypeTransportMismatch(InvalidEvent):
    pass


class DuplicateAttrKey(InvalidEvent):
    pass


class InvalidRecord(TracewardenError, ValueError):
    pass


class InvalidCatalog(TracewardenError, ValueError):
    pass


# capture decoding


class MalformedCapture(TracewardenError, ValueError):
    pass


class TruncatedPacket(TracewardenError):
    """Per-packet decode failure. Recorded on the event, never raised by extraction."""


# flow logs


class MalformedLine(TracewardenError, ValueError):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


# rendering


class EmptyCatalog(TracewardenError, ValueError):
    pass


# detection


class BackendUnavailable(TracewardenError):
    pass


class InvalidPrediction(TracewardenError, ValueError):
    pass


class EmptyInput(TracewardenError, ValueError):
    pass


class InvalidMember(TracewardenError, ValueError):
    pass


# synthesis


class UnknownTechnique(TracewardenError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


# evaluation


class EmptyGroup(TracewardenError, ValueError):
    pass


class NonPositiveBaseline(TracewardenError, ValueError):
    pass


class MissingTraceFile(TracewardenError, FileNotFoundError):
    pass


# capture sessions


class CaptureSessionError(TracewardenError):
    pass


class CaptureStartFailed(CaptureSessionError):
    pass


class FirewallDenied(CaptureSessionError):
    pass


class ProxyUnreachable(CaptureSessionError):
    pass


class RestoreIncomplete(CaptureSessionError):
    def __init__(self, failed: Iterable[str], detail: Optional[str] = None):
        self.failed = list(failed)
        message = "failed to revert: " + ", ".join(self.failed)
        if detail:
            message = f"{message} ({detail})"
        super().__init__(message)
