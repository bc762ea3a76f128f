"""Exception hierarchy shared by every stage of the toolkit."""

from __future__ import annotations

from typing import Any


class OiluError(Exception):
    """Base class for all toolkit errors."""


class InvalidDigit(OiluError, ValueError):
    pass


class InvalidPattern(OiluError, ValueError):
    pass


class LayoutOverflow(OiluError, ValueError):
    pass


class InvalidRing(OiluError, IndexError):
    pass


class UnsupportedFormat(OiluError, ValueError):
    pass


class FormatError(OiluError, OSError):
    """An image file could not be read or parsed."""


class DegenerateHistogram(OiluError, ValueError):
    pass


class DegenerateQuad(OiluError, ValueError):
    pass


class OutOfDomain(OiluError, ValueError):
    pass


class NoData(OiluError, ValueError):
    pass


class DecodeError(OiluError):
    """A marker could not be identified.

    ``stage`` names the pipeline step that gave up, ``diagnostics`` holds
    whatever that step measured, and ``timing_ms`` is filled in by
    :func:`oilu.decoder.decode` before the error leaves the pipeline.
    """

    kind = "DecodeError"

    def __init__(self, message: str, *, stage: str, diagnostics: dict[str, Any] | None = None):
        super().__init__(message)
        self.stage = stage
        self.diagnostics = dict(diagnostics or {})
        self.timing_ms: float | None = None

    def to_record(self) -> dict[str, Any]:
        return {
            "error": self.kind,
            "stage": self.stage,
            "message": str(self),
            "diagnostics": self.diagnostics,
            "timing_ms": self.timing_ms,
        }


class NoMarkerFound(DecodeError):
    kind = "NoMarkerFound"


class NoRingsFound(DecodeError):
    kind = "NoRingsFound"


class AmbiguousBands(DecodeError):
    kind = "AmbiguousBands"


class UndecodableRing(DecodeError):
    kind = "UndecodableRing"

    def __init__(self, message: str, *, index: int, stage: str = "bits_from_counts",
                 diagnostics: dict[str, Any] | None = None):
        super().__init__(message, stage=stage, diagnostics=diagnostics)
        self.index = index
        self.diagnostics.setdefault("ring", index)
