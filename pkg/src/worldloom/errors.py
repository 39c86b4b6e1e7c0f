"""Exception taxonomy shared by all worldloom modules."""

from __future__ import annotations


class WorldLoomError(Exception):
    """Base class for every error raised by this package."""


# --- world state ---------------------------------------------------------

class EmptyPrompt(WorldLoomError):
    pass


class QuotaExceeded(WorldLoomError):
    pass


class IndexGap(WorldLoomError):
    pass


# --- manifest ------------------------------------------------------------

class ManifestMissing(WorldLoomError):
    pass


class SchemaVersionMismatch(WorldLoomError):
    pass


class ImageHashMismatch(WorldLoomError):
    pass


# --- geometry / metrics --------------------------------------------------

class DomainError(WorldLoomError):
    pass


class DimensionMismatch(WorldLoomError):
    pass


class ImageTooSmall(WorldLoomError):
    pass


class EmptyInput(WorldLoomError):
    pass


# --- backend protocol ----------------------------------------------------

class ProtocolError(WorldLoomError):
    """Base for errors raised while talking to a backend service."""


class BackendTimeout(ProtocolError):
    pass


class TransportError(ProtocolError):
    pass


class MalformedResponse(ProtocolError):
    pass


class RemoteError(ProtocolError):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message


class PayloadTooLarge(ProtocolError):
    pass


class MaskRequired(ProtocolError):
    pass


class LpipsUnavailable(ProtocolError):
    pass


# --- agents --------------------------------------------------------------

class DirectorReplyUnparseable(WorldLoomError):
    pass


class CandidateGenerationError(WorldLoomError):
    """Backend failure during candidate generation, tagged with the phase."""

    def __init__(self, phase: str, cause: Exception):
        super().__init__(f"candidate generation failed during {phase}: {cause}")
        self.phase = phase
        self.cause = cause
