"""Exception taxonomy shared across the pipeline stages."""

from __future__ import annotations


class VpcotError(Exception):
    """Base class for all pipeline errors."""


class ConfigError(VpcotError):
    """Invalid or missing run configuration."""


# --- block header parsing -------------------------------------------------


class HeaderError(VpcotError):
    """Base for block-header parse failures."""


class MissingHeader(HeaderError):
    """No `# Step N: <desc>` header line found."""


class MalformedIndex(HeaderError):
    """Header present but the step index is not a positive integer."""


# --- backends --------------------------------------------------------------


class BackendError(VpcotError):
    """Base for generation/verification endpoint failures."""


class BackendTimeout(BackendError):
    """The endpoint did not answer within the configured deadline."""


class RateLimited(BackendError):
    """429 persisted past the retry budget."""


class FixtureMiss(BackendError):
    """Next scripted entry's substring guard does not match the request."""


class FixtureExhausted(BackendError):
    """A scripted backend ran out of entries."""


class ConcurrentFixtureUse(BackendError):
    """A single-consumer fixture script was used from two threads at once."""


# --- generation ------------------------------------------------------------


class EmptyTree(VpcotError):
    """No first-level block could be parsed for a task."""


# --- execution -------------------------------------------------------------


class SandboxSpawnFailure(VpcotError):
    """The sandbox process could not be started at all."""


# --- conversion ------------------------------------------------------------


class InvalidCoT(VpcotError):
    """Converted step text failed the required prefix check after one retry."""


# --- dataset ---------------------------------------------------------------


class SchemaViolation(VpcotError):
    """A serialized record failed schema or invariant validation."""

    def __init__(self, message: str, line_number: int | None = None) -> None:
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class UnknownKey(VpcotError):
    """A prediction referenced a record key that does not exist."""


# --- ranking / scaling -----------------------------------------------------


class EmptyCandidates(VpcotError):
    """select_best called with no candidates."""


class NoCandidates(VpcotError):
    """A best-of-N step produced no usable candidate blocks."""
