"""Exceptions with the CLI exit code each one maps to."""


class BridgeError(Exception):
    """Base class for all ssebridge errors."""

    exit_code = 1


class ManifestError(BridgeError):
    """Vocabulary manifest JSON is missing or malformed."""

    exit_code = 3


class EncoderLoadFailure(BridgeError):
    """The requested encoder cannot be loaded in this environment."""

    exit_code = 3


class TokenizationMismatch(BridgeError):
    """A marked word aligned to no token span in any sentence."""

    exit_code = 2


class FormatError(BridgeError):
    """An SSE-EMB file violates the container layout."""

    exit_code = 3
