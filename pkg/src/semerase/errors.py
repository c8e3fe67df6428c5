"""Exception hierarchy shared by every module.

Each error carries the CLI exit code it maps to: 2 for usage errors,
3 for I/O and format errors, 4 for numerical failures.
"""


class ToolkitError(Exception):
    """Base class for all semerase errors."""

    exit_code = 1


class UsageError(ToolkitError):
    """Invalid flags or flag combinations."""

    exit_code = 2


class NonFiniteInput(ToolkitError):
    """A matrix or vector contains NaN or Inf entries."""

    exit_code = 4


class RankOutOfBounds(ToolkitError):
    """Requested rank k falls outside [1, min(rows, cols)]."""

    exit_code = 2


class DimensionMismatch(ToolkitError):
    """Operand dimensions are incompatible."""

    exit_code = 3


# Alias used by the optimization entry point; same semantics.
ShapeMismatch = DimensionMismatch


class ZeroVector(ToolkitError):
    """An operation that needs a nonzero vector received the zero vector."""

    exit_code = 4


class EmptySelection(ToolkitError):
    """No token record matched the requested kind selection."""

    exit_code = 2


class DegenerateConcept(ToolkitError):
    """sigma_k is numerically zero; the top-k span is meaningless."""

    exit_code = 4


class NonFiniteGradient(ToolkitError):
    """Gradient or updated tokens became NaN/Inf (divergent learning rate)."""

    exit_code = 4


class BadMagic(ToolkitError):
    """File does not start with the expected magic bytes."""

    exit_code = 3


class VersionUnsupported(ToolkitError):
    """File version or dtype tag is not supported by this reader."""

    exit_code = 3


class TruncatedPayload(ToolkitError):
    """Payload length does not match rows*cols*itemsize."""

    exit_code = 3


class SidecarRowOutOfRange(ToolkitError):
    """Sidecar metadata references a row index >= rows."""

    exit_code = 3


class OrthonormalityViolation(ToolkitError):
    """Loaded basis columns are not orthonormal within tolerance."""

    exit_code = 3


class SchemaViolation(ToolkitError):
    """JSON config/manifest violates the schema; message names the field."""

    exit_code = 3
