"""Encoder bridge: sentences -> annotated SSE-EMB token embedding files."""

from .encoder import (
    EMBED_DIM,
    MAX_POSITIONS,
    REFERENCE_ENCODER_ID,
    EncodedSentence,
    ReferenceEncoder,
    TokenSpan,
    load_encoder,
    tokenize_with_offsets,
)
from .errors import (
    BridgeError,
    EncoderLoadFailure,
    FormatError,
    ManifestError,
    TokenizationMismatch,
)
from .export import ExportRequest, ExportSummary, Manifest, export_embeddings, load_manifest
from .sseemb import RowAnnotation, read_embeddings, roundtrip_check, sidecar_path, write_embeddings

__version__ = "0.1.0"

__all__ = [
    "EMBED_DIM",
    "MAX_POSITIONS",
    "REFERENCE_ENCODER_ID",
    "BridgeError",
    "EncodedSentence",
    "EncoderLoadFailure",
    "ExportRequest",
    "ExportSummary",
    "FormatError",
    "Manifest",
    "ManifestError",
    "ReferenceEncoder",
    "RowAnnotation",
    "TokenSpan",
    "TokenizationMismatch",
    "export_embeddings",
    "load_encoder",
    "load_manifest",
    "read_embeddings",
    "roundtrip_check",
    "sidecar_path",
    "tokenize_with_offsets",
    "write_embeddings",
]
