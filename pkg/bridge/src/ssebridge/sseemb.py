"""Writer-side implementation of the SSE-EMB interchange container.

Independent of the consumer toolkit on purpose: the byte layout is the
contract.  Header is little-endian ``magic "SSEB" (4s) | version (u32) |
rows (u64) | cols (u64) | dtype (u8, 0 = f32)``, then rows*cols f32
row-major.  Row provenance goes in a ``<name>.meta.json`` sidecar.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError

MAGIC = b"SSEB"
VERSION = 1
DTYPE_F32 = 0
_HEADER = struct.Struct("<4sIQQB")


@dataclass(frozen=True)
class RowAnnotation:
    """Provenance of one exported embedding row."""

    row: int
    sentence_id: int
    position: int
    text: str
    kind: str


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".meta.json")


def write_embeddings(matrix: np.ndarray, sentences, annotations, path) -> None:
    """Serialize the matrix as f32 plus a JSON sidecar with row annotations."""
    matrix = np.asarray(matrix)
    if matrix.ndim != 2:
        raise FormatError(f"embedding matrix must be 2-D, got ndim={matrix.ndim}")
    if not np.all(np.isfinite(matrix)):
        raise FormatError("embedding matrix contains non-finite values")
    for a in annotations:
        if not 0 <= a.row < matrix.shape[0]:
            raise FormatError(f"annotation row {a.row} outside matrix with {matrix.shape[0]} rows")
    path = Path(path)
    header = _HEADER.pack(MAGIC, VERSION, matrix.shape[0], matrix.shape[1], DTYPE_F32)
    payload = np.ascontiguousarray(matrix, dtype="<f4").tobytes()
    path.write_bytes(header + payload)
    sidecar = {
        "sentences": list(sentences),
        "tokens": [
            {
                "row": a.row,
                "sentence_id": a.sentence_id,
                "position": a.position,
                "text": a.text,
                "kind": a.kind,
            }
            for a in annotations
        ],
    }
    sidecar_path(path).write_text(json.dumps(sidecar, indent=2) + "\n")


def read_embeddings(path) -> np.ndarray:
    """Read back an SSE-EMB payload as f32 (the format's native precision)."""
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise FormatError("file shorter than the header")
    magic, version, rows, cols, dtype = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION or dtype != DTYPE_F32:
        raise FormatError(f"unsupported version/dtype ({version}, {dtype})")
    if len(blob) - _HEADER.size != rows * cols * 4:
        raise FormatError("payload length does not match header")
    flat = np.frombuffer(blob, dtype="<f4", count=rows * cols, offset=_HEADER.size)
    return flat.reshape(rows, cols)


def roundtrip_check(path, expected: np.ndarray) -> bool:
    """True when the file's payload equals the tensor bit-for-bit after f32 cast."""
    want = np.ascontiguousarray(expected, dtype="<f4")
    try:
        got = read_embeddings(path)
    except FormatError:
        return False
    return got.shape == want.shape and bool(np.array_equal(got.view(np.uint32), want.view(np.uint32)))
