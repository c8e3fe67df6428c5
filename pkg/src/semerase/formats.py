"""Bit-exact interchange formats plus JSON config and manifest loading.

Two little-endian binary containers form the seam between the numerical
core and any embedding producer:

SSE-EMB v1 (embedding files)
    magic ``SSEB``, version u32, rows u64, cols u64, dtype u8 (0 = f32),
    then rows*cols f32 row-major.  Token provenance travels in an
    optional ``<name>.meta.json`` sidecar next to the payload.

SSE-SUB v1 (subspace bundles)
    magic ``SSES``, version u32, N u64, d_c u64, k u32, then sigma_1..k
    f32, U_k (N x k, row-major f32), V_k (d_c x k, row-major f32).

Payloads are f32; everything loaded is widened to f64 immediately, so
rounding happens only at the file boundary.  V_k orthonormality is
re-validated on every load (1e-6, the f32 regime) since a bundle may
come from anywhere.
"""

from __future__ import annotations

import json
import re
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .concept import SemanticSubspace
from .errors import (
    BadMagic,
    OrthonormalityViolation,
    SchemaViolation,
    SidecarRowOutOfRange,
    TruncatedPayload,
    VersionUnsupported,
)
from .linalg import SubspaceBasis, check_matrix

EMB_MAGIC = b"SSEB"
SUB_MAGIC = b"SSES"
FORMAT_VERSION = 1
DTYPE_F32 = 0

_EMB_HEADER = struct.Struct("<4sIQQB")
_SUB_HEADER = struct.Struct("<4sIQQI")

SIDECAR_KINDS = frozenset({"target", "eot", "sot", "other", "word"})
ORTHONORMALITY_TOL = 1e-6

OPTIMIZER_NAMES = ("plain_gd", "adam_like")


def sidecar_path(path) -> Path:
    """`x/cond.sseb` -> `x/cond.meta.json`."""
    return Path(path).with_suffix(".meta.json")


@dataclass(frozen=True)
class TokenAnnotation:
    """Provenance of one embedding-file row."""

    row: int
    sentence_id: int
    position: int
    text: str
    kind: str


@dataclass(frozen=True)
class EmbeddingMetadata:
    sentences: tuple[str, ...]
    tokens: tuple[TokenAnnotation, ...]

    def to_json_dict(self) -> dict:
        return {
            "sentences": list(self.sentences),
            "tokens": [
                {
                    "row": t.row,
                    "sentence_id": t.sentence_id,
                    "position": t.position,
                    "text": t.text,
                    "kind": t.kind,
                }
                for t in self.tokens
            ],
        }


def _require(cond: bool, msg: str):
    if not cond:
        raise SchemaViolation(msg)


def _parse_metadata(obj, n_rows: int) -> EmbeddingMetadata:
    _require(isinstance(obj, dict), "sidecar: top level must be an object")
    sentences = obj.get("sentences", [])
    _require(
        isinstance(sentences, list) and all(isinstance(s, str) for s in sentences),
        "sidecar.sentences: must be a list of strings",
    )
    raw_tokens = obj.get("tokens", [])
    _require(isinstance(raw_tokens, list), "sidecar.tokens: must be a list")
    tokens = []
    for i, t in enumerate(raw_tokens):
        where = f"sidecar.tokens[{i}]"
        _require(isinstance(t, dict), f"{where}: must be an object")
        for field_name in ("row", "sentence_id", "position"):
            _require(
                isinstance(t.get(field_name), int) and not isinstance(t.get(field_name), bool),
                f"{where}.{field_name}: must be an integer",
            )
        _require(isinstance(t.get("text"), str), f"{where}.text: must be a string")
        kind = t.get("kind")
        _require(kind in SIDECAR_KINDS, f"{where}.kind: must be one of {sorted(SIDECAR_KINDS)}, got {kind!r}")
        if not 0 <= t["row"] < n_rows:
            raise SidecarRowOutOfRange(f"{where}.row = {t['row']} outside payload with {n_rows} rows")
        tokens.append(
            TokenAnnotation(
                row=t["row"],
                sentence_id=t["sentence_id"],
                position=t["position"],
                text=t["text"],
                kind=kind,
            )
        )
    return EmbeddingMetadata(sentences=tuple(sentences), tokens=tuple(tokens))


def write_embeddings(matrix: np.ndarray, metadata: EmbeddingMetadata | None, path) -> None:
    """Serialize a matrix (cast to f32) plus optional sidecar metadata."""
    matrix = check_matrix(matrix, "embedding matrix")
    if metadata is not None:
        for t in metadata.tokens:
            if not 0 <= t.row < matrix.shape[0]:
                raise SidecarRowOutOfRange(
                    f"annotation row {t.row} outside matrix with {matrix.shape[0]} rows"
                )
    path = Path(path)
    header = _EMB_HEADER.pack(EMB_MAGIC, FORMAT_VERSION, matrix.shape[0], matrix.shape[1], DTYPE_F32)
    payload = np.ascontiguousarray(matrix, dtype="<f4").tobytes()
    path.write_bytes(header + payload)
    if metadata is not None:
        sidecar_path(path).write_text(json.dumps(metadata.to_json_dict(), indent=2) + "\n")


def _read_header(blob: bytes, magic: bytes, header: struct.Struct, what: str):
    if len(blob) < header.size:
        raise TruncatedPayload(f"{what}: file shorter than the {header.size}-byte header")
    fields = header.unpack_from(blob)
    if fields[0] != magic:
        raise BadMagic(f"{what}: bad magic {fields[0]!r}, expected {magic!r}")
    if fields[1] != FORMAT_VERSION:
        raise VersionUnsupported(f"{what}: version {fields[1]} unsupported (expected {FORMAT_VERSION})")
    return fields[2:]


def read_embeddings(path) -> tuple[np.ndarray, EmbeddingMetadata | None]:
    """Read an SSE-EMB file; returns (f64 matrix, metadata-or-None)."""
    path = Path(path)
    blob = path.read_bytes()
    rows, cols, dtype = _read_header(blob, EMB_MAGIC, _EMB_HEADER, "SSE-EMB")
    if dtype != DTYPE_F32:
        raise VersionUnsupported(f"SSE-EMB: dtype code {dtype} unsupported (expected {DTYPE_F32})")
    expected = rows * cols * 4
    got = len(blob) - _EMB_HEADER.size
    if got < expected:
        raise TruncatedPayload(f"SSE-EMB: payload has {got} bytes, header promises {expected}")
    if got > expected:
        raise SchemaViolation(f"SSE-EMB: {got - expected} trailing bytes after payload")
    flat = np.frombuffer(blob, dtype="<f4", count=rows * cols, offset=_EMB_HEADER.size)
    matrix = flat.astype(np.float64).reshape(rows, cols)
    meta = None
    side = sidecar_path(path)
    if side.exists():
        try:
            obj = json.loads(side.read_text())
        except json.JSONDecodeError as e:
            raise SchemaViolation(f"sidecar: invalid JSON ({e})") from e
        meta = _parse_metadata(obj, rows)
    return matrix, meta


def write_subspace(s: SemanticSubspace, path) -> None:
    """Serialize a subspace bundle: header, sigma, U_k, V_k, all f32."""
    path = Path(path)
    header = _SUB_HEADER.pack(SUB_MAGIC, FORMAT_VERSION, s.n_rows, s.d_c, s.k)
    parts = [
        header,
        np.ascontiguousarray(s.sigma, dtype="<f4").tobytes(),
        np.ascontiguousarray(s.u_k, dtype="<f4").tobytes(),
        np.ascontiguousarray(s.basis.vectors, dtype="<f4").tobytes(),
    ]
    path.write_bytes(b"".join(parts))


def read_subspace(path) -> SemanticSubspace:
    """Read an SSE-SUB bundle, re-validating spectrum order and V_k orthonormality."""
    path = Path(path)
    blob = path.read_bytes()
    n_rows, d_c, k = _read_header(blob, SUB_MAGIC, _SUB_HEADER, "SSE-SUB")
    if k < 1 or n_rows < 1 or d_c < 1:
        raise SchemaViolation(f"SSE-SUB: degenerate dimensions N={n_rows}, d_c={d_c}, k={k}")
    expected = (k + n_rows * k + d_c * k) * 4
    got = len(blob) - _SUB_HEADER.size
    if got < expected:
        raise TruncatedPayload(f"SSE-SUB: payload has {got} bytes, header promises {expected}")
    if got > expected:
        raise SchemaViolation(f"SSE-SUB: {got - expected} trailing bytes after payload")
    offset = _SUB_HEADER.size
    sigma = np.frombuffer(blob, dtype="<f4", count=k, offset=offset).astype(np.float64)
    offset += k * 4
    u_k = np.frombuffer(blob, dtype="<f4", count=n_rows * k, offset=offset).astype(np.float64)
    offset += n_rows * k * 4
    v_k = np.frombuffer(blob, dtype="<f4", count=d_c * k, offset=offset).astype(np.float64)
    u_k = u_k.reshape(n_rows, k)
    v_k = v_k.reshape(d_c, k)
    # NaN compares False against every threshold, so corrupted payloads
    # must be screened explicitly before the invariant checks below.
    if not (np.all(np.isfinite(sigma)) and np.all(np.isfinite(u_k)) and np.all(np.isfinite(v_k))):
        raise SchemaViolation("SSE-SUB: payload contains non-finite values")
    if not np.all(sigma > 0.0) or np.any(np.diff(sigma) > 0.0):
        raise SchemaViolation("SSE-SUB: sigma must be positive and non-increasing")
    gram_err = float(np.max(np.abs(v_k.T @ v_k - np.eye(k))))
    if gram_err > ORTHONORMALITY_TOL:
        raise OrthonormalityViolation(
            f"SSE-SUB: basis columns deviate from orthonormality by {gram_err:.3e} (tol {ORTHONORMALITY_TOL:g})"
        )
    return SemanticSubspace(
        k=k,
        sigma=sigma,
        u_k=u_k,
        basis=SubspaceBasis(vectors=v_k),
        n_rows=n_rows,
        d_c=d_c,
    )


@dataclass(frozen=True)
class RunConfig:
    """Run parameters with validated defaults; loaded from JSON."""

    k: int = 5
    t_start: int = 30
    t_end: int = 50
    learning_rate: float = 0.001
    optimizer: str = "plain_gd"
    updates_per_step: int = 1
    skip_sot: bool = False
    seed: int = 42


_RUN_CONFIG_FIELDS = frozenset(
    {"k", "t_start", "t_end", "learning_rate", "optimizer", "updates_per_step", "skip_sot", "seed"}
)


def _as_int(obj: dict, name: str) -> int | None:
    if name not in obj:
        return None
    v = obj[name]
    _require(isinstance(v, int) and not isinstance(v, bool), f"{name} must be an integer")
    return v


def load_config(path) -> RunConfig:
    """Parse and validate a RunConfig JSON file, filling absent fields with defaults."""
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise SchemaViolation(f"config: invalid JSON ({e})") from e
    _require(isinstance(obj, dict), "config: top level must be an object")
    unknown = set(obj) - _RUN_CONFIG_FIELDS
    _require(not unknown, f"config: unknown fields {sorted(unknown)}")
    defaults = RunConfig()
    k = _as_int(obj, "k")
    if k is not None:
        _require(k >= 1, "k must be ≥ 1")
    t_start = _as_int(obj, "t_start")
    t_end = _as_int(obj, "t_end")
    updates = _as_int(obj, "updates_per_step")
    if updates is not None:
        _require(updates >= 1, "updates_per_step must be ≥ 1")
    seed = _as_int(obj, "seed")
    lr = obj.get("learning_rate")
    if lr is not None:
        _require(isinstance(lr, (int, float)) and not isinstance(lr, bool), "learning_rate must be a number")
        _require(lr > 0, "learning_rate must be > 0")
    optimizer = obj.get("optimizer")
    if optimizer is not None:
        _require(optimizer in OPTIMIZER_NAMES, f"optimizer must be one of {list(OPTIMIZER_NAMES)}")
    skip_sot = obj.get("skip_sot")
    if skip_sot is not None:
        _require(isinstance(skip_sot, bool), "skip_sot must be a boolean")
    cfg = RunConfig(
        k=k if k is not None else defaults.k,
        t_start=t_start if t_start is not None else defaults.t_start,
        t_end=t_end if t_end is not None else defaults.t_end,
        learning_rate=float(lr) if lr is not None else defaults.learning_rate,
        optimizer=optimizer if optimizer is not None else defaults.optimizer,
        updates_per_step=updates if updates is not None else defaults.updates_per_step,
        skip_sot=skip_sot if skip_sot is not None else defaults.skip_sot,
        seed=seed if seed is not None else defaults.seed,
    )
    _require(0 <= cfg.t_start <= cfg.t_end, "t_start must satisfy 0 ≤ t_start ≤ t_end")
    return cfg


_SLOT_RE = re.compile(r"\{([^{}]+)\}")


@dataclass(frozen=True)
class VocabularyManifest:
    """Concept vocabulary: words, carrier sentences, optional fill-in template."""

    concept: str
    words: tuple[str, ...]
    sentences: tuple[str, ...]
    template: str | None = None

    @property
    def slots(self) -> tuple[str, ...]:
        """Slot names appearing in the template, e.g. ('object', 'artistic style')."""
        if self.template is None:
            return ()
        return tuple(_SLOT_RE.findall(self.template))

    def instantiate(self, **values: str) -> str:
        """Fill every template slot; slot names may contain spaces."""
        if self.template is None:
            raise SchemaViolation("manifest has no template")
        missing = [s for s in self.slots if s not in values]
        _require(not missing, f"template: missing values for slots {missing}")
        out = self.template
        for name, val in values.items():
            out = out.replace("{" + name + "}", val)
        return out


def load_manifest(path) -> VocabularyManifest:
    """Parse and validate a VocabularyManifest JSON file."""
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise SchemaViolation(f"manifest: invalid JSON ({e})") from e
    _require(isinstance(obj, dict), "manifest: top level must be an object")
    _require(isinstance(obj.get("concept"), str) and obj["concept"], "concept must be a non-empty string")
    for name in ("words", "sentences"):
        v = obj.get(name)
        _require(
            isinstance(v, list) and v and all(isinstance(x, str) and x for x in v),
            f"{name} must be a non-empty list of non-empty strings",
        )
    template = obj.get("template")
    if template is not None:
        _require(isinstance(template, str), "template must be a string")
    return VocabularyManifest(
        concept=obj["concept"],
        words=tuple(obj["words"]),
        sentences=tuple(obj["sentences"]),
        template=template,
    )
