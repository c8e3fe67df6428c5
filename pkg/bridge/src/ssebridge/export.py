"""Sentence corpus -> annotated SSE-EMB export.

The bridge computes no numerics: it tokenizes, encodes, assigns row kinds
and serializes.  Kind assignment per position: 0 -> sot, at-or-after the
end-of-text marker -> eot (optionally capped), pieces overlapping a marked
word's character span -> target, everything else -> word.  Span alignment
goes through character offsets, so subword splits of a marked word are all
caught.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .encoder import REFERENCE_ENCODER_ID, load_encoder
from .errors import ManifestError, TokenizationMismatch
from .sseemb import RowAnnotation, roundtrip_check, write_embeddings


@dataclass(frozen=True)
class Manifest:
    concept: str
    words: tuple[str, ...]
    sentences: tuple[str, ...]


def load_manifest(path) -> Manifest:
    try:
        obj = json.loads(Path(path).read_text())
    except OSError as e:
        raise ManifestError(f"cannot read manifest: {e}") from e
    except json.JSONDecodeError as e:
        raise ManifestError(f"manifest is not valid JSON: {e}") from e
    if not isinstance(obj, dict):
        raise ManifestError("manifest: top level must be an object")
    concept = obj.get("concept")
    if not isinstance(concept, str) or not concept:
        raise ManifestError("manifest.concept must be a non-empty string")
    for name in ("words", "sentences"):
        v = obj.get(name)
        if not (isinstance(v, list) and v and all(isinstance(x, str) and x for x in v)):
            raise ManifestError(f"manifest.{name} must be a non-empty list of non-empty strings")
    return Manifest(concept=concept, words=tuple(obj["words"]), sentences=tuple(obj["sentences"]))


@dataclass(frozen=True)
class ExportRequest:
    """What to encode, which encoder, which words get kind=target."""

    manifest_path: str
    out_path: str
    encoder_id: str = REFERENCE_ENCODER_ID
    mark_words: tuple[str, ...] | None = None  # None -> the manifest's word list
    eot_cap: int | None = None  # max eot rows kept per sentence; None -> all


@dataclass(frozen=True)
class ExportSummary:
    out_path: str
    n_sentences: int
    n_rows: int
    target_rows_per_sentence: tuple[int, ...]
    kinds: dict = field(hash=False, default_factory=dict)


def _word_spans(sentence: str, words) -> list[tuple[int, int]]:
    """Half-open character spans of standalone occurrences of each word."""
    spans = []
    for w in words:
        for m in re.finditer(rf"(?<![A-Za-z0-9']){re.escape(w)}(?![A-Za-z0-9'])", sentence, re.IGNORECASE):
            spans.append((m.start(), m.end()))
    return spans


def export_embeddings(req: ExportRequest) -> ExportSummary:
    """Encode every manifest sentence and write one annotated SSE-EMB file.

    Every marked word must align to at least one token span somewhere in
    the corpus; a word that aligns nowhere is a tokenization mismatch, not
    a silently empty export.
    """
    manifest = load_manifest(req.manifest_path)
    mark_words = tuple(manifest.words if req.mark_words is None else req.mark_words)
    if req.eot_cap is not None and req.eot_cap < 1:
        raise ValueError(f"eot cap must keep at least the end-of-text row, got {req.eot_cap}")
    enc = load_encoder(req.encoder_id)

    blocks = []
    annotations = []
    targets_per_sentence = []
    aligned = {w: 0 for w in mark_words}
    kinds_count = {"sot": 0, "target": 0, "word": 0, "eot": 0}
    row = 0
    for sent_id, sentence in enumerate(manifest.sentences):
        encoded = enc.encode(sentence)
        spans = _word_spans(sentence, mark_words)
        keep_rows = []
        n_targets = 0
        eot_kept = 0
        for pos in range(enc.max_positions):
            if pos == 0:
                kind = "sot"
            elif pos >= encoded.eot_position:
                if req.eot_cap is not None and eot_kept >= req.eot_cap:
                    continue
                kind = "eot"
                eot_kept += 1
            else:
                piece = encoded.spans[pos]
                hit = any(piece.start < b and a < piece.end for (a, b) in spans)
                kind = "target" if hit else "word"
                if hit:
                    n_targets += 1
                    for w in mark_words:
                        if piece.text in w.lower():
                            aligned[w] += 1
            annotations.append(
                RowAnnotation(
                    row=row,
                    sentence_id=sent_id,
                    position=pos,
                    text=encoded.texts[pos],
                    kind=kind,
                )
            )
            kinds_count[kind] += 1
            keep_rows.append(encoded.embeddings[pos])
            row += 1
        blocks.append(np.vstack(keep_rows))
        targets_per_sentence.append(n_targets)

    missing = [w for w, n in aligned.items() if n == 0]
    if missing:
        raise TokenizationMismatch(
            f"marked words {missing} aligned to no token span in any sentence"
        )

    matrix = np.vstack(blocks)
    write_embeddings(matrix, manifest.sentences, annotations, req.out_path)
    if not roundtrip_check(req.out_path, matrix):
        raise OSError(f"verification re-read of {req.out_path} did not match")
    return ExportSummary(
        out_path=str(req.out_path),
        n_sentences=len(manifest.sentences),
        n_rows=matrix.shape[0],
        target_rows_per_sentence=tuple(targets_per_sentence),
        kinds=kinds_count,
    )
