"""Tokenization with character offsets plus the embedding backends.

The reference backend is fully offline and deterministic: every token
embedding is a seeded function of (piece text, position), shaped like the
fixed-length 77x768 text encoders the consumer toolkit targets.  The real
backend loads a pretrained encoder through `transformers` when that stack
is installed; in a sealed environment it fails with EncoderLoadFailure
rather than producing silently different data.
"""

from __future__ import annotations

import re
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import EncoderLoadFailure

REFERENCE_ENCODER_ID = "reference/clip-768"
MAX_POSITIONS = 77
EMBED_DIM = 768

SOT_TEXT = "<sot>"
EOT_TEXT = "<eot>"

_WORD_RE = re.compile(r"[A-Za-z0-9']+")
# Crude subword behavior: long words split into fixed-size pieces so the
# offset-alignment path sees genuine multi-piece tokens.
_PIECE_LEN = 8


@dataclass(frozen=True)
class TokenSpan:
    """One sub-token piece with its half-open character span in the sentence."""

    text: str
    start: int
    end: int


def tokenize_with_offsets(sentence: str) -> list[TokenSpan]:
    """Lowercased word pieces with character offsets; punctuation is dropped."""
    pieces = []
    for m in _WORD_RE.finditer(sentence):
        word = m.group(0)
        for i in range(0, len(word), _PIECE_LEN):
            j = min(i + _PIECE_LEN, len(word))
            pieces.append(TokenSpan(text=word[i:j].lower(), start=m.start() + i, end=m.start() + j))
    return pieces


@dataclass(frozen=True)
class EncodedSentence:
    """Fixed-length encoding: per-position (text, span-or-None) plus the matrix."""

    texts: tuple[str, ...]
    spans: tuple[TokenSpan | None, ...]
    eot_position: int
    embeddings: np.ndarray  # (MAX_POSITIONS, EMBED_DIM) f32


class ReferenceEncoder:
    """Deterministic offline stand-in for a pretrained text encoder.

    Embedding of a position is a seeded draw from (piece text, position),
    so identical sentences encode identically across processes and
    platforms; no weights, no network.
    """

    encoder_id = REFERENCE_ENCODER_ID
    max_positions = MAX_POSITIONS
    embed_dim = EMBED_DIM

    def _embed(self, text: str, position: int) -> np.ndarray:
        rng = np.random.default_rng([zlib.crc32(text.encode("utf-8")), position])
        return (rng.standard_normal(EMBED_DIM) / np.sqrt(EMBED_DIM)).astype(np.float32)

    def encode(self, sentence: str) -> EncodedSentence:
        pieces = tokenize_with_offsets(sentence)[: MAX_POSITIONS - 2]
        texts = [SOT_TEXT] + [p.text for p in pieces]
        spans: list[TokenSpan | None] = [None] + list(pieces)
        eot_position = len(texts)
        while len(texts) < MAX_POSITIONS:
            texts.append(EOT_TEXT)
            spans.append(None)
        rows = [self._embed(t, i) for i, t in enumerate(texts)]
        return EncodedSentence(
            texts=tuple(texts),
            spans=tuple(spans),
            eot_position=eot_position,
            embeddings=np.vstack(rows),
        )


class PretrainedEncoder:
    """Real text encoder via transformers; available only where that stack is."""

    max_positions = MAX_POSITIONS
    embed_dim = EMBED_DIM

    def __init__(self, encoder_id: str):
        try:
            from transformers import AutoTokenizer, CLIPTextModel  # noqa: PLC0415
        except ImportError as e:
            raise EncoderLoadFailure(
                f"encoder {encoder_id!r} needs the transformers/torch stack; install ssebridge[real]"
            ) from e
        try:
            self._tokenizer = AutoTokenizer.from_pretrained(encoder_id)
            self._model = CLIPTextModel.from_pretrained(encoder_id)
        except Exception as e:
            raise EncoderLoadFailure(f"could not load encoder {encoder_id!r}: {e}") from e
        self.encoder_id = encoder_id

    def encode(self, sentence: str) -> EncodedSentence:
        import torch  # noqa: PLC0415

        enc = self._tokenizer(
            sentence,
            padding="max_length",
            max_length=MAX_POSITIONS,
            truncation=True,
            return_offsets_mapping=True,
            return_tensors="pt",
        )
        with torch.no_grad():
            hidden = self._model(input_ids=enc["input_ids"]).last_hidden_state[0].cpu().numpy()
        ids = enc["input_ids"][0].tolist()
        offsets = enc["offset_mapping"][0].tolist()
        eot_id = self._tokenizer.eos_token_id
        texts = []
        spans: list[TokenSpan | None] = []
        eot_position = next(i for i, t in enumerate(ids) if t == eot_id)
        for i, (tok_id, (a, b)) in enumerate(zip(ids, offsets)):
            if i == 0:
                texts.append(SOT_TEXT)
                spans.append(None)
            elif i >= eot_position:
                texts.append(EOT_TEXT)
                spans.append(None)
            else:
                piece = sentence[a:b]
                texts.append(piece.strip().lower() or self._tokenizer.decode([tok_id]).strip().lower())
                spans.append(TokenSpan(text=texts[-1], start=a, end=b))
        return EncodedSentence(
            texts=tuple(texts),
            spans=tuple(spans),
            eot_position=eot_position,
            embeddings=hidden.astype(np.float32),
        )


def load_encoder(encoder_id: str):
    """Resolve an encoder id to a backend instance."""
    if encoder_id == REFERENCE_ENCODER_ID:
        return ReferenceEncoder()
    return PretrainedEncoder(encoder_id)
