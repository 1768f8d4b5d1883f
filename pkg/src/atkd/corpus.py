"""Byte-level corpus handling: vocabulary, train/val split, window sampling.

Text is tokenized as raw bytes. The vocabulary is the sorted set of distinct
byte values that actually occur, remapped to contiguous ids [0, K); the map is
a pure function of the corpus content, so two processes reading the same file
always agree on token ids.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

__all__ = ["ByteVocab", "load_corpus", "corpus_sha256", "split_tokens", "sample_windows"]


@dataclass(frozen=True)
class ByteVocab:
    """Bijection between occurring byte values and dense token ids."""

    byte_values: tuple[int, ...]  # sorted distinct bytes; index = token id

    def __post_init__(self):
        vals = tuple(int(b) for b in self.byte_values)
        if len(vals) < 2:
            raise InvalidInputError("vocabulary needs at least 2 distinct bytes")
        if list(vals) != sorted(set(vals)) or vals[0] < 0 or vals[-1] > 255:
            raise InvalidInputError("byte_values must be sorted distinct bytes")
        object.__setattr__(self, "byte_values", vals)

    @classmethod
    def from_bytes(cls, data: bytes) -> "ByteVocab":
        if not data:
            raise InvalidInputError("cannot build a vocabulary from an empty corpus")
        return cls(tuple(sorted(set(data))))

    @property
    def size(self) -> int:
        return len(self.byte_values)

    def _id_table(self) -> np.ndarray:
        table = np.full(256, -1, dtype=np.int64)
        table[list(self.byte_values)] = np.arange(self.size)
        return table

    def encode(self, data: bytes) -> np.ndarray:
        """Map bytes to token ids; bytes outside the vocabulary are an error."""
        raw = np.frombuffer(data, dtype=np.uint8)
        ids = self._id_table()[raw]
        if ids.size and ids.min() < 0:
            bad = int(raw[np.argmax(ids < 0)])
            raise InvalidInputError(f"byte 0x{bad:02x} not in vocabulary")
        return ids

    def decode(self, ids: np.ndarray) -> bytes:
        ids = np.asarray(ids)
        if ids.size and (ids.min() < 0 or ids.max() >= self.size):
            raise InvalidInputError("token id outside vocabulary")
        lut = np.array(self.byte_values, dtype=np.uint8)
        return lut[ids.astype(np.int64)].tobytes()


def load_corpus(path: str) -> bytes:
    with open(path, "rb") as f:
        data = f.read()
    if not data:
        raise InvalidInputError(f"corpus file is empty: {path}")
    return data


def corpus_sha256(data: bytes) -> bytes:
    """32-byte digest used to stamp checkpoints with their training corpus."""
    return hashlib.sha256(data).digest()


def split_tokens(tokens: np.ndarray, train_frac: float = 0.9) -> tuple[np.ndarray, np.ndarray]:
    """Contiguous prefix/suffix split; both halves must be non-empty."""
    if not 0.0 < train_frac < 1.0:
        raise InvalidInputError(f"train_frac must be in (0, 1), got {train_frac}")
    tokens = np.asarray(tokens)
    cut = int(tokens.shape[0] * train_frac)
    train, val = tokens[:cut], tokens[cut:]
    if train.shape[0] < 2 or val.shape[0] < 2:
        raise InvalidInputError(
            f"split leaves a side with fewer than 2 tokens ({train.shape[0]}/{val.shape[0]})"
        )
    return train, val


def sample_windows(
    tokens: np.ndarray, batch_size: int, window_len: int, rng: np.random.Generator
) -> np.ndarray:
    """Uniformly sampled contiguous windows, shape (batch_size, window_len).

    Training draws windows of context_len + 1 tokens: positions [:-1] are the
    model input and positions [1:] the next-token targets.
    """
    tokens = np.asarray(tokens)
    n = tokens.shape[0]
    if window_len < 2:
        raise InvalidInputError(f"window_len must be >= 2, got {window_len}")
    if batch_size < 1:
        raise InvalidInputError(f"batch_size must be >= 1, got {batch_size}")
    if n < window_len:
        raise InvalidInputError(f"corpus side has {n} tokens, need >= {window_len}")
    starts = rng.integers(0, n - window_len + 1, size=batch_size)
    return tokens[starts[:, None] + np.arange(window_len)[None, :]]
