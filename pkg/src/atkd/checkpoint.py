"""Binary model checkpoints with a fixed, platform-independent byte layout.

Layout (all integers little-endian):

    magic      9 bytes   b"ATKD-CKPT"
    version    u32       format version, currently 1
    vocab_size u32
    d_model    u32
    n_layers   u32
    n_heads    u32
    context_len u32
    seed       u64
    step_count u64       optimizer steps taken to produce the params
    P          u64       parameter count; must equal param_count(config)
    params     f32[P]    flat parameter vector, little-endian
    corpus_hash 32 bytes sha256 of the training corpus bytes

Total size is 89 + 4*P bytes exactly. Saving and re-loading is bitwise
lossless, so checkpoint equality can be checked by file hash.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadMagicError,
    ConfigError,
    InvalidInputError,
    InvariantViolationError,
    TruncatedFileError,
    VersionMismatchError,
)
from .model import ModelConfig, TinyLM, param_count

__all__ = ["Checkpoint", "CKPT_MAGIC", "CKPT_VERSION"]

CKPT_MAGIC = b"ATKD-CKPT"
CKPT_VERSION = 1
_HEADER = struct.Struct("<6I3Q")  # version, 5 config u32 fields, seed, steps, P
_HEADER_START = len(CKPT_MAGIC)
_PARAMS_START = _HEADER_START + _HEADER.size


@dataclass(frozen=True)
class Checkpoint:
    """A trained model snapshot plus the metadata needed to reproduce it."""

    config: ModelConfig
    params: np.ndarray
    step_count: int
    corpus_hash: bytes

    def __post_init__(self):
        P = param_count(self.config)
        p = np.asarray(self.params)
        if p.dtype != np.float32 or p.shape != (P,):
            raise InvalidInputError(
                f"params must be float32 ({P},), got {p.dtype} {p.shape}"
            )
        if not isinstance(self.step_count, int) or self.step_count < 0:
            raise InvalidInputError("step_count must be a non-negative int")
        if not isinstance(self.corpus_hash, bytes) or len(self.corpus_hash) != 32:
            raise InvalidInputError("corpus_hash must be exactly 32 bytes")

    def model(self) -> TinyLM:
        """A fresh model over a copy of the stored parameters."""
        return TinyLM(self.config, self.params.copy())

    def param_hash(self) -> str:
        """sha256 hex digest of the raw parameter bytes (frozen-weights checks)."""
        return hashlib.sha256(self.params.astype("<f4").tobytes()).hexdigest()

    def save(self, path: str) -> None:
        cfg = self.config
        header = _HEADER.pack(
            CKPT_VERSION,
            cfg.vocab_size,
            cfg.d_model,
            cfg.n_layers,
            cfg.n_heads,
            cfg.context_len,
            cfg.seed,
            self.step_count,
            self.params.shape[0],
        )
        with open(path, "wb") as f:
            f.write(CKPT_MAGIC)
            f.write(header)
            f.write(self.params.astype("<f4").tobytes())
            f.write(self.corpus_hash)

    @classmethod
    def load(cls, path: str) -> "Checkpoint":
        with open(path, "rb") as f:
            data = f.read()
        if len(data) < _HEADER_START:
            raise TruncatedFileError("file shorter than magic", offset=len(data))
        if data[:_HEADER_START] != CKPT_MAGIC:
            raise BadMagicError(f"expected {CKPT_MAGIC!r}", offset=0)
        if len(data) < _PARAMS_START:
            raise TruncatedFileError("file ends inside header", offset=len(data))
        version, V, D, L, H, ctx, seed, steps, P = _HEADER.unpack(
            data[_HEADER_START:_PARAMS_START]
        )
        if version != CKPT_VERSION:
            raise VersionMismatchError(
                f"unsupported version {version}, expected {CKPT_VERSION}",
                offset=_HEADER_START,
            )
        try:
            config = ModelConfig(
                vocab_size=V, d_model=D, n_layers=L, n_heads=H, context_len=ctx, seed=seed
            )
        except ConfigError as e:
            raise InvariantViolationError(str(e), offset=_HEADER_START + 4) from e
        if P != param_count(config):
            raise InvariantViolationError(
                f"declared P={P} but config implies {param_count(config)}",
                offset=_HEADER_START + 4 + 5 * 4 + 2 * 8,
            )
        expected = _PARAMS_START + 4 * P + 32
        if len(data) < expected:
            raise TruncatedFileError(
                f"need {expected} bytes, have {len(data)}", offset=len(data)
            )
        if len(data) > expected:
            raise InvariantViolationError(
                f"{len(data) - expected} trailing bytes", offset=expected
            )
        params = np.frombuffer(
            data, dtype="<f4", count=P, offset=_PARAMS_START
        ).astype(np.float32)
        finite = np.isfinite(params)
        if not finite.all():
            bad = int(np.argmin(finite))
            raise InvariantViolationError(
                f"non-finite parameter at index {bad}", offset=_PARAMS_START + 4 * bad
            )
        return cls(
            config=config,
            params=params,
            step_count=steps,
            corpus_hash=data[expected - 32 : expected],
        )
