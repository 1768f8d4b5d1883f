"""Bit-exact file formats: logit batches, per-token report CSVs, KDE curves.

LogitFile layout (little-endian throughout):

    magic   8 bytes  b"ATKD-LGT"
    version u32      currently 1
    T       u64      token count
    C       u64      class count
    flags   u32      bit 0 = student logits present; other bits must be 0
    teacher f32[T][C] row-major
    student f32[T][C] row-major, only when flags bit 0 is set
    targets u32[T]
    mask    u8[T]    each 0 or 1

Total size is 32 + 4*T*C*(1 + has_student) + 4*T + T bytes exactly.
write(read(f)) reproduces f byte for byte.

CSV conventions: LF line endings, reals printed as the shortest decimal that
round-trips to the same double, comment lines start with '#'.
"""

from __future__ import annotations

import struct

import numpy as np

from .decompose import BatchDecomposition, LogitBatch
from .errors import (
    BadMagicError,
    InvalidInputError,
    InvariantViolationError,
    TruncatedFileError,
    VersionMismatchError,
)
from .objective import TokenSplit

__all__ = [
    "LOGIT_MAGIC",
    "LOGIT_VERSION",
    "read_logit_file",
    "write_logit_file",
    "write_report",
    "kde_emit",
    "silverman_bandwidth",
    "fmt_float",
    "REPORT_HEADER",
]

LOGIT_MAGIC = b"ATKD-LGT"
LOGIT_VERSION = 1
_LGT_HEADER = struct.Struct("<IQQI")  # version, T, C, flags
_LGT_PAYLOAD_START = len(LOGIT_MAGIC) + _LGT_HEADER.size

REPORT_HEADER = "token_index,unc,tkd,dkd,kl_total,split"

KDE_BANDWIDTH_FLOOR = 1e-3


def _f32_block(data: bytes, offset: int, count: int, what: str) -> np.ndarray:
    arr = np.frombuffer(data, dtype="<f4", count=count, offset=offset)
    finite = np.isfinite(arr)
    if not finite.all():
        bad = int(np.argmin(finite))
        raise InvariantViolationError(
            f"non-finite {what} value at flat index {bad}", offset=offset + 4 * bad
        )
    return arr.astype(np.float64)


def read_logit_file(path: str) -> LogitBatch:
    """Parse a LogitFile into a validated batch (float64 upcast)."""
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < len(LOGIT_MAGIC):
        raise TruncatedFileError("file shorter than magic", offset=len(data))
    if data[: len(LOGIT_MAGIC)] != LOGIT_MAGIC:
        raise BadMagicError(f"expected {LOGIT_MAGIC!r}", offset=0)
    if len(data) < _LGT_PAYLOAD_START:
        raise TruncatedFileError("file ends inside header", offset=len(data))
    version, T, C, flags = _LGT_HEADER.unpack(data[len(LOGIT_MAGIC) : _LGT_PAYLOAD_START])
    if version != LOGIT_VERSION:
        raise VersionMismatchError(
            f"unsupported version {version}, expected {LOGIT_VERSION}",
            offset=len(LOGIT_MAGIC),
        )
    if flags & ~0x1:
        raise InvariantViolationError(
            f"unknown flag bits 0x{flags & ~0x1:x}", offset=_LGT_PAYLOAD_START - 4
        )
    if T < 1 or C < 2:
        raise InvariantViolationError(
            f"need T >= 1 and C >= 2, got T={T} C={C}", offset=len(LOGIT_MAGIC) + 4
        )
    has_student = bool(flags & 0x1)
    expected = _LGT_PAYLOAD_START + 4 * T * C * (1 + has_student) + 4 * T + T
    if len(data) < expected:
        raise TruncatedFileError(
            f"need {expected} bytes, have {len(data)}", offset=len(data)
        )
    if len(data) > expected:
        raise InvariantViolationError(
            f"{len(data) - expected} trailing bytes", offset=expected
        )

    pos = _LGT_PAYLOAD_START
    teacher = _f32_block(data, pos, T * C, "teacher logit").reshape(T, C)
    pos += 4 * T * C
    student = None
    if has_student:
        student = _f32_block(data, pos, T * C, "student logit").reshape(T, C)
        pos += 4 * T * C
    targets = np.frombuffer(data, dtype="<u4", count=T, offset=pos).astype(np.int64)
    if targets.max() >= C:
        bad = int(np.argmax(targets >= C))
        raise InvariantViolationError(
            f"target {targets[bad]} out of range at token {bad}", offset=pos + 4 * bad
        )
    pos += 4 * T
    mask_raw = np.frombuffer(data, dtype=np.uint8, count=T, offset=pos)
    if not np.isin(mask_raw, (0, 1)).all():
        bad = int(np.argmin(np.isin(mask_raw, (0, 1))))
        raise InvariantViolationError(
            f"mask byte {mask_raw[bad]} not 0/1 at token {bad}", offset=pos + bad
        )
    return LogitBatch(teacher, student, targets, mask_raw.astype(bool))


def write_logit_file(batch: LogitBatch, path: str) -> None:
    """Serialize a batch; float64 logits are stored as little-endian f32."""
    T, C = batch.num_tokens, batch.num_classes
    flags = 1 if batch.student_logits is not None else 0
    with open(path, "wb") as f:
        f.write(LOGIT_MAGIC)
        f.write(_LGT_HEADER.pack(LOGIT_VERSION, T, C, flags))
        f.write(np.ascontiguousarray(batch.teacher_logits, dtype="<f4").tobytes())
        if flags:
            f.write(np.ascontiguousarray(batch.student_logits, dtype="<f4").tobytes())
        f.write(batch.targets.astype("<u4").tobytes())
        f.write(batch.mask.astype(np.uint8).tobytes())


def fmt_float(x: float) -> str:
    """Shortest decimal that parses back to the exact same double."""
    return repr(float(x))


_fmt = fmt_float


def write_report(decomposition: BatchDecomposition, split: TokenSplit, path: str) -> None:
    """Per-token CSV over mask-true tokens, labeled by their hard/easy side."""
    active = np.flatnonzero(decomposition.mask)
    if split.n_hard + split.n_easy != active.shape[0]:
        raise InvalidInputError(
            f"split covers {split.n_hard + split.n_easy} tokens, "
            f"decomposition has {active.shape[0]} mask-true"
        )
    hard = set(int(i) for i in split.hard_indices)
    easy = set(int(i) for i in split.easy_indices)
    if not (hard | easy) <= set(int(i) for i in active):
        raise InvalidInputError("split indices are not a subset of mask-true tokens")
    with open(path, "w", newline="\n") as f:
        f.write(REPORT_HEADER + "\n")
        for i in active:
            label = "hard" if int(i) in hard else "easy"
            f.write(
                f"{int(i)},{_fmt(decomposition.unc[i])},{_fmt(decomposition.tkd[i])},"
                f"{_fmt(decomposition.dkd[i])},{_fmt(decomposition.kl_total[i])},{label}\n"
            )


def silverman_bandwidth(samples: np.ndarray) -> tuple[float, bool]:
    """0.9 * min(sigma, IQR/1.34) * n^(-1/5), floored at 1e-3.

    Returns (bandwidth, floored). The floor keeps degenerate all-equal inputs
    usable instead of producing a zero-width kernel.
    """
    s = np.asarray(samples, dtype=np.float64)
    n = s.shape[0]
    sigma = float(np.std(s, ddof=1))
    q25, q75 = np.percentile(s, [25.0, 75.0])
    spread = min(sigma, (float(q75) - float(q25)) / 1.34)
    h = 0.9 * spread * n ** (-1.0 / 5.0)
    if h < KDE_BANDWIDTH_FLOOR:
        return KDE_BANDWIDTH_FLOOR, True
    return h, False


def kde_emit(
    samples: np.ndarray, grid_points: int, path: str, comments: list[str] | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian KDE on a uniform grid over [0, 1], written as `x,density` CSV.

    Mass can legitimately fall outside [0, 1] for samples piled near the
    boundary, so the trapezoidal integral over the grid is allowed to drop to
    0.90 (and stay <= 1.02). Returns the (grid, density) arrays as written.
    """
    s = np.asarray(samples, dtype=np.float64).ravel()
    if s.shape[0] < 2:
        raise InvalidInputError(f"need >= 2 samples, got {s.shape[0]}")
    if grid_points < 16:
        raise InvalidInputError(f"need >= 16 grid points, got {grid_points}")
    if not np.isfinite(s).all():
        raise InvalidInputError("samples must be finite")

    h, floored = silverman_bandwidth(s)
    grid = np.linspace(0.0, 1.0, int(grid_points))
    norm = 1.0 / (s.shape[0] * h * np.sqrt(2.0 * np.pi))
    density = np.empty(grid.shape[0])
    chunk = max(1, int(2_000_000 // max(s.shape[0], 1)))
    for start in range(0, grid.shape[0], chunk):
        g = grid[start : start + chunk, None]
        z = (g - s[None, :]) / h
        density[start : start + chunk] = norm * np.exp(-0.5 * z * z).sum(axis=1)

    with open(path, "w", newline="\n") as f:
        for line in comments or []:
            f.write(f"# {line}\n")
        f.write(f"# bandwidth={_fmt(h)}\n")
        if floored:
            f.write(f"# bandwidth floored to {_fmt(KDE_BANDWIDTH_FLOOR)} (degenerate spread)\n")
        f.write("x,density\n")
        for x, d in zip(grid, density):
            f.write(f"{_fmt(x)},{_fmt(d)}\n")
    return grid, density
