"""Per-token decomposition of the distillation divergence.

For one token with teacher distribution p, student distribution q, and
target class g, the forward KL splits exactly into two parts:

    KL(p || q) = tkd + unc * dkd

where

- ``tkd`` is the KL between the binary splits (p_g, 1 - p_g) and
  (q_g, 1 - q_g): how well the student matches the teacher's confidence
  *on the ground-truth class*;
- ``dkd`` is the KL between the non-target renormalizations phat and qhat:
  how well the student matches the teacher's ranking *among the wrong
  classes*;
- ``unc`` = 1 - p_g is the teacher's non-target mass, an uncertainty
  coefficient that scales how much dkd contributes.

``kl_total`` is always computed independently from the full distributions,
never as tkd + unc * dkd, so the identity is a checkable property rather
than a tautology. It holds to ~1e-9 in double precision.

Everything here runs in log space on (T, C) batches; per-token scalars are
exposed through :func:`token_decompose` for exploratory use.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import InvalidInputError
from .probs import logsumexp

__all__ = [
    "LogitBatch",
    "TokenDecomposition",
    "BatchDecomposition",
    "token_decompose",
    "batch_decompose",
]


class _LogParts(NamedTuple):
    """Log-space ingredients of the decomposition for one (T, C) batch."""

    logp: np.ndarray      # (T, C) full log-probabilities
    logp_t: np.ndarray    # (T,)   log-prob of the target class
    logp_nt: np.ndarray   # (T,)   log of the total non-target mass
    logphat: np.ndarray   # (T, C) non-target renorm log-probs; -inf in the target slot


def _log_parts(logits: np.ndarray, targets: np.ndarray) -> _LogParts:
    T, C = logits.shape
    rows = np.arange(T)
    lse_all = logsumexp(logits, axis=-1)
    logp = logits - lse_all[:, None]
    masked = logits.copy()
    masked[rows, targets] = -np.inf
    lse_nt = logsumexp(masked, axis=-1)
    # log(1 - p_t) without ever forming 1 - p_t; exact even for p_t ~ 1
    logp_nt = lse_nt - lse_all
    logphat = masked - lse_nt[:, None]
    return _LogParts(logp, logp[rows, targets], logp_nt, logphat)


def _validate_batch(
    teacher_logits: np.ndarray,
    student_logits: np.ndarray | None,
    targets: np.ndarray,
    mask: np.ndarray | None,
) -> tuple[np.ndarray, np.ndarray | None, np.ndarray, np.ndarray]:
    tz = np.asarray(teacher_logits, dtype=np.float64)
    if tz.ndim != 2 or tz.shape[1] < 2:
        raise InvalidInputError(
            f"teacher_logits must be (T, C) with C >= 2, got shape {tz.shape}"
        )
    T, C = tz.shape
    if not np.isfinite(tz).all():
        t, c = (int(i) for i in np.argwhere(~np.isfinite(tz))[0])
        raise InvalidInputError(f"non-finite teacher logit at token {t}, class {c}")
    sz = None
    if student_logits is not None:
        sz = np.asarray(student_logits, dtype=np.float64)
        if sz.shape != (T, C):
            raise InvalidInputError(
                f"student_logits shape {sz.shape} does not match teacher {(T, C)}"
            )
        if not np.isfinite(sz).all():
            t, c = (int(i) for i in np.argwhere(~np.isfinite(sz))[0])
            raise InvalidInputError(f"non-finite student logit at token {t}, class {c}")
    tg = np.asarray(targets)
    if tg.shape != (T,) or not np.issubdtype(tg.dtype, np.integer):
        raise InvalidInputError(
            f"targets must be integer with shape {(T,)}, got {tg.dtype} {tg.shape}"
        )
    tg = tg.astype(np.int64)
    if T and (tg.min() < 0 or tg.max() >= C):
        bad = int(np.argmax((tg < 0) | (tg >= C)))
        raise InvalidInputError(
            f"target {int(tg[bad])} at token {bad} out of range for {C} classes"
        )
    if mask is None:
        mk = np.ones(T, dtype=bool)
    else:
        mk = np.asarray(mask)
        if mk.shape != (T,):
            raise InvalidInputError(f"mask must have shape {(T,)}, got {mk.shape}")
        if mk.dtype != bool:
            vals = np.unique(mk)
            if not np.isin(vals, (0, 1)).all():
                raise InvalidInputError(f"mask values must be 0/1, got {vals[:8]}")
            mk = mk.astype(bool)
    return tz, sz, tg, mk


@dataclass(frozen=True)
class LogitBatch:
    """A batch of T aligned teacher/student prediction sites.

    ``teacher_logits`` and (optionally) ``student_logits`` are (T, C) and
    share the vocabulary axis; ``targets`` holds the ground-truth class per
    token and ``mask`` marks tokens that participate in losses (padding and
    prompt positions are typically masked out). Validation happens on
    construction; instances are immutable.
    """

    teacher_logits: np.ndarray
    student_logits: np.ndarray | None
    targets: np.ndarray
    mask: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        tz, sz, tg, mk = _validate_batch(
            self.teacher_logits, self.student_logits, self.targets, self.mask
        )
        object.__setattr__(self, "teacher_logits", tz)
        object.__setattr__(self, "student_logits", sz)
        object.__setattr__(self, "targets", tg)
        object.__setattr__(self, "mask", mk)

    @property
    def num_tokens(self) -> int:
        return self.teacher_logits.shape[0]

    @property
    def num_classes(self) -> int:
        return self.teacher_logits.shape[1]

    def require_student(self) -> np.ndarray:
        if self.student_logits is None:
            raise InvalidInputError("this operation needs student logits, none present")
        return self.student_logits


class TokenDecomposition(NamedTuple):
    """Decomposition of one token's distillation divergence."""

    unc: float
    tkd: float
    dkd: float
    kl_total: float


@dataclass(frozen=True)
class BatchDecomposition:
    """Arrays of per-token decomposition terms, zero at masked-out tokens.

    ``unc`` is the *teacher's* uncertainty regardless of which direction the
    divergence was taken in; it is the quantity adaptive objectives rank by.
    """

    unc: np.ndarray
    tkd: np.ndarray
    dkd: np.ndarray
    kl_total: np.ndarray
    mask: np.ndarray

    def __len__(self) -> int:
        return self.tkd.shape[0]


def _kl_terms(
    p_parts: _LogParts, q_parts: _LogParts
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(tkd, dkd, kl_total) rows for KL(p || q) given both log-part bundles."""
    p = np.exp(p_parts.logp)
    p_t = np.exp(p_parts.logp_t)
    p_nt = np.exp(p_parts.logp_nt)
    # binary KL over {target, rest}; convention 0*log(0/q) = 0 handled by
    # the masks (p_t = 0 or p_nt = 0 only when a logit gap underflows)
    tkd = np.where(p_t > 0.0, p_t * (p_parts.logp_t - q_parts.logp_t), 0.0)
    tkd = tkd + np.where(p_nt > 0.0, p_nt * (p_parts.logp_nt - q_parts.logp_nt), 0.0)
    phat = np.exp(p_parts.logphat)
    # target slots hold -inf in both logphat arrays; subtract only where the
    # leader has mass so no (-inf) - (-inf) is ever formed
    diff_hat = np.subtract(
        p_parts.logphat, q_parts.logphat, out=np.zeros_like(phat), where=phat > 0.0
    )
    dkd = np.sum(phat * diff_hat, axis=-1)
    kl_total = np.sum(np.where(p > 0.0, p * (p_parts.logp - q_parts.logp), 0.0), axis=-1)
    return tkd, dkd, kl_total


def batch_decompose(batch: LogitBatch, *, reverse: bool = False) -> BatchDecomposition:
    """Decompose KL(teacher || student) at every unmasked token.

    With ``reverse=True`` the KL arguments swap (student-led divergence,
    KL(q || p)) in tkd, dkd, and kl_total, but ``unc`` stays the teacher's
    non-target mass, since that is the coefficient adaptive ranking uses.
    Rows where the mask is false are exactly 0.0 in every field; an all-false
    mask is legal here and simply yields all-zero arrays (losses reduced over
    such a batch fail later, with an empty-batch error, where the reduction
    happens).

    The identity kl_total = tkd + unc_of_leader * dkd holds per token to
    ~1e-9, where unc_of_leader is 1 - (leading distribution's target mass);
    kl_total is computed from the full distributions, never via the identity.
    """
    tz = batch.teacher_logits
    sz = batch.require_student()
    tg, mk = batch.targets, batch.mask
    T = tz.shape[0]
    out = {k: np.zeros(T, dtype=np.float64) for k in ("unc", "tkd", "dkd", "kl_total")}
    idx = np.flatnonzero(mk)
    if idx.size:
        p_parts = _log_parts(tz[idx], tg[idx])
        q_parts = _log_parts(sz[idx], tg[idx])
        lead, follow = (q_parts, p_parts) if reverse else (p_parts, q_parts)
        tkd, dkd, kl_total = _kl_terms(lead, follow)
        out["tkd"][idx] = tkd
        out["dkd"][idx] = dkd
        out["kl_total"][idx] = kl_total
        out["unc"][idx] = np.exp(p_parts.logp_nt)
    return BatchDecomposition(mask=mk, **out)


def token_decompose(
    teacher_logits: np.ndarray,
    student_logits: np.ndarray,
    target_index: int,
) -> TokenDecomposition:
    """Single-token decomposition; returns (unc, tkd, dkd, kl_total)."""
    tz = np.asarray(teacher_logits, dtype=np.float64)
    sz = np.asarray(student_logits, dtype=np.float64)
    if tz.ndim != 1 or sz.ndim != 1:
        raise InvalidInputError(
            f"expected 1-D logit vectors, got shapes {tz.shape} and {sz.shape}"
        )
    b = batch_decompose(
        LogitBatch(tz[None, :], sz[None, :], np.array([int(target_index)]))
    )
    return TokenDecomposition(
        float(b.unc[0]), float(b.tkd[0]), float(b.dkd[0]), float(b.kl_total[0])
    )
