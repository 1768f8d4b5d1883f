"""Loss modes built on the token decomposition, including the adaptive one.

Seven modes are supported. Four are plain reductions of per-token terms
(forward KL, reverse KL, tkd only, dkd only), two recombine the parts with
the uncertainty coefficient deliberately removed (tkd + dkd, and the scaled
variant alpha * tkd + dkd), and the last is the adaptive objective: rank
tokens by teacher uncertainty, call the top-k fraction *hard* and the rest
*easy*, then mix

    loss = lam * mean_{easy}(dkd) + (1 - lam) * mean_{hard}(tkd + dkd).

Reduction conventions (uniform across modes):

- every reduction is a MEAN over the relevant token set, not a sum, so the
  mixing weight keeps its meaning as the hard fraction k varies;
- an empty hard or easy set contributes 0 and the weights are NOT
  renormalized, which makes k=0 and k=1 behave as true boundary cases;
- ranking ties are broken by ascending token index, and the hard count is
  round-half-up of k * n, so splits are fully deterministic.

Exact mode-collapse identities (bit-for-bit, relied on by tests):
adaptive loss at k=1, lam=0 equals the tkd+dkd mode; alpha=1 equals
tkd+dkd; alpha=0 equals dkd-only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .decompose import LogitBatch, batch_decompose
from .errors import ConfigError, EmptyBatchError, InvalidInputError

__all__ = [
    "Mode",
    "ObjectiveConfig",
    "TokenSplit",
    "rank_and_split",
    "atkd_loss",
    "objective_eval",
    "atkd_on_reverse",
]


class Mode(Enum):
    """Training objective selector."""

    FORWARD_KL = "forward_kl"
    REVERSE_KL = "reverse_kl"
    TKD_ONLY = "tkd_only"
    DKD_ONLY = "dkd_only"
    TKD_PLUS_DKD = "tkd_plus_dkd"
    ALPHA_TKD_DKD = "alpha_tkd_dkd"
    ATKD = "atkd"

    @classmethod
    def parse(cls, name: str) -> "Mode":
        """Accepts the canonical value with either - or _ separators."""
        key = str(name).strip().lower().replace("-", "_")
        for mode in cls:
            if mode.value == key:
                return mode
        known = ", ".join(m.value for m in cls)
        raise ConfigError(f"unknown objective mode {name!r}; expected one of: {known}")


@dataclass(frozen=True)
class ObjectiveConfig:
    """A loss mode plus its hyperparameters.

    ``k_ratio`` is the hard-token fraction and ``lam`` the easy/hard mixing
    weight (both only used by the adaptive mode); ``alpha`` scales the tkd
    part in the alpha_tkd_dkd mode. Defaults follow the reference setting:
    half the tokens hard, lam = 0.2, alpha = 1.
    """

    mode: Mode = Mode.FORWARD_KL
    k_ratio: float = 0.5
    lam: float = 0.2
    alpha: float = 1.0

    def __post_init__(self) -> None:
        if not isinstance(self.mode, Mode):
            object.__setattr__(self, "mode", Mode.parse(self.mode))
        for name, lo, hi in (("k_ratio", 0.0, 1.0), ("lam", 0.0, 1.0)):
            v = float(getattr(self, name))
            if not (math.isfinite(v) and lo <= v <= hi):
                raise ConfigError(f"{name} must be in [{lo}, {hi}], got {getattr(self, name)!r}")
            object.__setattr__(self, name, v)
        a = float(self.alpha)
        if not (math.isfinite(a) and a >= 0.0):
            raise ConfigError(f"alpha must be finite and >= 0, got {self.alpha!r}")
        object.__setattr__(self, "alpha", a)


@dataclass(frozen=True)
class TokenSplit:
    """Disjoint hard/easy partition of the mask-true token indices.

    Both index arrays are ascending; together they cover exactly the
    mask-true positions of the batch they were computed from.
    """

    hard_indices: np.ndarray
    easy_indices: np.ndarray

    @property
    def n_hard(self) -> int:
        return int(self.hard_indices.size)

    @property
    def n_easy(self) -> int:
        return int(self.easy_indices.size)


def hard_count(k_ratio: float, n: int) -> int:
    """Round-half-up of k_ratio * n, clamped to [0, n]."""
    return min(n, max(0, int(math.floor(float(k_ratio) * n + 0.5))))


def rank_and_split(unc: np.ndarray, mask: np.ndarray, k_ratio: float) -> TokenSplit:
    """Rank mask-true tokens by descending uncertainty; top fraction is hard.

    Ranking spans the whole batch jointly, never per sequence. Exact ties in
    ``unc`` are resolved toward the lower token index, so the split is a pure
    function of its inputs.

    Raises EmptyBatchError when no token is mask-true and InvalidInputError
    for shape problems or k_ratio outside [0, 1].
    """
    u = np.asarray(unc, dtype=np.float64)
    m = np.asarray(mask, dtype=bool)
    if u.ndim != 1 or m.shape != u.shape:
        raise InvalidInputError(
            f"unc and mask must be 1-D and aligned, got {u.shape} and {m.shape}"
        )
    if not 0.0 <= float(k_ratio) <= 1.0:
        raise InvalidInputError(f"k_ratio must be in [0, 1], got {k_ratio!r}")
    sel = np.flatnonzero(m)
    if sel.size == 0:
        raise EmptyBatchError("cannot split: every token is masked out")
    # lexsort: last key is primary. -unc ascending = unc descending; equal
    # unc falls through to the ascending-index key.
    order = np.lexsort((sel, -u[sel]))
    ranked = sel[order]
    k = hard_count(k_ratio, sel.size)
    return TokenSplit(np.sort(ranked[:k]), np.sort(ranked[k:]))


def _adaptive_value(
    tkd: np.ndarray, dkd: np.ndarray, split: TokenSplit, lam: float
) -> float:
    e, h = split.easy_indices, split.hard_indices
    loss_easy = float(np.mean(dkd[e])) if e.size else 0.0
    loss_hard = float(np.mean(tkd[h] + dkd[h])) if h.size else 0.0
    return lam * loss_easy + (1.0 - lam) * loss_hard


def _require_unmasked(batch: LogitBatch) -> np.ndarray:
    sel = np.flatnonzero(batch.mask)
    if sel.size == 0:
        raise EmptyBatchError("objective undefined: every token is masked out")
    return sel


def atkd_loss(batch: LogitBatch, cfg: ObjectiveConfig) -> float:
    """Adaptive loss: lam * mean_easy(dkd) + (1 - lam) * mean_hard(tkd + dkd).

    ``cfg.mode`` must be the adaptive mode; use :func:`objective_eval` for
    generic dispatch.
    """
    if cfg.mode is not Mode.ATKD:
        raise ConfigError(f"atkd_loss got mode {cfg.mode.value!r}")
    _require_unmasked(batch)
    d = batch_decompose(batch)
    split = rank_and_split(d.unc, batch.mask, cfg.k_ratio)
    return _adaptive_value(d.tkd, d.dkd, split, cfg.lam)


def objective_eval(batch: LogitBatch, cfg: ObjectiveConfig) -> float:
    """Value of the configured loss on one batch (mean over mask-true tokens)."""
    if cfg.mode is Mode.ATKD:
        return atkd_loss(batch, cfg)
    sel = _require_unmasked(batch)
    d = batch_decompose(batch, reverse=cfg.mode is Mode.REVERSE_KL)
    if cfg.mode is Mode.FORWARD_KL or cfg.mode is Mode.REVERSE_KL:
        return float(np.mean(d.kl_total[sel]))
    if cfg.mode is Mode.TKD_ONLY:
        return float(np.mean(d.tkd[sel]))
    if cfg.mode is Mode.DKD_ONLY:
        return float(np.mean(d.dkd[sel]))
    if cfg.mode is Mode.TKD_PLUS_DKD:
        return float(np.mean(d.tkd[sel] + d.dkd[sel]))
    if cfg.mode is Mode.ALPHA_TKD_DKD:
        return float(np.mean(cfg.alpha * d.tkd[sel] + d.dkd[sel]))
    raise ConfigError(f"unknown objective mode {cfg.mode!r}")


def atkd_on_reverse(batch: LogitBatch, cfg: ObjectiveConfig) -> float:
    """Adaptive mixing applied to reverse-direction terms.

    Ranking still uses the TEACHER's uncertainty; only the per-token KLs
    swap direction (student-led binary and non-target divergences). How the
    adaptive recipe should compose with reverse distillation is not pinned
    down by its source; this pairing (teacher-side ranking, student-led
    terms) is this library's documented choice.
    """
    _require_unmasked(batch)
    d = batch_decompose(batch, reverse=True)
    split = rank_and_split(d.unc, batch.mask, cfg.k_ratio)
    return _adaptive_value(d.tkd, d.dkd, split, cfg.lam)
