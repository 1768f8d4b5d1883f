"""Analytical gradients of every loss mode w.r.t. student logits.

Closed forms, per mask-true token with target g, student softmax q, teacher
softmax p, non-target renormalizations qhat/phat (zero in the target slot),
and e_g the one-hot vector at g:

- forward KL:        q - p
- tkd:               (e_g - q) * s,  s = q_g * exp(log p_nt - log q_nt) - p_g
- dkd:               qhat - phat
- reverse KL:        q * ((log q - log p) - KL(q||p))
- reverse tkd:       (e_g - q) * q_g * ((lq_g - lp_g) - (lq_nt - lp_nt))
- reverse dkd:       qhat * ((log qhat - log phat) - KL(qhat||phat))

The adaptive split is a constant w.r.t. student logits: the ranking key is
the teacher's uncertainty, a frozen quantity, so no relaxation of the top-k
selection is needed (and none must ever be added). Composite modes scale
and sum the rows above, then divide by the relevant token count; mask-false
rows are exactly zero, and every mask-true row sums to 0 because each loss
sees the logits only through shift-invariant softmax quantities.

The finite-difference verifier :func:`fd_check` is the correctness
authority for all of the above.
"""

from __future__ import annotations

import numpy as np

from .decompose import LogitBatch, _log_parts, batch_decompose
from .errors import InvalidInputError
from .objective import Mode, ObjectiveConfig, objective_eval, rank_and_split

__all__ = ["loss_grad", "fd_check"]


def _forward_rows(p_parts, q_parts, targets: np.ndarray):
    """(g_full, g_tkd, g_dkd) rows for the forward-direction terms."""
    n = targets.shape[0]
    rows = np.arange(n)
    q = np.exp(q_parts.logp)
    p = np.exp(p_parts.logp)
    onehot = np.zeros_like(q)
    onehot[rows, targets] = 1.0
    # s -> 0 bit-exactly when teacher == student: the log ratio is +0.0
    s = np.exp(q_parts.logp_t) * np.exp(p_parts.logp_nt - q_parts.logp_nt) - np.exp(
        p_parts.logp_t
    )
    g_tkd = (onehot - q) * s[:, None]
    g_dkd = np.exp(q_parts.logphat) - np.exp(p_parts.logphat)
    return q - p, g_tkd, g_dkd


def _reverse_rows(p_parts, q_parts, targets: np.ndarray):
    """(g_full, g_tkd, g_dkd) rows for the reverse-direction terms."""
    n = targets.shape[0]
    rows = np.arange(n)
    q = np.exp(q_parts.logp)
    onehot = np.zeros_like(q)
    onehot[rows, targets] = 1.0
    diff = q_parts.logp - p_parts.logp
    kl_rev = np.sum(q * diff, axis=-1)
    g_full = q * (diff - kl_rev[:, None])
    bin_gap = (q_parts.logp_t - p_parts.logp_t) - (q_parts.logp_nt - p_parts.logp_nt)
    g_tkd = (onehot - q) * (np.exp(q_parts.logp_t) * bin_gap)[:, None]
    qhat = np.exp(q_parts.logphat)
    # target slot: qhat = 0 and both log terms are -inf; subtract only off it
    diff_hat = np.subtract(
        q_parts.logphat, p_parts.logphat, out=np.zeros_like(qhat), where=qhat > 0.0
    )
    dkd_rev = np.sum(qhat * diff_hat, axis=-1)
    g_dkd = qhat * (diff_hat - dkd_rev[:, None])
    return g_full, g_tkd, g_dkd


def loss_grad(batch: LogitBatch, cfg: ObjectiveConfig) -> tuple[float, np.ndarray]:
    """Loss value and its exact gradient w.r.t. the student logits.

    The returned loss goes through the same code path as
    :func:`atkd.objective.objective_eval`, so the two agree bit for bit.
    The gradient has the batch's (T, C) shape with zero rows wherever the
    mask is false.
    """
    loss = objective_eval(batch, cfg)
    sz = batch.require_student()
    T, C = sz.shape
    sel = np.flatnonzero(batch.mask)
    n = sel.size
    tg = batch.targets[sel]
    p_parts = _log_parts(batch.teacher_logits[sel], tg)
    q_parts = _log_parts(sz[sel], tg)

    grad = np.zeros((T, C), dtype=np.float64)
    mode = cfg.mode
    if mode is Mode.ATKD:
        g_full, g_tkd, g_dkd = _forward_rows(p_parts, q_parts, tg)
        unc = np.exp(p_parts.logp_nt)
        full_unc = np.zeros(T)
        full_unc[sel] = unc
        split = rank_and_split(full_unc, batch.mask, cfg.k_ratio)
        pos = np.full(T, -1, dtype=np.int64)
        pos[sel] = np.arange(n)
        if split.n_easy:
            e = pos[split.easy_indices]
            grad[split.easy_indices] = g_dkd[e] * (cfg.lam / split.n_easy)
        if split.n_hard:
            h = pos[split.hard_indices]
            grad[split.hard_indices] = (g_tkd[h] + g_dkd[h]) * ((1.0 - cfg.lam) / split.n_hard)
        return loss, grad

    if mode is Mode.REVERSE_KL:
        g_full, g_tkd, g_dkd = _reverse_rows(p_parts, q_parts, tg)
    else:
        g_full, g_tkd, g_dkd = _forward_rows(p_parts, q_parts, tg)

    if mode is Mode.FORWARD_KL or mode is Mode.REVERSE_KL:
        rows = g_full * (1.0 / n)
    elif mode is Mode.TKD_ONLY:
        rows = g_tkd * (1.0 / n)
    elif mode is Mode.DKD_ONLY:
        rows = g_dkd * (1.0 / n)
    elif mode is Mode.TKD_PLUS_DKD:
        rows = (g_tkd + g_dkd) * (1.0 / n)
    elif mode is Mode.ALPHA_TKD_DKD:
        rows = (cfg.alpha * g_tkd + g_dkd) * (1.0 / n)
    else:  # pragma: no cover - Mode is closed
        raise AssertionError(f"unhandled mode {mode!r}")
    grad[sel] = rows
    return loss, grad


def fd_check(batch: LogitBatch, cfg: ObjectiveConfig, epsilon: float = 1e-5) -> float:
    """Max relative error between analytical and central-difference gradients.

    Every mask-true coordinate of the student logits is perturbed by
    +-epsilon; the numerical slope (L+ - L-) / (2 eps) is compared to the
    analytical entry with relative error |a - n| / max(|a|, |n|, 1e-8).
    The adaptive split is frozen from the unperturbed batch: the ranking
    key depends only on teacher logits, which the perturbation never
    touches, and that constancy is asserted below rather than assumed.
    """
    eps = float(epsilon)
    if not 1e-8 <= eps <= 1e-3:
        raise InvalidInputError(f"epsilon must be in [1e-8, 1e-3], got {epsilon!r}")
    sz = batch.require_student()
    _, grad = loss_grad(batch, cfg)

    unc0 = batch_decompose(batch).unc

    def eval_at(logits: np.ndarray) -> float:
        b = LogitBatch(batch.teacher_logits, logits, batch.targets, batch.mask)
        return objective_eval(b, cfg)

    max_rel = 0.0
    first = True
    for t in np.flatnonzero(batch.mask):
        for c in range(sz.shape[1]):
            plus = sz.copy()
            plus[t, c] += eps
            minus = sz.copy()
            minus[t, c] -= eps
            if first:
                moved = batch_decompose(
                    LogitBatch(batch.teacher_logits, plus, batch.targets, batch.mask)
                ).unc
                assert np.array_equal(moved, unc0), "split key moved under student perturbation"
                first = False
            num = (eval_at(plus) - eval_at(minus)) / (2.0 * eps)
            a = grad[t, c]
            rel = abs(a - num) / max(abs(a), abs(num), 1e-8)
            max_rel = max(max_rel, rel)
    return max_rel
