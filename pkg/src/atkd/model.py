"""A minimal char-level autoregressive transformer, trained by hand.

Pre-norm transformer blocks (LayerNorm -> causal multi-head attention ->
residual, LayerNorm -> 4x GELU MLP (tanh form) -> residual), learned positional
embeddings, an untied output head, and a final LayerNorm. Parameters live
in one flat float32 vector; all arithmetic runs in float64 and results are
stored back to float32 only at the parameter boundary.

Parameter count as a function of the config:

    P = V*D + ctx*D + L*(12*D^2 + 13*D) + 2*D + D*V + V

(token and positional embeddings; per layer two LayerNorms, fused QKV,
attention output projection, and the two MLP matrices with biases; final
LayerNorm; output head with bias.)

Backward is a hand-written reverse pass over the same graph, returning a
flat float64 gradient aligned with the parameter vector. It is verified
against central finite differences in the test suite; the loss modules
supply ``grad_logits``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, InvalidInputError, TrainingDivergedError

__all__ = [
    "ModelConfig",
    "TinyLM",
    "Adam",
    "param_count",
    "interpolate",
    "perplexity",
    "sample",
]

_LN_EPS = 1e-5
# tanh-form GELU constants: sqrt(2/pi) and the cubic coefficient
_GELU_C0 = math.sqrt(2.0 / math.pi)
_GELU_C1 = 0.044715


@dataclass(frozen=True)
class ModelConfig:
    """Architecture + init seed; hashable and cheap to copy."""

    vocab_size: int
    d_model: int = 32
    n_layers: int = 2
    n_heads: int = 2
    context_len: int = 64
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("vocab_size", "d_model", "n_layers", "n_heads", "context_len"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
            object.__setattr__(self, name, int(v))
        if self.vocab_size < 2:
            raise ConfigError("vocab_size must be at least 2")
        if self.context_len < 2:
            raise ConfigError("context_len must be at least 2")
        if self.d_model % self.n_heads != 0:
            raise ConfigError(
                f"d_model {self.d_model} not divisible by n_heads {self.n_heads}"
            )
        if not isinstance(self.seed, (int, np.integer)) or self.seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {self.seed!r}")
        object.__setattr__(self, "seed", int(self.seed))

    def with_seed(self, seed: int) -> "ModelConfig":
        return replace(self, seed=int(seed))


def _layout(cfg: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    V, D, L, ctx = cfg.vocab_size, cfg.d_model, cfg.n_layers, cfg.context_len
    names: list[tuple[str, tuple[int, ...]]] = [
        ("tok_emb", (V, D)),
        ("pos_emb", (ctx, D)),
    ]
    for i in range(L):
        names += [
            (f"l{i}.ln1.g", (D,)),
            (f"l{i}.ln1.b", (D,)),
            (f"l{i}.attn.w_qkv", (D, 3 * D)),
            (f"l{i}.attn.b_qkv", (3 * D,)),
            (f"l{i}.attn.w_o", (D, D)),
            (f"l{i}.attn.b_o", (D,)),
            (f"l{i}.ln2.g", (D,)),
            (f"l{i}.ln2.b", (D,)),
            (f"l{i}.mlp.w1", (D, 4 * D)),
            (f"l{i}.mlp.b1", (4 * D,)),
            (f"l{i}.mlp.w2", (4 * D, D)),
            (f"l{i}.mlp.b2", (D,)),
        ]
    names += [("lnf.g", (D,)), ("lnf.b", (D,)), ("head.w", (D, V)), ("head.b", (V,))]
    return names


def param_count(cfg: ModelConfig) -> int:
    V, D, L, ctx = cfg.vocab_size, cfg.d_model, cfg.n_layers, cfg.context_len
    return V * D + ctx * D + L * (12 * D * D + 13 * D) + 2 * D + D * V + V


def _init_params(cfg: ModelConfig) -> np.ndarray:
    rng = np.random.default_rng(cfg.seed)
    chunks = []
    for name, shape in _layout(cfg):
        leaf = name.rsplit(".", 1)[-1]
        if leaf.startswith("w") or name in ("tok_emb", "pos_emb"):
            arr = rng.normal(0.0, 0.02, size=shape)
        elif leaf == "g":
            arr = np.ones(shape)
        else:  # biases and LayerNorm shifts start at zero
            arr = np.zeros(shape)
        chunks.append(arr.astype(np.float32).ravel())
    return np.concatenate(chunks)


class TinyLM:
    """Flat-parameter transformer LM with hand-written backprop."""

    def __init__(self, config: ModelConfig, params: np.ndarray | None = None):
        self.config = config
        P = param_count(config)
        if params is None:
            params = _init_params(config)
        params = np.asarray(params)
        if params.shape != (P,) or params.dtype != np.float32:
            raise InvalidInputError(
                f"params must be float32 with shape ({P},), got {params.dtype} {params.shape}"
            )
        self.params = params

    @property
    def param_count(self) -> int:
        return self.params.shape[0]

    def views(self) -> dict[str, np.ndarray]:
        """Zero-copy named views into the flat parameter vector.

        Writing through a view mutates the model; concatenating the raveled
        views in layout order reproduces ``params`` bit for bit.
        """
        out = {}
        offset = 0
        for name, shape in _layout(self.config):
            n = int(np.prod(shape))
            out[name] = self.params[offset : offset + n].reshape(shape)
            offset += n
        return out

    def copy(self) -> "TinyLM":
        return TinyLM(self.config, self.params.copy())

    # ---- forward ----

    def _check_tokens(self, tokens) -> tuple[np.ndarray, bool]:
        t = np.asarray(tokens)
        if not np.issubdtype(t.dtype, np.integer):
            raise InvalidInputError(f"token ids must be integers, got dtype {t.dtype}")
        squeeze = t.ndim == 1
        if squeeze:
            t = t[None, :]
        if t.ndim != 2:
            raise InvalidInputError(f"tokens must be 1-D or 2-D, got shape {t.shape}")
        if not 1 <= t.shape[1] <= self.config.context_len:
            raise InvalidInputError(
                f"sequence length {t.shape[1]} outside [1, {self.config.context_len}]"
            )
        if t.size and (t.min() < 0 or t.max() >= self.config.vocab_size):
            raise InvalidInputError("token id outside vocabulary")
        return t.astype(np.int64), squeeze

    def forward(self, tokens) -> np.ndarray:
        """Causal logits, (T, V) for 1-D input or (B, T, V) for 2-D."""
        logits, _ = self._forward(tokens)
        return logits

    def _forward(self, tokens):
        t, squeeze = self._check_tokens(tokens)
        B, T = t.shape
        cfg = self.config
        H, D = cfg.n_heads, cfg.d_model
        hd = D // H
        w = {k: v.astype(np.float64) for k, v in self.views().items()}
        cache = {"tokens": t, "w": w, "squeeze": squeeze}

        x = w["tok_emb"][t] + w["pos_emb"][:T]
        blocks = []
        scale = 1.0 / math.sqrt(hd)
        bias = _causal_bias(T)
        for i in range(cfg.n_layers):
            blk = {"x_in": x}
            h, blk["ln1"] = _ln_forward(x, w[f"l{i}.ln1.g"], w[f"l{i}.ln1.b"])
            qkv = h @ w[f"l{i}.attn.w_qkv"] + w[f"l{i}.attn.b_qkv"]
            q, k, v = (
                qkv[..., j * D : (j + 1) * D]
                .reshape(B, T, H, hd)
                .transpose(0, 2, 1, 3)
                for j in range(3)
            )
            scores = np.matmul(q, k.transpose(0, 1, 3, 2))
            scores *= scale
            scores += bias
            probs = _softmax_last(scores)
            ctx = np.matmul(probs, v).transpose(0, 2, 1, 3).reshape(B, T, D)
            attn_out = ctx @ w[f"l{i}.attn.w_o"] + w[f"l{i}.attn.b_o"]
            x = x + attn_out
            blk.update(h=h, q=q, k=k, v=v, probs=probs, ctx=ctx)
            blk["x_mid"] = x
            h2, blk["ln2"] = _ln_forward(x, w[f"l{i}.ln2.g"], w[f"l{i}.ln2.b"])
            pre = h2 @ w[f"l{i}.mlp.w1"] + w[f"l{i}.mlp.b1"]
            act, gt = _gelu(pre)
            mlp_out = act @ w[f"l{i}.mlp.w2"] + w[f"l{i}.mlp.b2"]
            x = x + mlp_out
            blk.update(h2=h2, pre=pre, act=act, gt=gt)
            blocks.append(blk)
        xf, lnf_cache = _ln_forward(x, w["lnf.g"], w["lnf.b"])
        logits = xf @ w["head.w"] + w["head.b"]
        cache.update(blocks=blocks, x_last=x, xf=xf, lnf=lnf_cache)
        return (logits[0] if squeeze else logits), cache

    # ---- backward ----

    def backward(self, tokens, grad_logits: np.ndarray) -> np.ndarray:
        """Flat float64 gradient of sum(logits * grad_logits) w.r.t. params."""
        _, cache = self._forward(tokens)
        return self._backward(cache, grad_logits)

    def _backward(self, cache, grad_logits: np.ndarray) -> np.ndarray:
        cfg = self.config
        t = cache["tokens"]
        B, T = t.shape
        H, D = cfg.n_heads, cfg.d_model
        hd = D // H
        w = cache["w"]
        g = np.asarray(grad_logits, dtype=np.float64)
        if cache["squeeze"] and g.ndim == 2:
            g = g[None, :, :]
        if g.shape != (B, T, cfg.vocab_size):
            raise InvalidInputError(
                f"grad_logits shape {grad_logits.shape} does not match logits"
            )

        grads = {name: np.zeros(shape) for name, shape in _layout(cfg)}
        flat2 = lambda a: a.reshape(-1, a.shape[-1])

        xf = cache["xf"]
        grads["head.w"] += flat2(xf).T @ flat2(g)
        grads["head.b"] += flat2(g).sum(axis=0)
        dxf = g @ w["head.w"].T
        dx, dg, db = _ln_backward(dxf, cache["lnf"], w["lnf.g"])
        grads["lnf.g"] += dg
        grads["lnf.b"] += db

        scale = 1.0 / math.sqrt(hd)
        for i in reversed(range(cfg.n_layers)):
            blk = cache["blocks"][i]
            # MLP branch
            dmlp = dx
            grads[f"l{i}.mlp.w2"] += flat2(blk["act"]).T @ flat2(dmlp)
            grads[f"l{i}.mlp.b2"] += flat2(dmlp).sum(axis=0)
            dact = dmlp @ w[f"l{i}.mlp.w2"].T
            dpre = dact * _gelu_grad(blk["pre"], blk["gt"])
            grads[f"l{i}.mlp.w1"] += flat2(blk["h2"]).T @ flat2(dpre)
            grads[f"l{i}.mlp.b1"] += flat2(dpre).sum(axis=0)
            dh2 = dpre @ w[f"l{i}.mlp.w1"].T
            dx_mid, dg, db = _ln_backward(dh2, blk["ln2"], w[f"l{i}.ln2.g"])
            grads[f"l{i}.ln2.g"] += dg
            grads[f"l{i}.ln2.b"] += db
            dx = dx + dx_mid  # residual
            # attention branch
            dattn = dx
            grads[f"l{i}.attn.w_o"] += flat2(blk["ctx"]).T @ flat2(dattn)
            grads[f"l{i}.attn.b_o"] += flat2(dattn).sum(axis=0)
            dctx = (dattn @ w[f"l{i}.attn.w_o"].T).reshape(B, T, H, hd).transpose(0, 2, 1, 3)
            probs = blk["probs"]
            dprobs = np.matmul(dctx, blk["v"].transpose(0, 1, 3, 2))
            dv = np.matmul(probs.transpose(0, 1, 3, 2), dctx)
            dscores = probs * (dprobs - np.sum(dprobs * probs, axis=-1, keepdims=True))
            dq = np.matmul(dscores, blk["k"]) * scale
            dk = np.matmul(dscores.transpose(0, 1, 3, 2), blk["q"]) * scale
            dqkv = np.concatenate(
                [a.transpose(0, 2, 1, 3).reshape(B, T, D) for a in (dq, dk, dv)],
                axis=-1,
            )
            grads[f"l{i}.attn.w_qkv"] += flat2(blk["h"]).T @ flat2(dqkv)
            grads[f"l{i}.attn.b_qkv"] += flat2(dqkv).sum(axis=0)
            dh = dqkv @ w[f"l{i}.attn.w_qkv"].T
            dx_in, dg, db = _ln_backward(dh, blk["ln1"], w[f"l{i}.ln1.g"])
            grads[f"l{i}.ln1.g"] += dg
            grads[f"l{i}.ln1.b"] += db
            dx = dx + dx_in

        np.add.at(grads["tok_emb"], t.ravel(), flat2(dx))
        grads["pos_emb"][:T] += dx.sum(axis=0)
        return np.concatenate([grads[name].ravel() for name, _ in _layout(cfg)])


def _softmax_last(x: np.ndarray) -> np.ndarray:
    m = np.max(x, axis=-1, keepdims=True)
    e = x - m
    np.exp(e, out=e)
    e /= e.sum(axis=-1, keepdims=True)
    return e


@functools.lru_cache(maxsize=8)
def _causal_bias(T: int) -> np.ndarray:
    """Additive attention bias: 0 on/below the diagonal, -inf above."""
    b = np.zeros((T, T))
    b[np.triu_indices(T, k=1)] = -np.inf
    b.setflags(write=False)
    return b


def _ln_forward(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    xm = x - mu
    var = np.mean(xm * xm, axis=-1, keepdims=True)
    ivar = 1.0 / np.sqrt(var + _LN_EPS)
    xhat = xm * ivar
    return xhat * g + b, (xhat, ivar)


def _ln_backward(dy, cache, g):
    xhat, ivar = cache
    dgamma = (dy * xhat).reshape(-1, xhat.shape[-1]).sum(axis=0)
    dbeta = dy.reshape(-1, dy.shape[-1]).sum(axis=0)
    dxhat = dy * g
    dx = ivar * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * np.mean(dxhat * xhat, axis=-1, keepdims=True)
    )
    return dx, dgamma, dbeta


def _gelu(x):
    """Tanh-form GELU. Returns (value, tanh(u)); the tanh feeds the backward."""
    u = x * x
    u *= _GELU_C1
    u += 1.0
    u *= x
    u *= _GELU_C0
    np.tanh(u, out=u)
    y = u + 1.0
    y *= x
    y *= 0.5
    return y, u


def _gelu_grad(x, t):
    # d/dx [0.5*x*(1+tanh(u))], u = C0*x*(1 + C1*x^2), with t = tanh(u) cached
    g = x * x
    g *= 3.0 * _GELU_C1
    g += 1.0
    g *= _GELU_C0
    g *= 1.0 - t * t
    g *= x
    g += 1.0 + t
    g *= 0.5
    return g


class Adam:
    """Adam with float64 moment state over a float32 parameter vector.

    ``step`` applies one bias-corrected update in double precision and
    stores the result back to float32. Non-finite gradients abort the run:
    silently clamping them would hide divergence from every downstream
    reproducibility check.
    """

    def __init__(self, n_params: int, lr: float = 3e-4, betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr = float(lr)
        self.beta1, self.beta2 = float(betas[0]), float(betas[1])
        self.eps = float(eps)
        self.t = 0
        self.m = np.zeros(n_params)
        self.v = np.zeros(n_params)

    def step(self, model: TinyLM, grads: np.ndarray, lr: float | None = None) -> None:
        g = np.asarray(grads, dtype=np.float64)
        if g.shape != self.m.shape:
            raise InvalidInputError(f"gradient shape {g.shape} != {self.m.shape}")
        if not np.isfinite(g).all():
            raise TrainingDivergedError(
                f"non-finite gradient at optimizer step {self.t + 1}", step=self.t + 1
            )
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * g
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * (g * g)
        mhat = self.m / (1.0 - self.beta1**self.t)
        vhat = self.v / (1.0 - self.beta2**self.t)
        eta = self.lr if lr is None else float(lr)
        new = model.params.astype(np.float64) - eta * mhat / (np.sqrt(vhat) + self.eps)
        model.params[:] = new.astype(np.float32)


def interpolate(theta0: np.ndarray, theta1: np.ndarray, beta: float) -> np.ndarray:
    """theta1 + beta * (theta1 - theta0), elementwise, beta in [-1, 1].

    beta=0 returns theta1 bit-for-bit and beta=-1 returns theta0 bit-for-bit
    (short-circuited: the float formula would flip the sign of -0.0 entries).
    """
    a = np.asarray(theta0, dtype=np.float32)
    b = np.asarray(theta1, dtype=np.float32)
    if a.shape != b.shape:
        raise InvalidInputError(f"shape mismatch: {a.shape} vs {b.shape}")
    beta = float(beta)
    if not -1.0 <= beta <= 1.0:
        raise InvalidInputError(f"beta must be in [-1, 1], got {beta}")
    if beta == 0.0:
        return b.copy()
    if beta == -1.0:
        return a.copy()
    a64 = a.astype(np.float64)
    b64 = b.astype(np.float64)
    return (b64 + beta * (b64 - a64)).astype(np.float32)


def perplexity(model: TinyLM, tokens: np.ndarray, batch_windows: int = 64) -> float:
    """exp(mean next-token cross-entropy) over non-overlapping context windows.

    Positions without a preceding token (the first of each window) are not
    predicted; a trailing partial window of at least 2 tokens is included.
    """
    t = np.asarray(tokens)
    if t.ndim != 1 or t.shape[0] < 2:
        raise InvalidInputError("need a 1-D token sequence of length >= 2")
    if not np.issubdtype(t.dtype, np.integer):
        raise InvalidInputError(f"token ids must be integers, got dtype {t.dtype}")
    ctx = model.config.context_len
    n_full = t.shape[0] // ctx
    total = 0.0
    count = 0

    def accumulate(block: np.ndarray) -> None:
        nonlocal total, count
        logits = model.forward(block)
        z = logits - _logsumexp_last(logits)
        tgt = block[:, 1:]
        rows = np.arange(block.shape[0])[:, None]
        cols = np.arange(block.shape[1] - 1)[None, :]
        total += -np.sum(z[rows, cols, tgt])
        count += tgt.size

    for start in range(0, n_full, batch_windows):
        stop = min(start + batch_windows, n_full)
        accumulate(t[start * ctx : stop * ctx].reshape(stop - start, ctx))
    tail = t[n_full * ctx :]
    if tail.shape[0] >= 2:
        accumulate(tail[None, :])
    return float(np.exp(total / count))


def _logsumexp_last(x: np.ndarray) -> np.ndarray:
    m = np.max(x, axis=-1, keepdims=True)
    return m + np.log(np.sum(np.exp(x - m), axis=-1, keepdims=True))


def sample(
    model: TinyLM,
    prompt: np.ndarray,
    n_new: int,
    temperature: float = 1.0,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Autoregressive sampling; temperature 0 means greedy argmax."""
    if rng is None:
        rng = np.random.default_rng(0)
    out = list(np.asarray(prompt, dtype=np.int64))
    if not out:
        raise InvalidInputError("prompt must contain at least one token")
    ctx = model.config.context_len
    for _ in range(int(n_new)):
        window = np.asarray(out[-ctx:], dtype=np.int64)
        logits = model.forward(window)[-1]
        if temperature <= 0.0:
            out.append(int(np.argmax(logits)))
            continue
        z = logits / float(temperature)
        p = np.exp(z - _logsumexp_last(z[None, :])[0])
        out.append(int(rng.choice(p.shape[0], p=p / p.sum())))
    return np.asarray(out, dtype=np.int64)
