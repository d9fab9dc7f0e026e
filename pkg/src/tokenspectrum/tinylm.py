"""Tiny pre-norm decoder-only transformer in float64 numpy.

The model keeps all parameters in one flat vector with a named layout so that
gradients, optimizer state and geometry probes all work on plain 1-D arrays.
The backward pass is written by hand against the cached forward activations.
Attention probabilities are averaged over heads at capture time.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from ._validation import check_tokens
from .exceptions import ConfigError, InputError
from .objective import LossSpec, aggregate_coefficients, per_token_clip_loss

LN_EPS = 1e-5
INIT_STD = 0.02
_GELU_C = math.sqrt(2.0 / math.pi)


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int = 48
    d_model: int = 32
    n_layers: int = 2
    n_heads: int = 2
    max_seq_len: int = 48
    probe_layer: int | None = None
    d_ff: int | None = None

    def __post_init__(self):
        for name in ("vocab_size", "d_model", "n_layers", "n_heads", "max_seq_len"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if self.d_model % self.n_heads:
            raise ConfigError(
                f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}"
            )
        if self.probe_layer is None:
            object.__setattr__(self, "probe_layer", self.n_layers // 2)
        if not 0 <= self.probe_layer < self.n_layers:
            raise ConfigError(
                f"probe_layer={self.probe_layer} outside [0, {self.n_layers})"
            )
        if self.d_ff is None:
            object.__setattr__(self, "d_ff", 4 * self.d_model)
        if self.d_ff < 1:
            raise ConfigError(f"d_ff must be positive, got {self.d_ff}")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads

    def to_dict(self) -> dict:
        return asdict(self)


def param_layout(config: ModelConfig) -> dict[str, tuple[int, tuple[int, ...]]]:
    """Map every parameter tensor name to ``(offset, shape)`` in the flat vector."""
    d, V, L, F = config.d_model, config.vocab_size, config.max_seq_len, config.d_ff
    entries: list[tuple[str, tuple[int, ...]]] = [("tok_emb", (V, d)), ("pos_emb", (L, d))]
    for i in range(config.n_layers):
        p = f"h{i}."
        entries += [
            (p + "ln1.g", (d,)), (p + "ln1.b", (d,)),
            (p + "attn.w_qkv", (d, 3 * d)), (p + "attn.b_qkv", (3 * d,)),
            (p + "attn.w_out", (d, d)), (p + "attn.b_out", (d,)),
            (p + "ln2.g", (d,)), (p + "ln2.b", (d,)),
            (p + "mlp.w_in", (d, F)), (p + "mlp.b_in", (F,)),
            (p + "mlp.w_out", (F, d)), (p + "mlp.b_out", (d,)),
        ]
    entries += [("ln_f.g", (d,)), ("ln_f.b", (d,)), ("head.w", (d, V)), ("head.b", (V,))]
    layout, offset = {}, 0
    for name, shape in entries:
        layout[name] = (offset, shape)
        offset += int(np.prod(shape))
    return layout


def n_params(config: ModelConfig) -> int:
    layout = param_layout(config)
    offset, shape = layout["head.b"]
    return offset + int(np.prod(shape))


@dataclass
class Parameters:
    """Flat parameter vector plus the layout map that names its slices."""

    config: ModelConfig
    theta: np.ndarray
    layout: dict = field(default=None, repr=False)

    def __post_init__(self):
        if self.layout is None:
            self.layout = param_layout(self.config)
        self.theta = np.asarray(self.theta, dtype=np.float64)
        if self.theta.shape != (n_params(self.config),):
            raise ConfigError(
                f"parameter vector has shape {self.theta.shape}, "
                f"config needs ({n_params(self.config)},)"
            )

    def view(self, name: str) -> np.ndarray:
        offset, shape = self.layout[name]
        size = int(np.prod(shape))
        return self.theta[offset:offset + size].reshape(shape)

    def copy(self) -> "Parameters":
        return Parameters(self.config, self.theta.copy(), self.layout)

    def with_theta(self, theta: np.ndarray) -> "Parameters":
        return Parameters(self.config, theta, self.layout)


def init_params(config: ModelConfig, seed: int) -> Parameters:
    """Deterministic scaled-normal initialization.

    Weight matrices and embeddings are N(0, 0.02^2); the two residual output
    projections per block are further scaled by 1/sqrt(2 * n_layers).
    LayerNorm gains start at 1 and all biases at 0.
    """
    if not isinstance(config, ModelConfig):
        raise ConfigError("init_params expects a ModelConfig")
    rng = np.random.default_rng(seed)
    params = Parameters(config, np.zeros(n_params(config)))
    resid_std = INIT_STD / math.sqrt(2 * config.n_layers)
    for name, (offset, shape) in params.layout.items():
        view = params.view(name)
        if name.endswith(".g"):
            view[...] = 1.0
        elif len(shape) == 2:
            std = resid_std if name.endswith("attn.w_out") or name.endswith("mlp.w_out") else INIT_STD
            view[...] = rng.normal(0.0, std, size=shape)
    return params


@dataclass
class AttentionCapture:
    """Head-averaged causal attention, one ``(L, L)`` lower-triangular matrix per layer.

    Row ``t`` of a layer's matrix restricted to its first ``t + 1`` entries is the
    attention distribution of position ``t`` over its visible context.
    """

    layers: dict[int, np.ndarray]
    probe_layer: int

    @property
    def length(self) -> int:
        return next(iter(self.layers.values())).shape[0]

    def row(self, t: int, layer: int | None = None) -> np.ndarray:
        layer = self.probe_layer if layer is None else layer
        return self.layers[layer][t, : t + 1]

    def rows(self, layer: int | None = None) -> list[np.ndarray]:
        return [self.row(t, layer) for t in range(self.length)]


@dataclass
class ForwardTrace:
    logits: np.ndarray
    attention_capture: AttentionCapture | None
    cache: dict = field(repr=False, default=None)


def _layernorm(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + LN_EPS)
    xhat = xc * rstd
    return xhat * g + b, (xhat, rstd)


def _layernorm_backward(dy, g, saved):
    xhat, rstd = saved
    dg = (dy * xhat).reshape(-1, xhat.shape[-1]).sum(axis=0)
    db = dy.reshape(-1, xhat.shape[-1]).sum(axis=0)
    dxhat = dy * g
    dx = rstd * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    return dx, dg, db


def _gelu(u):
    t = np.tanh(_GELU_C * u * (1.0 + 0.044715 * u * u))
    return 0.5 * u * (1.0 + t), t


def _gelu_grad(u, t):
    return 0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * _GELU_C * (1.0 + 3 * 0.044715 * u * u)


def log_softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    z = z - z.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def forward_batch(
    params: Parameters,
    tokens: np.ndarray,
    capture_layers: Sequence[int] | None = None,
    keep_cache: bool = True,
) -> tuple[np.ndarray, dict[int, np.ndarray], dict | None]:
    """Run the model on a right-padded ``(B, L)`` id array.

    Causal masking means padding after a sequence's end never affects its real
    positions, so batches of uneven lengths can share one call.
    Returns ``(logits, captured attention per layer (B, L, L), cache)``.
    """
    cfg = params.config
    B, L = tokens.shape
    if L > cfg.max_seq_len:
        raise InputError(f"sequence length {L} exceeds max_seq_len {cfg.max_seq_len}")
    H, dh = cfg.n_heads, cfg.head_dim
    capture_layers = (cfg.probe_layer,) if capture_layers is None else tuple(capture_layers)
    scale = 1.0 / math.sqrt(dh)
    future = np.triu(np.ones((L, L), dtype=bool), k=1)

    x = params.view("tok_emb")[tokens] + params.view("pos_emb")[:L]
    cache = {"tokens": tokens, "layers": []} if keep_cache else None
    captured = {}
    for i in range(cfg.n_layers):
        p = f"h{i}."
        x_in = x
        h, ln1 = _layernorm(x, params.view(p + "ln1.g"), params.view(p + "ln1.b"))
        qkv = h @ params.view(p + "attn.w_qkv") + params.view(p + "attn.b_qkv")
        qkv = qkv.reshape(B, L, 3, H, dh).transpose(2, 0, 3, 1, 4)
        q, k, v = qkv[0], qkv[1], qkv[2]
        s = (q @ k.transpose(0, 1, 3, 2)) * scale
        s = np.where(future, -np.inf, s)
        s -= s.max(axis=-1, keepdims=True)
        probs = np.exp(s)
        probs /= probs.sum(axis=-1, keepdims=True)
        if i in capture_layers:
            captured[i] = probs.mean(axis=1)
        o = (probs @ v).transpose(0, 2, 1, 3).reshape(B, L, cfg.d_model)
        x = x + o @ params.view(p + "attn.w_out") + params.view(p + "attn.b_out")
        x_mid = x
        h2, ln2 = _layernorm(x, params.view(p + "ln2.g"), params.view(p + "ln2.b"))
        u = h2 @ params.view(p + "mlp.w_in") + params.view(p + "mlp.b_in")
        z, tanh_u = _gelu(u)
        x = x + z @ params.view(p + "mlp.w_out") + params.view(p + "mlp.b_out")
        if keep_cache:
            cache["layers"].append(dict(
                x_in=x_in, ln1=ln1, h=h, q=q, k=k, v=v, probs=probs, o=o,
                x_mid=x_mid, ln2=ln2, h2=h2, u=u, z=z, tanh_u=tanh_u,
            ))
    hf, lnf = _layernorm(x, params.view("ln_f.g"), params.view("ln_f.b"))
    logits = hf @ params.view("head.w") + params.view("head.b")
    if keep_cache:
        cache["lnf"] = lnf
        cache["hf"] = hf
    return logits, captured, cache


def backward_batch(params: Parameters, cache: dict, dlogits: np.ndarray) -> np.ndarray:
    """Reverse-mode pass: gradient of ``sum(dlogits * logits)`` w.r.t. the flat vector."""
    cfg = params.config
    tokens = cache["tokens"]
    B, L = tokens.shape
    H, dh, d = cfg.n_heads, cfg.head_dim, cfg.d_model
    scale = 1.0 / math.sqrt(dh)
    grad = Parameters(cfg, np.zeros_like(params.theta), params.layout)

    def flat(a):
        return a.reshape(-1, a.shape[-1])

    hf = cache["hf"]
    grad.view("head.w")[...] = flat(hf).T @ flat(dlogits)
    grad.view("head.b")[...] = flat(dlogits).sum(axis=0)
    dhf = dlogits @ params.view("head.w").T
    dx, dg, db = _layernorm_backward(dhf, params.view("ln_f.g"), cache["lnf"])
    grad.view("ln_f.g")[...] = dg
    grad.view("ln_f.b")[...] = db

    for i in reversed(range(cfg.n_layers)):
        p = f"h{i}."
        c = cache["layers"][i]
        # MLP branch
        w_out = params.view(p + "mlp.w_out")
        grad.view(p + "mlp.w_out")[...] = flat(c["z"]).T @ flat(dx)
        grad.view(p + "mlp.b_out")[...] = flat(dx).sum(axis=0)
        du = (dx @ w_out.T) * _gelu_grad(c["u"], c["tanh_u"])
        grad.view(p + "mlp.w_in")[...] = flat(c["h2"]).T @ flat(du)
        grad.view(p + "mlp.b_in")[...] = flat(du).sum(axis=0)
        dh2 = du @ params.view(p + "mlp.w_in").T
        dln, dg, db = _layernorm_backward(dh2, params.view(p + "ln2.g"), c["ln2"])
        grad.view(p + "ln2.g")[...] = dg
        grad.view(p + "ln2.b")[...] = db
        dx = dx + dln
        # attention branch
        grad.view(p + "attn.w_out")[...] = flat(c["o"]).T @ flat(dx)
        grad.view(p + "attn.b_out")[...] = flat(dx).sum(axis=0)
        do = (dx @ params.view(p + "attn.w_out").T).reshape(B, L, H, dh).transpose(0, 2, 1, 3)
        probs, q, k, v = c["probs"], c["q"], c["k"], c["v"]
        dprobs = do @ v.transpose(0, 1, 3, 2)
        dv = probs.transpose(0, 1, 3, 2) @ do
        ds = probs * (dprobs - (dprobs * probs).sum(axis=-1, keepdims=True)) * scale
        dq = ds @ k
        dk = ds.transpose(0, 1, 3, 2) @ q
        dqkv = np.stack([dq, dk, dv]).transpose(1, 3, 0, 2, 4).reshape(B, L, 3 * d)
        grad.view(p + "attn.w_qkv")[...] = flat(c["h"]).T @ flat(dqkv)
        grad.view(p + "attn.b_qkv")[...] = flat(dqkv).sum(axis=0)
        dh_in = dqkv @ params.view(p + "attn.w_qkv").T
        dln, dg, db = _layernorm_backward(dh_in, params.view(p + "ln1.g"), c["ln1"])
        grad.view(p + "ln1.g")[...] = dg
        grad.view(p + "ln1.b")[...] = db
        dx = dx + dln

    np.add.at(grad.view("tok_emb"), tokens.reshape(-1), flat(dx))
    grad.view("pos_emb")[:L] = dx.sum(axis=0)
    return grad.theta


def forward(params: Parameters, tokens, capture_all: bool = False) -> ForwardTrace:
    """Forward one sequence; captures the probe layer (or every layer)."""
    cfg = params.config
    arr = check_tokens(tokens, cfg.vocab_size, cfg.max_seq_len)
    layers = range(cfg.n_layers) if capture_all else (cfg.probe_layer,)
    logits, captured, cache = forward_batch(params, arr[None, :], layers)
    capture = AttentionCapture({i: a[0] for i, a in captured.items()}, cfg.probe_layer)
    return ForwardTrace(logits[0], capture, cache)


def backward(params: Parameters, trace: ForwardTrace, dlogits: np.ndarray) -> np.ndarray:
    dlogits = np.asarray(dlogits, dtype=np.float64)
    if dlogits.ndim == 2:
        dlogits = dlogits[None]
    return backward_batch(params, trace.cache, dlogits)


# ---------------------------------------------------------------------------
# Policy-gradient loss over a batch of responses
# ---------------------------------------------------------------------------


@dataclass
class TokenBatch:
    """Prompt+response sequences with per-response-token training data.

    ``tokens[i]`` is the full sequence (prompt followed by response); every
    per-token array has one entry per response token.
    """

    tokens: list[np.ndarray]
    prompt_lens: list[int]
    old_logp: list[np.ndarray]
    advantages: list[np.ndarray]
    weights: list[np.ndarray]

    def __post_init__(self):
        n = len(self.tokens)
        for name in ("prompt_lens", "old_logp", "advantages", "weights"):
            if len(getattr(self, name)) != n:
                raise InputError(f"{name} has {len(getattr(self, name))} entries, expected {n}")
        for i in range(n):
            T = self.response_len(i)
            if T < 1:
                raise InputError(f"response {i} is empty")
            for name in ("old_logp", "advantages", "weights"):
                if len(getattr(self, name)[i]) != T:
                    raise InputError(f"{name}[{i}] length differs from response length {T}")
            if np.any(np.asarray(self.weights[i]) < 0):
                raise InputError("token weights must be nonnegative")

    def response_len(self, i: int) -> int:
        return len(self.tokens[i]) - self.prompt_lens[i]

    def with_weights(self, weights: list[np.ndarray]) -> "TokenBatch":
        return TokenBatch(self.tokens, self.prompt_lens, self.old_logp, self.advantages, weights)

    def flat(self, name: str) -> np.ndarray:
        return np.concatenate([np.asarray(a, dtype=np.float64) for a in getattr(self, name)])


def _pad(tokens: list[np.ndarray]) -> np.ndarray:
    L = max(len(t) for t in tokens)
    arr = np.zeros((len(tokens), L), dtype=np.int64)
    for i, t in enumerate(tokens):
        arr[i, : len(t)] = t
    return arr


def _response_index(tokens: list[np.ndarray], prompt_lens: list[int]):
    rows, pos, targets = [], [], []
    for i, (seq, P) in enumerate(zip(tokens, prompt_lens)):
        T = len(seq) - P
        rows.append(np.full(T, i))
        pos.append(np.arange(P - 1, P + T - 1))
        targets.append(np.asarray(seq[P:], dtype=np.int64))
    return np.concatenate(rows), np.concatenate(pos), np.concatenate(targets)


def _check_batch_tokens(params: Parameters, batch: TokenBatch):
    cfg = params.config
    for seq, P in zip(batch.tokens, batch.prompt_lens):
        check_tokens(seq, cfg.vocab_size, cfg.max_seq_len)
        if P < 1:
            raise InputError("prompt must contain at least one token")


@dataclass
class ResponseStats:
    """Per-response-token quantities from one forward pass over a batch."""

    logp: list[np.ndarray]
    pred_entropy: list[np.ndarray]
    captures: list[AttentionCapture]


def response_stats(params: Parameters, tokens: list[np.ndarray], prompt_lens: list[int],
                   capture_layers: Sequence[int] | None = None) -> ResponseStats:
    """Log-probabilities, prediction entropies and attention of response tokens."""
    cfg = params.config
    arr = _pad(tokens)
    logits, captured, _ = forward_batch(params, arr, capture_layers, keep_cache=False)
    rows, pos, targets = _response_index(tokens, prompt_lens)
    logp_all = log_softmax(logits[rows, pos])
    logp = logp_all[np.arange(len(rows)), targets]
    p_all = np.exp(logp_all)
    ent = -(p_all * np.where(p_all > 0, logp_all, 0.0)).sum(axis=-1)
    splits = np.cumsum([len(s) - P for s, P in zip(tokens, prompt_lens)])[:-1]
    captures = [
        AttentionCapture({j: a[b, : len(seq), : len(seq)] for j, a in captured.items()},
                         cfg.probe_layer)
        for b, seq in enumerate(tokens)
    ]
    return ResponseStats(np.split(logp, splits), np.split(ent, splits), captures)


def _loss_terms(params, batch: TokenBatch, loss_spec: LossSpec, keep_cache: bool = True):
    _check_batch_tokens(params, batch)
    arr = _pad(batch.tokens)
    logits, _, cache = forward_batch(params, arr, capture_layers=(), keep_cache=keep_cache)
    rows, pos, targets = _response_index(batch.tokens, batch.prompt_lens)
    logp_all = log_softmax(logits[rows, pos])
    logp = logp_all[np.arange(len(rows)), targets]
    ratio = np.exp(logp - batch.flat("old_logp"))
    ell, dell_dratio = per_token_clip_loss(ratio, batch.flat("advantages"), loss_spec, return_grad=True)
    return cache, logits.shape, (rows, pos, targets), logp_all, ratio, ell, dell_dratio


def _dlogits_from_dlogp(shape, index, logp_all, dlogp):
    rows, pos, targets = index
    dlogits = np.zeros(shape)
    probs = np.exp(logp_all)
    dlogits[rows, pos] = -dlogp[:, None] * probs
    dlogits[rows, pos, targets] += dlogp
    return dlogits


def loss_value(params: Parameters, batch: TokenBatch, loss_spec: LossSpec) -> float:
    """Aggregated loss only (no backward cache)."""
    *_, ell, _ = _loss_terms(params, batch, loss_spec, keep_cache=False)
    return float(aggregate_coefficients(batch.flat("weights"), loss_spec.normalization) @ ell)


def loss_grad(params: Parameters, batch: TokenBatch, loss_spec: LossSpec) -> tuple[float, np.ndarray]:
    """Weighted clipped policy loss over all response tokens and its exact gradient."""
    cache, shape, index, logp_all, ratio, ell, dell_dratio = _loss_terms(params, batch, loss_spec)
    coef = aggregate_coefficients(batch.flat("weights"), loss_spec.normalization)
    loss = float(coef @ ell)
    dlogp = coef * dell_dratio * ratio
    dlogits = _dlogits_from_dlogp(shape, index, logp_all, dlogp)
    return loss, backward_batch(params, cache, dlogits)


def per_token_grads(params: Parameters, batch: TokenBatch, loss_spec: LossSpec) -> np.ndarray:
    """Gradient of each unweighted per-token loss, one backward per token: ``(T_total, P)``."""
    cache, shape, index, logp_all, ratio, ell, dell_dratio = _loss_terms(params, batch, loss_spec)
    dlogp = dell_dratio * ratio
    out = np.empty((len(ell), params.theta.size))
    rows, pos, targets = index
    for j in range(len(ell)):
        sub = (rows[j:j + 1], pos[j:j + 1], targets[j:j + 1])
        dlogits = _dlogits_from_dlogp(shape, sub, logp_all[j:j + 1], dlogp[j:j + 1])
        out[j] = backward_batch(params, cache, dlogits)
    return out


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SamplingConfig:
    temperature: float = 1.0
    top_p: float = 0.95
    max_new: int = 16
    stop_token: int | None = None
    greedy: bool = False

    def __post_init__(self):
        if not self.greedy and self.temperature <= 0:
            raise ConfigError("temperature must be positive (use greedy=True for argmax)")
        if not 0.0 < self.top_p <= 1.0:
            raise ConfigError(f"top_p must lie in (0, 1], got {self.top_p}")
        if self.max_new < 1:
            raise ConfigError("max_new must be at least 1")


@dataclass
class SampleResult:
    response: np.ndarray
    logprobs: np.ndarray
    capture: AttentionCapture


def _draw(logits_row: np.ndarray, sampling: SamplingConfig, rng: np.random.Generator):
    if sampling.greedy:
        tok = int(np.argmax(logits_row))
        return tok, float(log_softmax(logits_row)[tok])
    logp = log_softmax(logits_row / sampling.temperature)
    probs = np.exp(logp)
    if sampling.top_p < 1.0:
        order = np.argsort(-probs, kind="stable")
        sorted_p = probs[order]
        keep_sorted = (np.cumsum(sorted_p) - sorted_p) < sampling.top_p
        kept = order[keep_sorted]
        kept_p = probs[kept]
        mass = kept_p.sum()
    else:
        kept, kept_p, mass = np.arange(probs.size), probs, 1.0
    u = rng.random() * mass
    j = min(int(np.searchsorted(np.cumsum(kept_p), u, side="right")), kept.size - 1)
    tok = int(kept[j])
    return tok, float(logp[tok] - math.log(mass))


def sample_batch(params: Parameters, prompts: Sequence[Sequence[int]], sampling: SamplingConfig,
                 rngs: Sequence[np.random.Generator]) -> list[SampleResult]:
    """Autoregressively sample one response per prompt, each with its own rng stream."""
    cfg = params.config
    if len(rngs) != len(prompts):
        raise InputError("need one rng stream per prompt")
    seqs = []
    for p in prompts:
        if len(p) == 0:
            raise InputError("prompt is empty")
        seqs.append(list(check_tokens(np.asarray(p), cfg.vocab_size, cfg.max_seq_len - 1)))
    plens = [len(s) for s in seqs]
    logps: list[list[float]] = [[] for _ in seqs]
    active = list(range(len(seqs)))
    for _ in range(sampling.max_new):
        if not active:
            break
        lens = np.array([len(seqs[b]) for b in active])
        arr = _pad([np.asarray(seqs[b]) for b in active])
        logits, _, _ = forward_batch(params, arr, capture_layers=(), keep_cache=False)
        last = logits[np.arange(len(active)), lens - 1]
        still = []
        for i, b in enumerate(active):
            tok, lp = _draw(last[i], sampling, rngs[b])
            seqs[b].append(tok)
            logps[b].append(lp)
            if tok != sampling.stop_token and len(seqs[b]) < cfg.max_seq_len:
                still.append(b)
        active = still
    full = [np.asarray(s, dtype=np.int64) for s in seqs]
    _, captured, _ = forward_batch(params, _pad(full), keep_cache=False)
    att = captured[cfg.probe_layer]
    return [
        SampleResult(
            full[b][plens[b]:],
            np.asarray(logps[b]),
            AttentionCapture({cfg.probe_layer: att[b, : len(full[b]), : len(full[b])]}, cfg.probe_layer),
        )
        for b in range(len(full))
    ]


def sample(params: Parameters, prompt, sampling: SamplingConfig, rng: np.random.Generator) -> SampleResult:
    """Sample a single response; see :func:`sample_batch`."""
    if len(prompt) == 0:
        raise InputError("prompt is empty")
    return sample_batch(params, [prompt], sampling, [rng])[0]
