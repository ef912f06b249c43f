"""Small decoder-only transformer over the unified vocabulary, in numpy.

Pre-norm residual blocks, learned absolute positions, GELU feed-forward,
hand-written backward pass.  Optional per-layer cross-attention adapters
(see :mod:`hvla.visfuse`) sit between self-attention and the feed-forward.

A training record is laid out as ``<bos> prompt <sep> answer <eos>``; the
loss is the mean negative log-likelihood of the answer tokens and the final
``<eos>`` given everything before them.
"""

from __future__ import annotations

import json
import logging
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import BadMagicError, DivergenceError, FormatError, NumericError, ShapeError, TruncatedError
from .optim import Adam, lr_at
from .rng import derive_seed, make_rng

log = logging.getLogger(__name__)

_GELU_C = math.sqrt(2.0 / math.pi)


@dataclass
class ModelConfig:
    vocab_size: int
    layers: int = 2
    heads: int = 4
    dim: int = 64
    ff_dim: int = 256
    context: int = 512
    seed: int = 0
    tie_embeddings: bool = False

    def __post_init__(self):
        if self.dim % self.heads:
            raise ValueError(f"dim {self.dim} not divisible by heads {self.heads}")


@dataclass
class TrainConfig:
    lr: float = 1e-3
    warmup_ratio: float = 0.01
    schedule: str = "cosine"
    batch_size: int = 4
    steps: int = 1000
    seed: int = 0
    loss_on_prompt: bool = False
    grad_clip: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.warmup_ratio < 1.0):
            raise ValueError("warmup_ratio must be in [0, 1)")


def param_shapes(cfg: ModelConfig) -> dict:
    D, F, V = cfg.dim, cfg.ff_dim, cfg.vocab_size
    shapes = {"tok_emb": (V, D), "pos_emb": (cfg.context, D)}
    for l in range(cfg.layers):
        p = f"L{l}."
        shapes.update({
            p + "ln1.g": (D,), p + "ln1.b": (D,),
            p + "attn.w_qkv": (D, 3 * D), p + "attn.b_qkv": (3 * D,),
            p + "attn.w_o": (D, D), p + "attn.b_o": (D,),
            p + "ln2.g": (D,), p + "ln2.b": (D,),
            p + "ff.w1": (D, F), p + "ff.b1": (F,),
            p + "ff.w2": (F, D), p + "ff.b2": (D,),
        })
    shapes.update({"lnf.g": (D,), "lnf.b": (D,)})
    if not cfg.tie_embeddings:
        shapes.update({"out.w": (D, V), "out.b": (V,)})
    return shapes


def init_params(cfg: ModelConfig, zero: bool = False) -> dict:
    """Seeded init (normal 0.02, residual projections scaled by 1/sqrt(2L)); ``zero`` gives all zeros."""
    rng = make_rng(derive_seed(cfg.seed, "lm-init"))
    params = {}
    for name, shape in param_shapes(cfg).items():
        if zero:
            params[name] = np.zeros(shape)
        elif name.endswith(".g"):
            params[name] = np.ones(shape)
        elif len(shape) == 1:
            params[name] = np.zeros(shape)
        else:
            std = 0.02
            if name.endswith("attn.w_o") or name.endswith("ff.w2"):
                std /= math.sqrt(2 * cfg.layers)
            params[name] = rng.normal(0.0, std, shape)
    return params


# --- primitives ---------------------------------------------------------------

def _ln_fwd(x, g, b, eps=1e-5):
    mu = x.mean(-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd
    return xhat * g + b, (xhat, rstd, g)


def _ln_bwd(dy, cache):
    xhat, rstd, g = cache
    axes = tuple(range(dy.ndim - 1))
    dg = (dy * xhat).sum(axes)
    db = dy.sum(axes)
    dxhat = dy * g
    dx = rstd * (dxhat - dxhat.mean(-1, keepdims=True) - xhat * (dxhat * xhat).mean(-1, keepdims=True))
    return dx, dg, db


def _gelu_fwd(x):
    t = np.tanh(_GELU_C * (x + 0.044715 * x ** 3))
    return 0.5 * x * (1.0 + t), (x, t)


def _gelu_bwd(dy, cache):
    x, t = cache
    dt = _GELU_C * (1.0 + 3 * 0.044715 * x * x)
    return dy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dt)


def softmax(x, axis=-1):
    m = np.max(x, axis=axis, keepdims=True)
    e = np.exp(x - m)
    return e / e.sum(axis=axis, keepdims=True)


def _softmax_bwd(dp, p):
    return p * (dp - (dp * p).sum(-1, keepdims=True))


def _sum0(x):
    return x.reshape(-1, x.shape[-1]).sum(0)


def _mm_w(a, d):
    """Weight gradient a^T d, flattening leading axes."""
    return a.reshape(-1, a.shape[-1]).T @ d.reshape(-1, d.shape[-1])


# --- cross-attention adapter (shared with visfuse) ----------------------------

def xattn_fwd(x, vis, a: dict, prefix: str):
    """``x + gate * softmax(x Wq (vis Wk)^T / sqrt(Da)) (vis Wv) Wo``.

    ``x`` is (B, T, D), ``vis`` is (B, N, Dv).
    """
    wq, wk, wv, wo = a[prefix + "wq"], a[prefix + "wk"], a[prefix + "wv"], a[prefix + "wo"]
    gate = a[prefix + "gate"][0]
    scale = 1.0 / math.sqrt(wq.shape[1])
    q = x @ wq
    k = vis @ wk
    v = vis @ wv
    p = softmax((q @ k.transpose(0, 2, 1)) * scale)
    o = p @ v
    u = o @ wo
    return x + gate * u, (x, vis, q, k, v, p, o, u, gate, scale)


def xattn_bwd(dy, cache, a: dict, prefix: str, grads: dict):
    x, vis, q, k, v, p, o, u, gate, scale = cache
    wq, wk, wv, wo = a[prefix + "wq"], a[prefix + "wk"], a[prefix + "wv"], a[prefix + "wo"]
    grads[prefix + "gate"] = grads.get(prefix + "gate", 0.0) + np.array([np.sum(dy * u)])
    du = gate * dy
    _acc(grads, prefix + "wo", _mm_w(o, du))
    do = du @ wo.T
    dp = do @ v.transpose(0, 2, 1)
    dv = p.transpose(0, 2, 1) @ do
    ds = _softmax_bwd(dp, p) * scale
    dq = ds @ k
    dk = ds.transpose(0, 2, 1) @ q
    _acc(grads, prefix + "wq", _mm_w(x, dq))
    _acc(grads, prefix + "wk", _mm_w(vis, dk))
    _acc(grads, prefix + "wv", _mm_w(vis, dv))
    dx = dy + dq @ wq.T
    dvis = dk @ wk.T + dv @ wv.T
    return dx, dvis


def _acc(grads, key, val):
    if key in grads:
        grads[key] = grads[key] + val
    else:
        grads[key] = val


# --- model --------------------------------------------------------------------

def forward(params: dict, ids, cfg: ModelConfig, adapters: dict | None = None, vis=None, cache: bool = False):
    """Logits (B, T, V) for ids (B, T) or (T,).  Causal: position i sees ids[:i+1]."""
    ids = np.asarray(ids)
    squeeze = ids.ndim == 1
    if squeeze:
        ids = ids[None]
    B, T = ids.shape
    if T > cfg.context:
        raise ShapeError(f"sequence length {T} exceeds context {cfg.context}")
    if np.any(ids < 0) or np.any(ids >= cfg.vocab_size):
        raise ShapeError("token id outside vocabulary")
    D, H = cfg.dim, cfg.heads
    dh = D // H
    x = params["tok_emb"][ids] + params["pos_emb"][:T]
    causal = np.tril(np.ones((T, T), dtype=bool))
    caches = []
    for l in range(cfg.layers):
        pre = f"L{l}."
        c = {}
        a, c["ln1"] = _ln_fwd(x, params[pre + "ln1.g"], params[pre + "ln1.b"])
        qkv = a @ params[pre + "attn.w_qkv"] + params[pre + "attn.b_qkv"]
        q, k, v = np.split(qkv.reshape(B, T, 3, H, dh).transpose(2, 0, 3, 1, 4), 3, axis=0)
        q, k, v = q[0], k[0], v[0]
        s = (q @ k.transpose(0, 1, 3, 2)) / math.sqrt(dh)
        s = np.where(causal, s, -np.inf)
        p = softmax(s)
        o = (p @ v).transpose(0, 2, 1, 3).reshape(B, T, D)
        x = x + o @ params[pre + "attn.w_o"] + params[pre + "attn.b_o"]
        if adapters is not None:
            x, c["xattn"] = xattn_fwd(x, vis, adapters, f"L{l}.xattn.")
        a2, c["ln2"] = _ln_fwd(x, params[pre + "ln2.g"], params[pre + "ln2.b"])
        h = a2 @ params[pre + "ff.w1"] + params[pre + "ff.b1"]
        gh, c["gelu"] = _gelu_fwd(h)
        x = x + gh @ params[pre + "ff.w2"] + params[pre + "ff.b2"]
        if cache:
            c.update(a=a, q=q, k=k, v=v, p=p, o=o, a2=a2, gh=gh)
            caches.append(c)
    af, lnf = _ln_fwd(x, params["lnf.g"], params["lnf.b"])
    if cfg.tie_embeddings:
        logits = af @ params["tok_emb"].T
    else:
        logits = af @ params["out.w"] + params["out.b"]
    if not np.all(np.isfinite(logits)):
        raise NumericError("non-finite logits")
    if cache:
        return logits, {"ids": ids, "caches": caches, "lnf": lnf, "af": af, "B": B, "T": T}
    return logits[0] if squeeze else logits


def backward(params: dict, cfg: ModelConfig, fc: dict, dlogits, adapters: dict | None = None,
             base_grads: bool = True):
    """Gradients for params (and adapters, visual tokens) given dL/dlogits (B, T, V)."""
    B, T = fc["B"], fc["T"]
    D, H = cfg.dim, cfg.heads
    dh = D // H
    g = {}
    ag = {} if adapters is not None else None
    af = fc["af"]
    if cfg.tie_embeddings:
        daf = dlogits @ params["tok_emb"]
        if base_grads:
            g["tok_emb"] = _mm_w(dlogits, af)
    else:
        daf = dlogits @ params["out.w"].T
        if base_grads:
            g["out.w"] = _mm_w(af, dlogits)
            g["out.b"] = _sum0(dlogits)
    dx, dg_, db_ = _ln_bwd(daf, fc["lnf"])
    if base_grads:
        g["lnf.g"], g["lnf.b"] = dg_, db_
    dvis = None
    for l in reversed(range(cfg.layers)):
        pre = f"L{l}."
        c = fc["caches"][l]
        # feed-forward
        dgh = dx @ params[pre + "ff.w2"].T
        if base_grads:
            g[pre + "ff.w2"] = _mm_w(c["gh"], dx)
            g[pre + "ff.b2"] = _sum0(dx)
        dh_ = _gelu_bwd(dgh, c["gelu"])
        if base_grads:
            g[pre + "ff.w1"] = _mm_w(c["a2"], dh_)
            g[pre + "ff.b1"] = _sum0(dh_)
        da2 = dh_ @ params[pre + "ff.w1"].T
        dxx, dg_, db_ = _ln_bwd(da2, c["ln2"])
        if base_grads:
            g[pre + "ln2.g"], g[pre + "ln2.b"] = dg_, db_
        dx = dx + dxx
        if adapters is not None:
            dx, dv_ = xattn_bwd(dx, c["xattn"], adapters, f"L{l}.xattn.", ag)
            dvis = dv_ if dvis is None else dvis + dv_
        # self-attention
        if base_grads:
            g[pre + "attn.w_o"] = _mm_w(c["o"], dx)
            g[pre + "attn.b_o"] = _sum0(dx)
        do = (dx @ params[pre + "attn.w_o"].T).reshape(B, T, H, dh).transpose(0, 2, 1, 3)
        p, q, k, v = c["p"], c["q"], c["k"], c["v"]
        dp = do @ v.transpose(0, 1, 3, 2)
        dv = p.transpose(0, 1, 3, 2) @ do
        ds = _softmax_bwd(dp, p) / math.sqrt(dh)
        dq = ds @ k
        dk = ds.transpose(0, 1, 3, 2) @ q
        dqkv = np.stack([dq, dk, dv], axis=0).transpose(1, 3, 0, 2, 4).reshape(B, T, 3 * D)
        if base_grads:
            g[pre + "attn.w_qkv"] = _mm_w(c["a"], dqkv)
            g[pre + "attn.b_qkv"] = _sum0(dqkv)
        da = dqkv @ params[pre + "attn.w_qkv"].T
        dxx, dg_, db_ = _ln_bwd(da, c["ln1"])
        if base_grads:
            g[pre + "ln1.g"], g[pre + "ln1.b"] = dg_, db_
        dx = dx + dxx
    if base_grads:
        pos = np.zeros_like(params["pos_emb"])
        pos[:T] = dx.sum(0)
        g["pos_emb"] = pos
        tok = np.zeros_like(params["tok_emb"])
        np.add.at(tok, fc["ids"].reshape(-1), dx.reshape(-1, D))
        g["tok_emb"] = g.get("tok_emb", 0) + tok
    return g, ag, dvis


# --- records and loss ---------------------------------------------------------

def record_to_sequence(prompt_ids, answer_ids, vocab, loss_on_prompt: bool = False):
    """Input ids, next-token targets and loss mask for one prompt/answer record."""
    if len(answer_ids) == 0:
        raise ValueError("empty answer segment")
    seq = [vocab.bos] + list(prompt_ids) + [vocab.sep] + list(answer_ids) + [vocab.eos]
    x = np.asarray(seq[:-1], dtype=np.int64)
    y = np.asarray(seq[1:], dtype=np.int64)
    mask = np.zeros(len(x))
    start = 0 if loss_on_prompt else len(prompt_ids) + 1
    mask[start:] = 1.0
    return x, y, mask


def collate(records):
    """Right-pad (x, y, mask) triples into (B, T) arrays; padding has mask 0."""
    T = max(len(r[0]) for r in records)
    B = len(records)
    X = np.zeros((B, T), dtype=np.int64)
    Y = np.zeros((B, T), dtype=np.int64)
    M = np.zeros((B, T))
    for i, (x, y, m) in enumerate(records):
        n = len(x)
        X[i, :n], Y[i, :n], M[i, :n] = x, y, m
    return X, Y, M


def nll_from_logits(logits, Y, M):
    """Masked mean NLL and its gradient w.r.t. logits."""
    denom = M.sum()
    if denom <= 0:
        raise ValueError("no answer positions in batch")
    m = logits.max(-1, keepdims=True)
    lse = np.log(np.exp(logits - m).sum(-1, keepdims=True)) + m
    logp = logits - lse
    picked = np.take_along_axis(logp, Y[..., None], -1)[..., 0]
    loss = -(picked * M).sum() / denom
    dlogits = np.exp(logp)
    np.put_along_axis(dlogits, Y[..., None], np.take_along_axis(dlogits, Y[..., None], -1) - 1.0, -1)
    dlogits *= (M / denom)[..., None]
    return float(loss), dlogits


def nll_loss(params, cfg: ModelConfig, records, adapters=None, vis=None, base_grads=True, want_grads=True):
    """Loss over a batch of (x, y, mask) triples; returns (loss, grads, adapter grads, dvis)."""
    X, Y, M = collate(records)
    logits, fc = forward(params, X, cfg, adapters, vis, cache=True)
    loss, dlogits = nll_from_logits(logits, Y, M)
    if not want_grads:
        return loss, None, None, None
    g, ag, dvis = backward(params, cfg, fc, dlogits, adapters, base_grads)
    return loss, g, ag, dvis


def clip_grads(grads: dict, max_norm: float) -> float:
    norm = math.sqrt(sum(float(np.sum(v * v)) for v in grads.values()))
    if max_norm and norm > max_norm:
        s = max_norm / (norm + 1e-12)
        for k in grads:
            grads[k] = grads[k] * s
    return norm


@dataclass
class TrainResult:
    params: dict
    curve: list = field(default_factory=list)  # (step, loss, lr)


def train(params: dict, cfg: ModelConfig, records, tcfg: TrainConfig, log_every: int = 0) -> TrainResult:
    """Adam with linear warmup and cosine decay; ``params`` is copied, not mutated."""
    if not records:
        raise ValueError("empty training set")
    params = {k: v.copy() for k, v in params.items()}
    result = TrainResult(params)
    if tcfg.steps <= 0:
        return result
    rng = make_rng(derive_seed(tcfg.seed, "lm-batches"))
    opt = Adam(params, lr=tcfg.lr)
    n = len(records)
    order, pos = rng.permutation(n), 0
    for step in range(tcfg.steps):
        batch = []
        for _ in range(min(tcfg.batch_size, n)):
            if pos == n:
                order, pos = rng.permutation(n), 0
            batch.append(records[order[pos]])
            pos += 1
        loss, grads, _, _ = nll_loss(params, cfg, batch)
        if not math.isfinite(loss):
            raise DivergenceError("LM loss became non-finite", step=step)
        clip_grads(grads, tcfg.grad_clip)
        lr = lr_at(step, tcfg.steps, tcfg.lr, tcfg.warmup_ratio, tcfg.schedule)
        opt.step(params, grads, lr=lr)
        result.curve.append((step, loss, lr))
        if log_every and step % log_every == 0:
            log.info("lm step %d loss %.4f lr %.2e", step, loss, lr)
    return result


def mean_answer_nll(params, cfg: ModelConfig, records, adapters=None, vis_list=None, batch_size: int = 8) -> float:
    """Token-weighted mean NLL over all answer positions of ``records``."""
    tot, cnt = 0.0, 0.0
    for i in range(0, len(records), batch_size):
        chunk = records[i:i + batch_size]
        vis = None if vis_list is None else np.stack(vis_list[i:i + batch_size])
        loss, *_ = nll_loss(params, cfg, chunk, adapters, vis, want_grads=False)
        w = sum(float(r[2].sum()) for r in chunk)
        tot += loss * w
        cnt += w
    return tot / cnt


# --- decoding -----------------------------------------------------------------

class _Stepper:
    """Incremental decoding with cached keys/values (one sequence)."""

    def __init__(self, params, cfg, adapters=None, vis=None):
        self.p, self.cfg, self.a = params, cfg, adapters
        self.k = [np.zeros((cfg.heads, 0, cfg.dim // cfg.heads)) for _ in range(cfg.layers)]
        self.v = [np.zeros((cfg.heads, 0, cfg.dim // cfg.heads)) for _ in range(cfg.layers)]
        self.t = 0
        self.xkv = None
        if adapters is not None:
            self.vis = np.asarray(vis)
            self.xkv = [(self.vis @ adapters[f"L{l}.xattn.wk"], self.vis @ adapters[f"L{l}.xattn.wv"])
                        for l in range(cfg.layers)]

    def step(self, token: int) -> np.ndarray:
        p, cfg = self.p, self.cfg
        if self.t >= cfg.context:
            raise ShapeError("context exhausted")
        D, H = cfg.dim, cfg.heads
        dh = D // H
        x = p["tok_emb"][token] + p["pos_emb"][self.t]
        for l in range(cfg.layers):
            pre = f"L{l}."
            a, _ = _ln_fwd(x, p[pre + "ln1.g"], p[pre + "ln1.b"])
            qkv = a @ p[pre + "attn.w_qkv"] + p[pre + "attn.b_qkv"]
            q, k, v = qkv.reshape(3, H, dh)
            self.k[l] = np.concatenate([self.k[l], k[:, None, :]], axis=1)
            self.v[l] = np.concatenate([self.v[l], v[:, None, :]], axis=1)
            s = np.einsum("hd,htd->ht", q, self.k[l]) / math.sqrt(dh)
            o = np.einsum("ht,htd->hd", softmax(s), self.v[l]).reshape(D)
            x = x + o @ p[pre + "attn.w_o"] + p[pre + "attn.b_o"]
            if self.a is not None:
                pa = f"L{l}.xattn."
                kk, vv = self.xkv[l]
                wq = self.a[pa + "wq"]
                att = softmax((x @ wq) @ kk.T / math.sqrt(wq.shape[1]))
                x = x + self.a[pa + "gate"][0] * ((att @ vv) @ self.a[pa + "wo"])
            a2, _ = _ln_fwd(x, p[pre + "ln2.g"], p[pre + "ln2.b"])
            gh, _ = _gelu_fwd(a2 @ p[pre + "ff.w1"] + p[pre + "ff.b1"])
            x = x + gh @ p[pre + "ff.w2"] + p[pre + "ff.b2"]
        af, _ = _ln_fwd(x, p["lnf.g"], p["lnf.b"])
        self.t += 1
        if cfg.tie_embeddings:
            return af @ p["tok_emb"].T
        return af @ p["out.w"] + p["out.b"]


@dataclass
class DecodeConfig:
    temperature: float = 0.0
    max_len: int = 256
    grammar: bool = False
    seed: int = 0
    min_frames: int = 1


def motion_grammar_mask(vocab, emitted: list, remaining: int, min_frames: int = 1) -> np.ndarray:
    """Allowed next ids under the cycle (part0 .. part4 <frame>)* <eos>."""
    allowed = np.zeros(vocab.size, dtype=bool)
    pos = len(emitted) % 6
    frames = len(emitted) // 6
    if pos == 5:
        allowed[vocab.frame] = True
        return allowed
    if pos == 0:
        if frames >= min_frames:
            allowed[vocab.eos] = True
        if remaining < 6 and frames >= min_frames:
            return allowed
    lo = vocab.motion_base + pos * vocab.K
    allowed[lo:lo + vocab.K] = True
    return allowed


def generate(params, cfg: ModelConfig, prompt_ids, vocab, dcfg: DecodeConfig | None = None,
             adapters=None, vis=None) -> list[int]:
    """Continue ``<bos> prompt <sep>`` until ``<eos>`` or ``max_len`` new tokens.

    ``temperature == 0`` is greedy argmax.  With ``grammar`` on, logits of ids
    that would break the motion cycle are masked out before choosing.
    """
    dcfg = dcfg or DecodeConfig()
    rng = make_rng(dcfg.seed)
    ctx = [vocab.bos] + list(prompt_ids) + [vocab.sep]
    if len(ctx) > cfg.context:
        raise ShapeError("prompt does not fit the context")
    st = _Stepper(params, cfg, adapters, vis)
    for tok in ctx[:-1]:
        st.step(tok)
    logits = st.step(ctx[-1])
    out = []
    budget = min(dcfg.max_len, cfg.context - len(ctx))
    while len(out) < budget:
        if dcfg.grammar:
            allowed = motion_grammar_mask(vocab, out, budget - len(out), dcfg.min_frames)
            logits = np.where(allowed, logits, -np.inf)
        if dcfg.temperature <= 0:
            nxt = int(np.argmax(logits))
        else:
            probs = softmax(logits / dcfg.temperature)
            nxt = int(rng.choice(len(probs), p=probs))
        if nxt == vocab.eos:
            break
        out.append(nxt)
        if len(out) < budget:
            logits = st.step(nxt)
    return out


# --- checkpoints ----------------------------------------------------------------

LM_MAGIC = b"HLM1"
ADAPTER_MAGIC = b"HVA1"


def _write_blocks(arrays: dict) -> bytes:
    chunks = [struct.pack("<I", len(arrays))]
    for name in sorted(arrays):
        arr = np.asarray(arrays[name])
        nb = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(nb)) + nb + struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(chunks)


def _read_blocks(data: bytes, off: int):
    def need(n):
        if off + n > len(data):
            raise TruncatedError("checkpoint truncated")
    need(4)
    (n,) = struct.unpack_from("<I", data, off)
    off += 4
    out = {}
    for _ in range(n):
        need(2)
        (ln,) = struct.unpack_from("<H", data, off)
        off += 2
        need(ln + 1)
        name = data[off:off + ln].decode("utf-8")
        off += ln
        (nd,) = struct.unpack_from("<B", data, off)
        off += 1
        need(4 * nd)
        shape = struct.unpack_from(f"<{nd}I", data, off)
        off += 4 * nd
        cnt = int(np.prod(shape)) if nd else 1
        need(4 * cnt)
        out[name] = np.frombuffer(data, "<f4", cnt, off).astype(np.float64).reshape(shape)
        off += 4 * cnt
    return out, off


def _header(magic: bytes, meta: dict) -> bytes:
    js = json.dumps(meta, sort_keys=True).encode("utf-8")
    return magic + struct.pack("<I", len(js)) + js


def _read_header(data: bytes, off: int, magic: bytes):
    if len(data) < off + 8:
        raise TruncatedError("checkpoint header truncated")
    if data[off:off + 4] != magic:
        raise BadMagicError(f"expected magic {magic!r}, found {data[off:off + 4]!r}")
    (ln,) = struct.unpack_from("<I", data, off + 4)
    if len(data) < off + 8 + ln:
        raise TruncatedError("checkpoint header truncated")
    return json.loads(data[off + 8:off + 8 + ln]), off + 8 + ln


def checkpoint_bytes(params: dict, cfg: ModelConfig, adapters: dict | None = None, adapter_meta: dict | None = None) -> bytes:
    out = _header(LM_MAGIC, asdict(cfg)) + _write_blocks(params)
    if adapters is not None:
        out += _header(ADAPTER_MAGIC, adapter_meta or {}) + _write_blocks(adapters)
    return out


def save_checkpoint(path, params, cfg, adapters=None, adapter_meta=None) -> Path:
    path = Path(path)
    path.write_bytes(checkpoint_bytes(params, cfg, adapters, adapter_meta))
    return path


def load_checkpoint(path):
    """(params, cfg, adapters or None, adapter_meta or None)."""
    data = Path(path).read_bytes()
    meta, off = _read_header(data, 0, LM_MAGIC)
    try:
        cfg = ModelConfig(**meta)
    except TypeError as exc:
        raise FormatError(f"bad model config in checkpoint: {exc}") from exc
    params, off = _read_blocks(data, off)
    adapters = ameta = None
    if off < len(data):
        ameta, off = _read_header(data, off, ADAPTER_MAGIC)
        adapters, off = _read_blocks(data, off)
    return params, cfg, adapters, ameta


def round_params(params: dict) -> dict:
    """Round through float32, i.e. what a checkpoint stores."""
    return {k: v.astype(np.float32).astype(np.float64) for k, v in params.items()}


def write_curve_csv(path, curve):
    with open(path, "w") as fh:
        fh.write("step,loss,lr\n")
        for step, loss, lr in curve:
            fh.write(f"{step},{loss!r},{lr!r}\n")
