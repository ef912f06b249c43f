"""Compositional per-body-part vector quantizer.

Each of the five parts owns an encoder (affine, tanh, affine), a K x d
codebook and a mirrored decoder.  A frame is root-centered, split into parts
and every part is snapped to its nearest code, giving five indices per frame.

Loss per part, averaged over the batch and then over parts::

    rec = ‖c − D(q)‖        q = codebook[argmin_k ‖E(c) − codebook[k]‖]
    emb = ‖sg(E(c)) − q‖    moves the codebook only
    com = ‖E(c) − sg(q)‖    moves the encoder only
    total = rec + emb + β·com

Norms are plain Euclidean (not squared).  The reconstruction gradient reaches
the encoder through the straight-through estimator.  Gradients are written
out by hand.
"""

from __future__ import annotations

import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BadMagicError, DivergenceError, NumericError, ShapeError, TruncatedError, VocabError
from .motion import DEFAULT_LAYOUT, NUM_PARTS, PART_NAMES, MotionSequence, join_parts, root_center, split_parts
from .optim import Adam
from .rng import derive_seed, make_rng

log = logging.getLogger(__name__)

PARAM_ORDER = ("W1", "b1", "W2", "b2", "codebook", "V1", "c1", "V2", "c2")
ENCODER_KEYS = ("W1", "b1", "W2", "b2")
DECODER_KEYS = ("V1", "c1", "V2", "c2")


@dataclass
class PartCodec:
    part_id: int
    params: dict

    @property
    def K(self) -> int:
        return self.params["codebook"].shape[0]

    @property
    def d(self) -> int:
        return self.params["codebook"].shape[1]

    @property
    def in_dim(self) -> int:
        return self.params["W1"].shape[0]

    def encode(self, x):
        p = self.params
        return np.tanh(x @ p["W1"] + p["b1"]) @ p["W2"] + p["b2"]

    def decode(self, z):
        p = self.params
        return np.tanh(z @ p["V1"] + p["c1"]) @ p["V2"] + p["c2"]

    def copy(self) -> "PartCodec":
        return PartCodec(self.part_id, {k: v.copy() for k, v in self.params.items()})


def init_codec(part_id: int, in_dim: int, K: int, d: int, rng: np.random.Generator) -> PartCodec:
    h = 4 * d
    p = {
        "W1": rng.normal(0.0, 1.0 / math.sqrt(in_dim), (in_dim, h)),
        "b1": np.zeros(h),
        "W2": rng.normal(0.0, 1.0 / math.sqrt(h), (h, d)),
        "b2": np.zeros(d),
        "codebook": rng.normal(0.0, 1.0, (K, d)),
        "V1": rng.normal(0.0, 1.0 / math.sqrt(d), (d, h)),
        "c1": np.zeros(h),
        "V2": rng.normal(0.0, 1.0 / math.sqrt(h), (h, in_dim)),
        "c2": np.zeros(in_dim),
    }
    return PartCodec(part_id, p)


def nearest_code(latents, codebook) -> np.ndarray:
    """Row-wise argmin of Euclidean distance; ties go to the lowest index."""
    latents = np.atleast_2d(latents)
    d2 = np.sum((latents[:, None, :] - codebook[None, :, :]) ** 2, axis=-1)
    return np.argmin(d2, axis=1)


def _check_finite(arr, part, what):
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite {what} in part {PART_NAMES[part]}")


def encode_frame(frame, codecs, layout=DEFAULT_LAYOUT):
    """Tokens (5-tuple) and latents (list of 5 d-vectors) for one 15 x 3 frame."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.shape != (15, 3):
        raise ShapeError(f"frame must be 15 x 3, got {frame.shape}")
    parts = split_parts(frame[None], layout)
    tokens, latents = [], []
    for c, x in zip(codecs, parts):
        z = c.encode(x)
        _check_finite(z, c.part_id, "encoder activations")
        tokens.append(int(nearest_code(z, c.params["codebook"])[0]))
        latents.append(z[0])
    return tuple(tokens), latents


def decode_frame(tokens, codecs, layout=DEFAULT_LAYOUT) -> np.ndarray:
    return decode_codes(np.asarray(tokens, dtype=np.int64)[None], codecs, layout)[0]


def encode_frames(frames, codecs, layout=DEFAULT_LAYOUT) -> np.ndarray:
    """(N, 15, 3) -> (N, 5) code indices."""
    parts = split_parts(frames, layout)
    out = np.empty((len(frames), NUM_PARTS), dtype=np.int64)
    for b, (c, x) in enumerate(zip(codecs, parts)):
        z = c.encode(x)
        _check_finite(z, c.part_id, "encoder activations")
        out[:, b] = nearest_code(z, c.params["codebook"])
    return out


def decode_codes(codes, codecs, layout=DEFAULT_LAYOUT) -> np.ndarray:
    """(N, 5) code indices -> (N, 15, 3) root-centered frames."""
    codes = np.asarray(codes)
    if codes.ndim != 2 or codes.shape[1] != NUM_PARTS:
        raise ShapeError(f"codes must be N x 5, got {codes.shape}")
    parts = []
    for b, c in enumerate(codecs):
        k = codes[:, b]
        if np.any(k < 0) or np.any(k >= c.K):
            raise VocabError(f"code out of range [0, {c.K}) for part {PART_NAMES[b]}")
        parts.append(c.decode(c.params["codebook"][k]))
    return join_parts(parts, layout)


@dataclass
class VqLossReport:
    rec: float
    emb: float
    com: float
    total: float
    beta: float


def _safe_unit(e):
    n = np.linalg.norm(e, axis=-1, keepdims=True)
    return np.divide(e, n, out=np.zeros_like(e), where=n > 0), n[..., 0]


def part_forward_backward(codec: PartCodec, x, beta: float, terms=("rec", "emb", "com")):
    """Loss terms and parameter gradients for one part on a batch ``x`` (N, in_dim).

    Also returns the reconstruction gradients w.r.t. the encoder output and
    the quantized latent (equal under the straight-through estimator).
    """
    p = codec.params
    N = x.shape[0]
    h = np.tanh(x @ p["W1"] + p["b1"])
    z = h @ p["W2"] + p["b2"]
    _check_finite(z, codec.part_id, "encoder activations")
    k = nearest_code(z, p["codebook"])
    q = p["codebook"][k]
    g = np.tanh(q @ p["V1"] + p["c1"])
    xhat = g @ p["V2"] + p["c2"]

    u_rec, n_rec = _safe_unit(xhat - x)
    u_q, n_q = _safe_unit(z - q)
    losses = {"rec": n_rec.mean(), "emb": n_q.mean(), "com": n_q.mean()}

    grads = {key: np.zeros_like(v) for key, v in p.items()}
    dz = np.zeros_like(z)
    dq_rec = np.zeros_like(z)
    if "rec" in terms:
        dxhat = u_rec / N
        grads["V2"] += g.T @ dxhat
        grads["c2"] += dxhat.sum(0)
        dg = dxhat @ p["V2"].T * (1.0 - g * g)
        grads["V1"] += q.T @ dg
        grads["c1"] += dg.sum(0)
        dq_rec = dg @ p["V1"].T
        dz += dq_rec  # straight-through
    if "emb" in terms:
        np.add.at(grads["codebook"], k, -u_q / N)
    if "com" in terms:
        dz += beta * u_q / N
    dh = dz @ p["W2"].T * (1.0 - h * h)
    grads["W2"] += h.T @ dz
    grads["b2"] += dz.sum(0)
    grads["W1"] += x.T @ dh
    grads["b1"] += dh.sum(0)
    aux = {"tokens": k, "latents": z, "dz_rec": dq_rec.copy(), "dq_rec": dq_rec}
    return losses, grads, aux


def vq_loss(frames, codecs, beta: float = 0.25, layout=DEFAULT_LAYOUT, terms=("rec", "emb", "com")):
    """Batch loss report and per-part gradient dicts for root-centered ``frames`` (N, 15, 3)."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 3 or frames.shape[0] == 0:
        raise ShapeError("vq_loss needs a nonempty batch of 15 x 3 frames")
    parts = split_parts(frames, layout)
    acc = {"rec": 0.0, "emb": 0.0, "com": 0.0}
    all_grads = []
    for c, x in zip(codecs, parts):
        losses, grads, _ = part_forward_backward(c, x, beta, terms)
        for key in acc:
            acc[key] += losses[key] / NUM_PARTS
        all_grads.append({key: v / NUM_PARTS for key, v in grads.items()})
    total = acc["rec"] + acc["emb"] + beta * acc["com"]
    return VqLossReport(acc["rec"], acc["emb"], acc["com"], total, beta), all_grads


@dataclass
class VqConfig:
    K: int = 1024
    d: int = 8
    beta: float = 0.25
    lr: float = 2e-3
    steps: int = 2000
    batch_size: int = 128
    seed: int = 0
    dead_after: int = 50


@dataclass
class VqTrainResult:
    codecs: list
    curve: list = field(default_factory=list)  # (step, rec, emb, com, total)
    reinitialized: int = 0


def _frames_from(corpus) -> np.ndarray:
    """Stack root-centered frames from clips, sequences or a raw (N, 15, 3) array."""
    if isinstance(corpus, np.ndarray):
        return np.asarray(corpus, dtype=np.float64)
    out = []
    for item in corpus:
        seq = item.sequence if hasattr(item, "sequence") else item
        out.append(root_center(seq)[0].frames)
    if not out:
        raise ShapeError("training corpus is empty")
    return np.concatenate(out, axis=0)


def init_codecs(frames, cfg: VqConfig, layout=DEFAULT_LAYOUT) -> list[PartCodec]:
    """Random encoders/decoders; codebook rows copied from encoder outputs of random frames."""
    parts = split_parts(frames, layout)
    codecs = []
    for b in range(NUM_PARTS):
        rng = make_rng(derive_seed(cfg.seed, "part", b))
        c = init_codec(b, layout.part_dim(b), cfg.K, cfg.d, rng)
        z = c.encode(parts[b])
        replace = z.shape[0] < cfg.K
        idx = rng.choice(z.shape[0], size=cfg.K, replace=replace)
        book = z[idx].copy()
        if replace:
            book += rng.normal(0.0, 1e-3, book.shape)
        c.params["codebook"] = book
        codecs.append(c)
    return codecs


def train_vq(corpus, cfg: VqConfig, layout=DEFAULT_LAYOUT, log_every: int = 0) -> VqTrainResult:
    """Adam on the per-part losses with dead-code reinitialisation.

    A code that no batch frame selected for ``dead_after`` consecutive steps
    is reset to a random encoder output of the current batch.
    """
    frames = _frames_from(corpus)
    if frames.shape[0] == 0:
        raise ShapeError("training corpus is empty")
    codecs = init_codecs(frames, cfg, layout)
    result = VqTrainResult(codecs)
    if cfg.steps <= 0:
        return result
    parts = split_parts(frames, layout)
    rng = make_rng(derive_seed(cfg.seed, "batches"))
    opts = [Adam(c.params, lr=cfg.lr) for c in codecs]
    idle = [np.zeros(cfg.K, dtype=np.int64) for _ in codecs]
    N = frames.shape[0]
    bs = min(cfg.batch_size, N)
    for step in range(cfg.steps):
        idx = rng.choice(N, size=bs, replace=False) if bs < N else np.arange(N)
        acc = np.zeros(3)
        for b, c in enumerate(codecs):
            x = parts[b][idx]
            losses, grads, aux = part_forward_backward(c, x, cfg.beta)
            acc += [losses["rec"], losses["emb"], losses["com"]]
            opts[b].step(c.params, grads)
            used = np.zeros(cfg.K, dtype=bool)
            used[aux["tokens"]] = True
            idle[b][used] = 0
            idle[b][~used] += 1
            dead = np.flatnonzero(idle[b] >= cfg.dead_after)
            if dead.size:
                pick = rng.choice(x.shape[0], size=dead.size, replace=dead.size > x.shape[0])
                c.params["codebook"][dead] = aux["latents"][pick]
                opts[b].m["codebook"][dead] = 0.0
                opts[b].v["codebook"][dead] = 0.0
                idle[b][dead] = 0
                result.reinitialized += int(dead.size)
        rec, emb, com = acc / NUM_PARTS
        total = rec + emb + cfg.beta * com
        if not math.isfinite(total):
            raise DivergenceError("VQ loss became non-finite", step=step)
        result.curve.append((step, float(rec), float(emb), float(com), float(total)))
        if log_every and step % log_every == 0:
            log.info("vq step %d rec %.4f emb %.4f com %.4f", step, rec, emb, com)
    return result


def reconstruction_error(frames, codecs, layout=DEFAULT_LAYOUT) -> float:
    """Mean per-part ‖c − D(q(E(c)))‖ over root-centered ``frames`` (the rec term, meters)."""
    rep, _ = vq_loss(frames, codecs, 0.0, layout, terms=())
    return rep.rec


@dataclass
class TokenSequence:
    """Per-frame 5-part codes of a root-centered clip plus its pelvis track."""

    codes: np.ndarray  # (T, 5)
    fps: int
    root: np.ndarray | None = None  # (T, 3)

    @property
    def num_frames(self) -> int:
        return self.codes.shape[0]


def tokenize_sequence(seq: MotionSequence, codecs, layout=DEFAULT_LAYOUT) -> TokenSequence:
    centered, root = root_center(seq)
    return TokenSequence(encode_frames(centered.frames, codecs, layout), seq.fps, root)


def detokenize_sequence(tokens: TokenSequence, codecs, layout=DEFAULT_LAYOUT, with_root: bool = True) -> MotionSequence:
    if tokens.codes.shape[0] == 0:
        raise ShapeError("cannot detokenize an empty token sequence")
    frames = decode_codes(tokens.codes, codecs, layout)
    if with_root and tokens.root is not None:
        frames = frames + tokens.root[:, None, :]
    return MotionSequence(tokens.fps, frames)


MAGIC = b"HVQ1"


def save_codecs(codecs, path) -> Path:
    path = Path(path)
    K, d = codecs[0].K, codecs[0].d
    chunks = [struct.pack("<4sIII", MAGIC, len(codecs), K, d)]
    for c in codecs:
        chunks.append(struct.pack("<II", c.in_dim, c.params["W1"].shape[1]))
        for key in PARAM_ORDER:
            chunks.append(np.ascontiguousarray(c.params[key], dtype="<f4").tobytes())
    path.write_bytes(b"".join(chunks))
    return path


def load_codecs(path) -> list[PartCodec]:
    data = Path(path).read_bytes()
    if len(data) < 16:
        raise TruncatedError("codec checkpoint shorter than header")
    magic, n_parts, K, d = struct.unpack_from("<4sIII", data, 0)
    if magic != MAGIC:
        raise BadMagicError(f"bad codec magic {magic!r}")
    off = 16
    codecs = []
    for b in range(n_parts):
        if len(data) < off + 8:
            raise TruncatedError("codec checkpoint truncated")
        in_dim, h = struct.unpack_from("<II", data, off)
        off += 8
        shapes = {"W1": (in_dim, h), "b1": (h,), "W2": (h, d), "b2": (d,), "codebook": (K, d),
                  "V1": (d, h), "c1": (h,), "V2": (h, in_dim), "c2": (in_dim,)}
        params = {}
        for key in PARAM_ORDER:
            n = int(np.prod(shapes[key]))
            if len(data) < off + 4 * n:
                raise TruncatedError("codec checkpoint truncated")
            params[key] = np.frombuffer(data, "<f4", n, off).astype(np.float64).reshape(shapes[key])
            off += 4 * n
        codecs.append(PartCodec(b, params))
    return codecs


def round_to_f32(codecs) -> list[PartCodec]:
    """Copy of ``codecs`` with every weight rounded through float32 (what a checkpoint stores)."""
    return [PartCodec(c.part_id, {k: v.astype(np.float32).astype(np.float64) for k, v in c.params.items()})
            for c in codecs]
