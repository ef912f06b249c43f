"""Vision-conditioned fine-tuning on top of a frozen :mod:`hvla.tinylm` model.

A toy panoramic renderer produces egocentric scenes with one red target
object.  Images are cut into P x P patches, projected to ``D_v`` and given a
2-D sinusoidal position code.  Each decoder layer gets a gated
cross-attention adapter that reads those visual tokens; only the adapters
and the patch projector are trained.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import tinylm
from .errors import DivergenceError, FormatError, FrozenViolationError, ShapeError
from .optim import Adam, lr_at
from .rng import derive_seed, make_rng

log = logging.getLogger(__name__)

BEARINGS = {"front": 0.0, "left": math.pi / 2, "back": math.pi, "right": -math.pi / 2}
BEARING_NAMES = ("left", "front", "right", "back")
TASKS = {
    # task -> (instruction, clip family, heading offset relative to the object)
    "turn": ("turn toward the object", "idle", 0.0),
    "approach": ("walk to the object", "walk", 0.0),
    "avoid": ("move away from the object", "walk", math.pi),
}


def task_texts() -> list[str]:
    return [v[0] for v in TASKS.values()]


# --- scenes -------------------------------------------------------------------

@dataclass
class SceneImage:
    pixels: np.ndarray  # H x W x 3 in [0, 1]
    bearing: str
    distance: float
    azimuth: float
    seed: int

    def annotation(self) -> dict:
        return {"bearing": self.bearing, "distance": self.distance, "azimuth": self.azimuth,
                "seed": self.seed, "height": int(self.pixels.shape[0]), "width": int(self.pixels.shape[1])}


TARGET_RGB = np.array([0.9, 0.1, 0.1])


def _blob_geometry(distance: float, H: int):
    radius = 10.0 / (1.0 + distance)          # 6.7 px at 0.5 m, 1.7 px at 5 m
    row = H * (0.42 + 0.4 / (1.0 + distance))
    return radius, row


def render_scene(bearing: str, distance: float, seed: int, size: int = 64, jitter_deg: float = 15.0) -> SceneImage:
    """Panoramic egocentric view: straight ahead is the center column, left is a quarter in."""
    if bearing not in BEARINGS:
        raise ValueError(f"bearing must be one of {sorted(BEARINGS)}, got {bearing!r}")
    if not (0.5 <= distance <= 5.0):
        raise ValueError(f"distance {distance} outside [0.5, 5] m")
    H = W = size
    rng = make_rng(derive_seed(seed, "scene"))
    az = math.degrees(BEARINGS[bearing]) + rng.uniform(-jitter_deg, jitter_deg)
    rows, cols = np.mgrid[0:H, 0:W]
    img = np.empty((H, W, 3))
    horizon = int(H * 0.4)
    sky = np.linspace(0.75, 0.55, horizon)[:, None]
    img[:horizon] = np.stack([0.55 * sky, 0.7 * sky, sky], -1)
    ground = np.linspace(0.35, 0.55, H - horizon)[:, None] * np.ones((1, W))
    img[horizon:] = np.stack([0.6 * ground, ground, 0.5 * ground], -1)
    for _ in range(int(rng.integers(2, 6))):  # clutter: muted blue/green/gray boxes
        h, w = int(rng.integers(2, 7)), int(rng.integers(2, 7))
        r0, c0 = int(rng.integers(horizon - 4, H - h)), int(rng.integers(0, W - w))
        img[r0:r0 + h, c0:c0 + w] = rng.uniform(0.15, 0.5) * np.array(rng.permutation([0.6, 0.9, 1.0]))
    img += rng.normal(0.0, 0.02, img.shape)
    radius, row = _blob_geometry(distance, H)
    cu = ((180.0 - az) / 360.0) % 1.0 * W
    dc = np.abs(cols + 0.5 - cu)
    dc = np.minimum(dc, W - dc)  # horizontal wrap
    blob = dc ** 2 + (rows + 0.5 - row) ** 2 <= radius ** 2
    img[blob] = TARGET_RGB
    return SceneImage(np.clip(img, 0.0, 1.0), bearing, float(distance), float(az), int(seed))


def blob_mask(img: SceneImage) -> np.ndarray:
    return np.all(np.abs(img.pixels - TARGET_RGB) < 1e-9, axis=-1)


def save_scene(img: SceneImage, path) -> Path:
    """P6 PPM plus a ``.json`` annotation sidecar."""
    path = Path(path)
    H, W, _ = img.pixels.shape
    data = np.round(img.pixels * 255).astype(np.uint8).tobytes()
    path.write_bytes(f"P6\n{W} {H}\n255\n".encode("ascii") + data)
    path.with_suffix(".json").write_text(json.dumps(img.annotation(), sort_keys=True))
    return path


def load_scene(path) -> SceneImage:
    path = Path(path)
    raw = path.read_bytes()
    fields, off = [], 0
    while len(fields) < 4:
        while raw[off:off + 1].isspace():
            off += 1
        end = off
        while not raw[end:end + 1].isspace():
            end += 1
        fields.append(raw[off:end].decode("ascii"))
        off = end
    if fields[0] != "P6":
        raise FormatError(f"{path}: not a binary PPM")
    W, H = int(fields[1]), int(fields[2])
    px = np.frombuffer(raw, np.uint8, H * W * 3, off + 1).reshape(H, W, 3) / 255.0
    ann = json.loads(path.with_suffix(".json").read_text())
    return SceneImage(px, ann["bearing"], ann["distance"], ann["azimuth"], ann["seed"])


# --- vision encoder -------------------------------------------------------------

def patchify(pixels, P: int) -> np.ndarray:
    pixels = np.asarray(pixels, dtype=np.float64)
    H, W, C = pixels.shape
    if H % P or W % P:
        raise ShapeError(f"image {H}x{W} not divisible by patch size {P}")
    x = pixels.reshape(H // P, P, W // P, P, C).transpose(0, 2, 1, 3, 4)
    return x.reshape((H // P) * (W // P), P * P * C)


def position_codes(gh: int, gw: int, dim: int) -> np.ndarray:
    """2-D sinusoidal code: half the channels encode the row, half the column."""
    if dim % 4:
        raise ShapeError("visual dim must be divisible by 4")
    q = dim // 4
    freqs = 1.0 / (100.0 ** (np.arange(q) / q))
    r, c = np.mgrid[0:gh, 0:gw]
    r, c = r.reshape(-1, 1) * freqs, c.reshape(-1, 1) * freqs
    return np.concatenate([np.sin(r), np.cos(r), np.sin(c), np.cos(c)], axis=1)


@dataclass
class AdapterConfig:
    vis_dim: int = 32
    attn_dim: int = 0  # 0 -> model dim
    patch: int = 8
    image_size: int = 64
    position_codes: bool = True
    init: str = "gated"  # "gated": gate 0, small random output projection; "zero": both zero
    seed: int = 0

    def resolved_attn_dim(self, model_dim: int) -> int:
        return self.attn_dim or model_dim


def encode_image(pixels, adapters: dict, acfg: AdapterConfig) -> np.ndarray:
    """Visual tokens ((H/P)(W/P), D_v) from an H x W x 3 image."""
    patches = patchify(pixels, acfg.patch)
    tok = patches @ adapters["vis.w"] + adapters["vis.b"]
    if acfg.position_codes:
        g = acfg.image_size // acfg.patch
        tok = tok + position_codes(g, g, acfg.vis_dim)
    return tok


def init_adapters(cfg: tinylm.ModelConfig, acfg: AdapterConfig) -> dict:
    rng = make_rng(derive_seed(acfg.seed, "adapters"))
    D, Dv, Da = cfg.dim, acfg.vis_dim, acfg.resolved_attn_dim(cfg.dim)
    n_in = acfg.patch * acfg.patch * 3
    a = {"vis.w": rng.normal(0.0, 1.0 / math.sqrt(n_in), (n_in, Dv)), "vis.b": np.zeros(Dv)}
    for l in range(cfg.layers):
        p = f"L{l}.xattn."
        a[p + "wq"] = rng.normal(0.0, 1.0 / math.sqrt(D), (D, Da))
        a[p + "wk"] = rng.normal(0.0, 1.0 / math.sqrt(Dv), (Dv, Da))
        a[p + "wv"] = rng.normal(0.0, 1.0 / math.sqrt(Dv), (Dv, Da))
        if acfg.init == "zero":
            a[p + "wo"] = np.zeros((Da, D))
        else:
            a[p + "wo"] = rng.normal(0.0, 0.02, (Da, D))
        a[p + "gate"] = np.zeros(1)
    return a


def fuse_layer(x, vis, adapters: dict, layer: int) -> np.ndarray:
    """One adapter: ``x + gate * OutProj(softmax(Q K^T / sqrt(D)) V)``; x is (T, D) or (B, T, D)."""
    x = np.asarray(x, dtype=np.float64)
    vis = np.asarray(vis, dtype=np.float64)
    squeeze = x.ndim == 2
    if squeeze:
        x, vis = x[None], vis[None]
    pre = f"L{layer}.xattn."
    if x.shape[-1] != adapters[pre + "wq"].shape[0] or vis.shape[-1] != adapters[pre + "wk"].shape[0]:
        raise ShapeError("adapter dims do not match inputs")
    out, _ = tinylm.xattn_fwd(x, vis, adapters, pre)
    return out[0] if squeeze else out


def attention_weights(x, vis, adapters: dict, layer: int) -> np.ndarray:
    pre = f"L{layer}.xattn."
    q = np.asarray(x) @ adapters[pre + "wq"]
    k = np.asarray(vis) @ adapters[pre + "wk"]
    return tinylm.softmax(q @ k.T / math.sqrt(q.shape[-1]))


# --- fine-tuning ------------------------------------------------------------------

@dataclass
class VlaRecord:
    image: SceneImage
    prompt_ids: list
    target_ids: list


def block_checksums(params: dict) -> dict:
    return {k: hashlib.sha256(np.ascontiguousarray(v).tobytes()).hexdigest() for k, v in sorted(params.items())}


def vla_loss(base, cfg, adapters, acfg, records, vocab, base_grads=False):
    """Answer NLL with visual conditioning; returns (loss, adapter grads incl. encoder)."""
    seqs = [tinylm.record_to_sequence(r.prompt_ids, r.target_ids, vocab) for r in records]
    pixels = [r.image.pixels for r in records]
    patches = np.stack([patchify(p, acfg.patch) for p in pixels])
    vis = np.stack([encode_image(p, adapters, acfg) for p in pixels])
    loss, _, ag, dvis = tinylm.nll_loss(base, cfg, seqs, adapters, vis, base_grads=base_grads)
    ag["vis.w"] = tinylm._mm_w(patches, dvis)
    ag["vis.b"] = tinylm._sum0(dvis)
    return loss, ag


@dataclass
class FinetuneConfig:
    lr: float = 1e-2
    warmup_ratio: float = 0.01
    schedule: str = "cosine"
    batch_size: int = 4
    steps: int = 2000
    seed: int = 0
    freeze_vision: bool = False
    grad_clip: float = 1.0


@dataclass
class FinetuneResult:
    adapters: dict
    curve: list = field(default_factory=list)
    base_checksum_before: dict = field(default_factory=dict)
    base_checksum_after: dict = field(default_factory=dict)


def finetune(base: dict, cfg: tinylm.ModelConfig, adapters: dict, acfg: AdapterConfig, records, vocab,
             fcfg: FinetuneConfig, log_every: int = 0) -> FinetuneResult:
    """Train adapters (and the patch projector) against a frozen base model."""
    before = block_checksums(base)
    adapters = {k: v.copy() for k, v in adapters.items()}
    res = FinetuneResult(adapters, base_checksum_before=before)
    if fcfg.steps > 0:
        if not records:
            raise ValueError("empty fine-tuning set")
        rng = make_rng(derive_seed(fcfg.seed, "vla-batches"))
        opt = Adam(adapters, lr=fcfg.lr)
        trainable = [k for k in adapters if not (fcfg.freeze_vision and k.startswith("vis."))]
        n = len(records)
        order, pos = rng.permutation(n), 0
        for step in range(fcfg.steps):
            batch = []
            for _ in range(min(fcfg.batch_size, n)):
                if pos == n:
                    order, pos = rng.permutation(n), 0
                batch.append(records[order[pos]])
                pos += 1
            loss, grads = vla_loss(base, cfg, adapters, acfg, batch, vocab)
            if not math.isfinite(loss):
                raise DivergenceError("adapter loss became non-finite", step=step)
            grads = {k: grads[k] for k in trainable}
            tinylm.clip_grads(grads, fcfg.grad_clip)
            lr = lr_at(step, fcfg.steps, fcfg.lr, fcfg.warmup_ratio, fcfg.schedule)
            opt.step(adapters, grads, lr=lr, keys=trainable)
            res.curve.append((step, loss, lr))
            if log_every and step % log_every == 0:
                log.info("vla step %d loss %.4f", step, loss)
    res.base_checksum_after = block_checksums(base)
    if res.base_checksum_after != before:
        changed = [k for k in before if before[k] != res.base_checksum_after[k]]
        raise FrozenViolationError(f"frozen base blocks changed: {changed[:5]}")
    return res


# --- toy egocentric tasks -----------------------------------------------------------

def facing_angle(frame) -> float:
    """Heading of a 15 x 3 pose from its hip line (left hip minus right hip, rotated -90 deg)."""
    frame = np.asarray(frame)
    hx, hy = frame[1, 0] - frame[2, 0], frame[1, 1] - frame[2, 1]
    return math.atan2(-hx, hy)


def nearest_bearing(angle: float) -> str:
    def gap(b):
        d = (angle - BEARINGS[b] + math.pi) % (2 * math.pi) - math.pi
        return abs(d)
    return min(BEARING_NAMES, key=gap)


def target_clip(task: str, bearing: str, frames: int = 4, fps: int = 30):
    from .corpus import generate_clip
    _, family, offset = TASKS[task]
    heading = (BEARINGS[bearing] + offset + math.pi) % (2 * math.pi) - math.pi
    return generate_clip(family, {"T": frames, "fps": fps, "heading": heading}, seed=0,
                         clip_id=f"{task}_{bearing}")


def make_vla_records(n: int, task: str, codecs, vocab, seed: int, frames: int = 4, size: int = 64):
    """``n`` scenes with balanced bearings and their target motion ids."""
    from .augment import motion_ids
    from .partvq import tokenize_sequence
    rng = make_rng(derive_seed(seed, "vla-records", task))
    prompt = vocab.encode_text(TASKS[task][0])
    targets = {b: motion_ids(tokenize_sequence(target_clip(task, b, frames).sequence, codecs).codes, vocab)
               for b in BEARING_NAMES}
    out = []
    for i in range(n):
        b = BEARING_NAMES[i % 4]
        dist = float(rng.uniform(0.5, 5.0))
        img = render_scene(b, dist, derive_seed(seed, "scene", i) % (2 ** 31), size)
        out.append(VlaRecord(img, list(prompt), list(targets[b])))
    return out


def classify_generation(ids, vocab, codecs) -> str | None:
    """Bearing implied by the first generated frame, or None when undecodable."""
    from .augment import codes_from_ids
    from .errors import HvlaError
    from .partvq import decode_codes
    try:
        codes = codes_from_ids(ids, vocab)
    except HvlaError:
        return None
    if len(codes) == 0:
        return None
    frame = decode_codes(codes[:1], codecs)[0]
    return nearest_bearing(facing_angle(frame))


def generate_with_vision(base, cfg, adapters, acfg, prompt_ids, image: SceneImage, vocab,
                         dcfg: tinylm.DecodeConfig | None = None):
    vis = encode_image(image.pixels, adapters, acfg)
    return tinylm.generate(base, cfg, prompt_ids, vocab, dcfg, adapters, vis)


def bearing_accuracy(base, cfg, adapters, acfg, records, vocab, codecs, max_frames: int = 1) -> float:
    dcfg = tinylm.DecodeConfig(max_len=6 * max_frames, grammar=True)
    hits = 0
    for r in records:
        ids = generate_with_vision(base, cfg, adapters, acfg, r.prompt_ids, r.image, vocab, dcfg)
        hits += classify_generation(ids, vocab, codecs) == r.image.bearing
    return hits / len(records)


def adapter_meta(acfg: AdapterConfig) -> dict:
    return asdict(acfg)
