"""Procedural motion corpus: clip families, degradation, clip files and statistics.

Clips are produced by driving a hidden-joint human skeleton (spine, chest and
shoulders are not exported) through forward kinematics and keeping the 15
canonical joints.  Coordinates are rounded to float32 so that the binary
clip format round-trips bit-exactly.

Binary clip layout (little-endian)::

    b"HVLA" | u16 version | u16 fps | u32 T | T*15*3 f32 | u32 n | n bytes JSON metadata
"""

from __future__ import annotations

import json
import logging
import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import BadMagicError, FormatError, ShapeError, TruncatedError, VersionMismatchError
from .motion import JOINT_NAMES, MotionSequence
from .retarget import forward_kinematics, load_builtin
from .rng import derive_seed, make_rng

log = logging.getLogger(__name__)

FAMILIES = ("walk", "wave_arm", "squat", "kick", "turn", "idle")
TIERS = ("low", "high")

MAGIC = b"HVLA"
VERSION = 1
_HEADER = struct.Struct("<4sHHI")

# name -> (default, lo, hi); "side" is categorical.
COMMON_PARAMS = {
    "T": (60, 1, 3000),
    "fps": (30, 1, 240),
    "heading": (0.0, -math.pi, math.pi),
}
FAMILY_PARAMS = {
    "walk": {"speed": (1.0, 0.0, 2.0), "freq": (1.0, 0.2, 1.2), "amplitude": (0.35, 0.0, 0.5)},
    "wave_arm": {"freq": (1.0, 0.2, 1.5), "amplitude": (0.5, 0.0, 0.8)},
    "squat": {"freq": (0.5, 0.1, 1.0), "amplitude": (0.6, 0.0, 1.0)},
    "kick": {"freq": (0.6, 0.1, 1.0), "amplitude": (0.9, 0.0, 1.2)},
    "turn": {"angle": (math.pi / 2, -math.pi, math.pi)},
    "idle": {},
}
SIDED = ("wave_arm", "kick")

PHRASES = {
    "walk": ("the person walks forward", "a person walks straight ahead",
             "someone walks at a steady pace", "the person takes steps forward"),
    "wave_arm": ("the person waves the {side} arm", "a person raises the {side} arm and waves",
                 "someone waves with the {side} hand", "the person lifts the {side} arm up and down"),
    "squat": ("the person squats down and stands up", "a person does a squat",
              "someone bends the knees into a squat", "the person crouches and rises"),
    "kick": ("the person kicks with the {side} leg", "a person kicks forward with the {side} foot",
             "someone swings the {side} leg in a kick", "the person lifts the {side} leg to kick"),
    "turn": ("the person turns to the {side}", "a person turns in place",
             "someone rotates the body while standing", "the person turns around to the {side}"),
    # variant index is seed % 4
    "idle": ("a person stays in place", "someone stands without moving",
             "the person waits quietly", "the person stands still"),
}


def phrase_bank_text() -> list[str]:
    """Every caption a generator can emit (used to build the vocabulary)."""
    return sorted({p.format(side=side) for bank in PHRASES.values() for p in bank
                   for side in ("left", "right")})


@dataclass
class ClipRecord:
    clip_id: str
    sequence: MotionSequence
    caption: str | None
    quality_tier: str
    family: str
    seed: int
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.quality_tier not in TIERS:
            raise ValueError(f"quality_tier must be one of {TIERS}, got {self.quality_tier!r}")

    def __eq__(self, other):
        if not isinstance(other, ClipRecord):
            return NotImplemented
        return (self.clip_id == other.clip_id and self.sequence == other.sequence
                and self.caption == other.caption and self.quality_tier == other.quality_tier
                and self.family == other.family and self.seed == other.seed)

    __hash__ = None


_HUMAN = None


def _human():
    global _HUMAN
    if _HUMAN is None:
        _HUMAN = load_builtin("human15")
    return _HUMAN


def resolve_params(family: str, params: dict | None) -> dict:
    if family not in FAMILY_PARAMS:
        raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")
    params = dict(params or {})
    ranges = {**COMMON_PARAMS, **FAMILY_PARAMS[family]}
    out = {}
    for name, (default, lo, hi) in ranges.items():
        v = params.pop(name, default)
        if not (lo <= v <= hi):
            raise ValueError(f"{family}: {name}={v} outside [{lo}, {hi}]")
        out[name] = v
    if family in SIDED or family == "turn":
        side = params.pop("side", None)
        if family == "turn":
            side = "left" if out["angle"] >= 0 else "right"
        elif side is None:
            side = "left"
        if side not in ("left", "right"):
            raise ValueError(f"{family}: side must be left or right, got {side!r}")
        out["side"] = side
    if params:
        raise ValueError(f"{family}: unknown params {sorted(params)}")
    out["T"] = int(out["T"])
    out["fps"] = int(out["fps"])
    return out


class _PoseBuilder:
    """Collect per-frame joint angles by (joint name, axis index)."""

    def __init__(self, skel, T):
        self.skel = skel
        self.pose = np.zeros((T, skel.num_params))
        self._col = {}
        for d, (j, a) in enumerate(zip(skel.dof_joint, skel.dof_axis)):
            self._col[(skel.joints[j].name, a)] = 3 + d

    def set(self, joint, axis, values):
        self.pose[:, self._col[(joint, axis)]] = values

    def add(self, joint, axis, values):
        self.pose[:, self._col[(joint, axis)]] += values


_STAND_Z = 0.94
_SIGN = {"left": 1.0, "right": -1.0}


def _relaxed_arms(b):
    for side, s in _SIGN.items():
        b.set(f"{side}_shoulder", "x", 0.12 * s)
        b.set(f"{side}_elbow", "y", -0.25)


def _angles(family: str, p: dict):
    T, fps = p["T"], p["fps"]
    t = np.arange(1, T + 1) / fps
    b = _PoseBuilder(_human(), T)
    root = np.zeros((T, 3))
    root[:, 2] = _STAND_Z
    yaw = np.full(T, p["heading"])
    _relaxed_arms(b)
    if family == "walk":
        ph = 2 * math.pi * p["freq"] * t
        a = p["amplitude"]
        direction = np.array([math.cos(p["heading"]), math.sin(p["heading"])])
        root[:, :2] = (p["speed"] * t)[:, None] * direction
        root[:, 2] += 0.015 * (np.cos(2 * ph) - 1.0)
        b.set("left_hip", "y", -a * np.sin(ph))
        b.set("right_hip", "y", a * np.sin(ph))
        b.set("left_knee", "y", 0.6 * a * (1 - np.cos(ph)))
        b.set("right_knee", "y", 0.6 * a * (1 + np.cos(ph)))
        b.set("left_shoulder", "y", 0.7 * a * np.sin(ph))
        b.set("right_shoulder", "y", -0.7 * a * np.sin(ph))
    elif family == "wave_arm":
        s = _SIGN[p["side"]]
        ph = 2 * math.pi * p["freq"] * t
        b.set(f"{p['side']}_shoulder", "x", s * (math.pi / 2 + 0.4))
        b.set(f"{p['side']}_elbow", "y", -(0.9 + p["amplitude"] * np.sin(ph)))
    elif family == "squat":
        ph = 2 * math.pi * p["freq"] * t
        alpha = p["amplitude"] * 0.5 * (1 - np.cos(ph))
        for side in _SIGN:
            b.set(f"{side}_hip", "y", -alpha)
            b.set(f"{side}_knee", "y", 2 * alpha)
            b.set(f"{side}_ankle", "y", -alpha)
            b.add(f"{side}_shoulder", "y", -1.2 * alpha)
        root[:, 2] = 0.06 + 0.82 * np.cos(alpha) + 0.06
    elif family == "kick":
        side = p["side"]
        ph = 2 * math.pi * p["freq"] * t
        s_ = 0.5 * (1 - np.cos(ph))
        b.set(f"{side}_hip", "y", -p["amplitude"] * s_)
        b.set(f"{side}_knee", "y", 0.5 * p["amplitude"] * np.sin(0.5 * ph) ** 2 * (1 - s_))
        other = "right" if side == "left" else "left"
        b.add(f"{other}_shoulder", "y", -0.4 * p["amplitude"] * s_)
    elif family == "turn":
        turn_time = max(abs(p["angle"]) / 1.2, 1e-9)
        u = np.clip(t / turn_time, 0.0, 1.0)
        yaw = yaw + p["angle"] * u * u * (3 - 2 * u)
        b.set("spine", "z", 0.15 * p["angle"] * np.sin(math.pi * u))
    b.pose[:, :3] = root
    b.set("pelvis", "z", yaw)
    return b.pose


def generate_clip(family: str, params: dict | None = None, seed: int = 0, clip_id: str | None = None) -> ClipRecord:
    """Deterministic clip for ``(family, params, seed)``.

    Samples run at ``t = (i + 1) / fps`` for frame ``i``, so a walk starting
    at the origin has pelvis x equal to ``speed * T / fps`` on its last frame.
    """
    p = resolve_params(family, params)
    skel = _human()
    world = forward_kinematics(skel, _angles(family, p))
    idx = [skel.index[n] for n in JOINT_NAMES]
    frames = world[:, idx, :].astype(np.float32).astype(np.float64)
    bank = PHRASES[family]
    caption = bank[seed % len(bank)].format(side=p.get("side", "left"))
    return ClipRecord(clip_id or f"{family}_{seed}", MotionSequence(p["fps"], frames), caption,
                      "high", family, int(seed), p)


def degrade_clip(clip: ClipRecord, noise_std: float, seed: int) -> ClipRecord:
    """Zero-mean Gaussian noise per coordinate; the caption is dropped and tier set to low."""
    if noise_std < 0:
        raise ValueError(f"noise_std must be >= 0, got {noise_std}")
    frames = clip.sequence.frames
    if noise_std > 0:
        frames = frames + make_rng(seed).normal(0.0, noise_std, size=frames.shape)
    frames = np.asarray(frames, dtype=np.float32).astype(np.float64)
    return replace(clip, sequence=MotionSequence(clip.sequence.fps, frames), caption=None,
                   quality_tier="low", params={**clip.params, "noise_std": noise_std, "noise_seed": seed})


def _metadata(clip: ClipRecord) -> dict:
    meta = {"clip_id": clip.clip_id, "quality_tier": clip.quality_tier, "family": clip.family,
            "seed": clip.seed, "params": clip.params}
    if clip.caption is not None:
        meta["caption"] = clip.caption
    return meta


def _from_meta(meta: dict, seq: MotionSequence) -> ClipRecord:
    return ClipRecord(meta["clip_id"], seq, meta.get("caption"), meta["quality_tier"],
                      meta.get("family", "unknown"), int(meta.get("seed", 0)), meta.get("params", {}))


def clip_to_bytes(clip: ClipRecord) -> bytes:
    frames = clip.sequence.frames
    meta = json.dumps(_metadata(clip), sort_keys=True).encode("utf-8")
    return b"".join([
        _HEADER.pack(MAGIC, VERSION, clip.sequence.fps, frames.shape[0]),
        frames.astype("<f4").tobytes(),
        struct.pack("<I", len(meta)),
        meta,
    ])


def clip_from_bytes(data: bytes) -> ClipRecord:
    if len(data) < _HEADER.size:
        raise TruncatedError("file shorter than header")
    magic, version, fps, T = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise VersionMismatchError(f"clip format version {version}, reader supports {VERSION}")
    n = T * 15 * 3 * 4
    end = _HEADER.size + n
    if len(data) < end + 4:
        raise TruncatedError(f"payload truncated: need {end + 4} bytes, have {len(data)}")
    (mlen,) = struct.unpack_from("<I", data, end)
    if len(data) < end + 4 + mlen:
        raise TruncatedError("metadata truncated")
    frames = np.frombuffer(data, dtype="<f4", count=T * 45, offset=_HEADER.size).reshape(T, 15, 3)
    meta = json.loads(data[end + 4:end + 4 + mlen].decode("utf-8"))
    return _from_meta(meta, MotionSequence(fps, frames.astype(np.float64)))


def clip_to_json(clip: ClipRecord) -> dict:
    d = _metadata(clip)
    d.update(fps=clip.sequence.fps, joint_names=list(JOINT_NAMES),
             frames=clip.sequence.frames.tolist())
    return d


def clip_from_json(d: dict) -> ClipRecord:
    if list(d.get("joint_names", [])) != list(JOINT_NAMES):
        raise FormatError("joint_names do not match the canonical 15-joint list")
    try:
        seq = MotionSequence(int(d["fps"]), np.asarray(d["frames"], dtype=np.float64))
    except (KeyError, ValueError, ShapeError) as exc:
        raise FormatError(f"malformed clip JSON: {exc}") from exc
    return _from_meta(d, seq)


def save_clip(clip: ClipRecord, path, fmt: str | None = None) -> Path:
    path = Path(path)
    fmt = fmt or ("json" if path.suffix == ".json" else "binary")
    if fmt == "binary":
        path.write_bytes(clip_to_bytes(clip))
    elif fmt == "json":
        path.write_text(json.dumps(clip_to_json(clip)))
    else:
        raise ValueError(f"unknown clip format {fmt!r}")
    return path


def load_clip(path, fmt: str | None = None) -> ClipRecord:
    path = Path(path)
    fmt = fmt or ("json" if path.suffix == ".json" else "binary")
    if fmt == "binary":
        return clip_from_bytes(path.read_bytes())
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc
    return clip_from_json(d)


CLIP_SUFFIXES = (".hvla", ".json")
_NOT_CLIPS = {"generator.json", "manifest.json", "resolved_config.json", "report.json"}


def list_clip_files(directory) -> list[Path]:
    directory = Path(directory)
    return sorted(p for p in directory.iterdir()
                  if p.suffix in CLIP_SUFFIXES and p.is_file() and p.name not in _NOT_CLIPS)


def load_corpus(directory) -> list[ClipRecord]:
    """Every readable clip in ``directory``, sorted by clip_id."""
    clips = [load_clip(p) for p in list_clip_files(directory)]
    return sorted(clips, key=lambda c: c.clip_id)


@dataclass
class TierCounts:
    clips: int = 0
    frames: int = 0
    hours: float = 0.0

    def add(self, frames: int, fps: int):
        self.clips += 1
        self.frames += frames
        self.hours += frames / (fps * 3600.0)


@dataclass
class CorpusManifest:
    tiers: dict
    total: TierCounts
    errors: list
    generator: dict = field(default_factory=dict)
    master_seed: int | None = None

    def to_dict(self) -> dict:
        row = lambda c: {"clips": c.clips, "frames": c.frames, "hours": c.hours}
        return {"tiers": {k: row(v) for k, v in self.tiers.items()}, "total": row(self.total),
                "errors": self.errors, "generator": self.generator, "master_seed": self.master_seed}


def corpus_stats(directory) -> CorpusManifest:
    """Per-tier clip/frame/hour totals; unreadable files are reported, not fatal."""
    directory = Path(directory)
    tiers = {t: TierCounts() for t in TIERS}
    total = TierCounts()
    errors = []
    for path in list_clip_files(directory):
        try:
            clip = load_clip(path)
        except (FormatError, OSError, KeyError, ValueError) as exc:
            errors.append({"file": path.name, "error": f"{type(exc).__name__}: {exc}"})
            continue
        tiers[clip.quality_tier].add(clip.sequence.num_frames, clip.sequence.fps)
        total.add(clip.sequence.num_frames, clip.sequence.fps)
    generator, seed = {}, None
    gen_file = directory / "generator.json"
    if gen_file.exists():
        info = json.loads(gen_file.read_text())
        generator, seed = info.get("config", {}), info.get("master_seed")
    return CorpusManifest(tiers, total, errors, generator, seed)


def sample_params(family: str, rng: np.random.Generator, T_range=(40, 120), fps: int = 30) -> dict:
    """Random in-range parameters for ``family``."""
    p = {"T": int(rng.integers(T_range[0], T_range[1] + 1)), "fps": fps,
         "heading": float(rng.uniform(-math.pi, math.pi))}
    for name, (_, lo, hi) in FAMILY_PARAMS[family].items():
        p[name] = float(rng.uniform(lo, hi))
    if family in SIDED:
        p["side"] = ("left", "right")[int(rng.integers(2))]
    return p


@dataclass
class SynthConfig:
    clips: int = 20
    families: tuple = FAMILIES
    T_range: tuple = (40, 120)
    fps: int = 30
    low_fraction: float = 0.5
    noise_std: float = 0.01
    fmt: str = "binary"


def synth_clip(index: int, cfg: SynthConfig, master_seed: int) -> ClipRecord:
    """Clip ``index`` of a corpus; depends only on (index, cfg, master_seed)."""
    seed = derive_seed(master_seed, "clip", index) % (2 ** 31)
    rng = make_rng(seed)
    family = cfg.families[int(rng.integers(len(cfg.families)))]
    params = sample_params(family, rng, tuple(cfg.T_range), cfg.fps)
    clip = generate_clip(family, params, seed, clip_id=f"clip{index:05d}")
    if rng.uniform() < cfg.low_fraction:
        clip = degrade_clip(clip, cfg.noise_std, derive_seed(seed, "noise") % (2 ** 31))
    return clip


def write_corpus(directory, cfg: SynthConfig, master_seed: int) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    suffix = ".hvla" if cfg.fmt == "binary" else ".json"
    paths = []
    for i in range(cfg.clips):
        clip = synth_clip(i, cfg, master_seed)
        paths.append(save_clip(clip, directory / f"{clip.clip_id}{suffix}", cfg.fmt))
    cfg_dict = {k: list(v) if isinstance(v, tuple) else v for k, v in vars(cfg).items()}
    (directory / "generator.json").write_text(
        json.dumps({"config": cfg_dict, "master_seed": master_seed}, indent=2, sort_keys=True))
    return paths
