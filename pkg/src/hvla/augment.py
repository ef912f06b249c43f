"""Template engine turning motion clips into prompt/answer training records.

Templates are written in a line-oriented DSL (see ``data/templates.hvt``)::

    TASK Track+Caption->Motion | ID 100 | PROMPT "Keep your root on <Track:pelvis> ..." | ANSWER Motion

The task name declares the slot types the prompt must use (left of ``->``)
and the type of the answer (right of ``->``).
"""

from __future__ import annotations

import json
import logging
import math
import re
import warnings
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .corpus import ClipRecord
from .errors import HvlaError, ShapeError, TemplateError, VocabError
from .motion import NUM_PARTS, PART_NAMES
from .partvq import TokenSequence, tokenize_sequence
from .rng import derive_seed, make_rng
from .vocab import UnifiedVocab

log = logging.getLogger(__name__)

SLOT_TYPES = {"Track": "Track", "Time": "Time", "Occlusion": "Occlusion", "State": "State",
              "State1": "State", "StateN": "State", "Caption": "Caption", "Motion": "Motion"}
SLOT_ARGS = {
    "Track": {"pelvis", "left_hand", "right_hand"},
    "Time": {"frames", "seconds"},
    "Occlusion": set(PART_NAMES),
    "Motion": {"prefix"},
}
OUTPUT_TYPES = {"Motion", "Track", "Time", "State", "Caption"}
TRACK_JOINTS = {"pelvis": 0, "left_hand": 13, "right_hand": 14}

_LINE_RE = re.compile(
    r'^TASK\s+(?P<task>\S+)\s*\|\s*ID\s+(?P<id>\d+)\s*\|\s*PROMPT\s+"(?P<prompt>(?:[^"\\]|\\.)*)"'
    r'\s*\|\s*ANSWER\s+(?P<answer>\S+)\s*$')
_SLOT_RE = re.compile(r"<([^<>]*)>")


class AugmentError(HvlaError, ValueError):
    """A clip does not satisfy a template's preconditions."""

    code = "augment-precondition"


@dataclass(frozen=True)
class Slot:
    name: str
    arg: str | None

    @property
    def type(self) -> str:
        return SLOT_TYPES[self.name]

    def __str__(self):
        return f"<{self.name}{':' + self.arg if self.arg else ''}>"


@dataclass(frozen=True)
class Template:
    task_type: str
    template_id: int
    prompt: str
    answer: str
    variant: int = 0
    line: int = 0

    @property
    def inputs(self) -> tuple:
        return tuple(self.task_type.split("->")[0].split("+"))

    @property
    def output(self) -> str:
        return self.task_type.split("->")[1]

    def pieces(self) -> list:
        """Alternating literal strings and :class:`Slot` objects."""
        out, pos = [], 0
        for m in _SLOT_RE.finditer(self.prompt):
            if m.start() > pos:
                out.append(self.prompt[pos:m.start()])
            name, _, arg = m.group(1).partition(":")
            out.append(Slot(name, arg or None))
            pos = m.end()
        if pos < len(self.prompt):
            out.append(self.prompt[pos:])
        return out

    def slots(self) -> list[Slot]:
        return [p for p in self.pieces() if isinstance(p, Slot)]

    @property
    def needs_caption(self) -> bool:
        return "Caption" in self.inputs or self.answer == "Caption"


def _answer_type(answer: str, lineno: int) -> str:
    kind, _, arg = answer.partition(":")
    if kind == "Motion" and not arg:
        return "Motion"
    if kind == "Occlusion" and not arg:
        return "Motion"
    if kind == "Track" and arg in SLOT_ARGS["Track"]:
        return "Track"
    if kind == "Time" and arg in SLOT_ARGS["Time"]:
        return "Time"
    if kind in ("State1", "StateN") and not arg:
        return "State"
    if kind == "Caption" and not arg:
        return "Caption"
    raise TemplateError(f"unknown answer artifact {answer!r}", lineno)


def validate_template(t: Template):
    lineno = t.line
    if "->" not in t.task_type:
        raise TemplateError(f"task {t.task_type!r} must look like Inputs->Output", lineno)
    inputs, output = t.inputs, t.output
    for i in inputs:
        if i not in {"Track", "Time", "Occlusion", "State", "Caption", "Motion"}:
            raise TemplateError(f"unknown input type {i!r} in task {t.task_type!r}", lineno)
    if output not in OUTPUT_TYPES:
        raise TemplateError(f"unknown output type {output!r}", lineno)
    used = set()
    for s in t.slots():
        if s.name not in SLOT_TYPES:
            raise TemplateError(f"unknown slot <{s.name}>", lineno)
        if s.arg is not None and s.arg not in SLOT_ARGS.get(s.name, set()):
            raise TemplateError(f"slot <{s.name}> does not accept argument {s.arg!r}", lineno)
        if s.type not in inputs:
            raise TemplateError(f"slot {s} is not declared by task {t.task_type!r}", lineno)
        used.add(s.type)
    missing = set(inputs) - used
    if missing:
        raise TemplateError(f"declared inputs {sorted(missing)} do not appear in the prompt", lineno)
    if _answer_type(t.answer, lineno) != output:
        raise TemplateError(f"answer {t.answer!r} does not produce a {output}", lineno)
    if t.answer == "Occlusion" and "Occlusion" not in used:
        raise TemplateError("answer Occlusion depends on an absent <Occlusion> slot", lineno)


def parse_templates_text(text: str, source: str = "<string>") -> list[Template]:
    templates, seen, per_task = [], {}, Counter()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        m = _LINE_RE.match(line)
        if not m:
            raise TemplateError(f"syntax error in {source}", lineno)
        tid = int(m.group("id"))
        if tid in seen:
            raise TemplateError(f"duplicate template id {tid} (first on line {seen[tid]})", lineno)
        seen[tid] = lineno
        task = m.group("task")
        t = Template(task, tid, m.group("prompt").replace('\\"', '"'), m.group("answer"),
                     variant=per_task[task], line=lineno)
        validate_template(t)
        per_task[task] += 1
        templates.append(t)
    if not templates:
        warnings.warn(f"no templates found in {source}", UserWarning, stacklevel=2)
    return templates


def parse_templates(path) -> list[Template]:
    path = Path(path)
    return parse_templates_text(path.read_text(encoding="utf-8"), str(path))


def default_templates_path() -> Path:
    return Path(str(resources.files("hvla.data").joinpath("templates.hvt")))


def default_templates() -> list[Template]:
    return parse_templates(default_templates_path())


def template_texts(templates) -> list[str]:
    return [t.prompt for t in templates]


# --- slot extraction --------------------------------------------------------

@dataclass(frozen=True)
class TrackQuantizer:
    """Uniform bins over a workspace box, relative to the clip's first pelvis x/y."""

    lo: tuple = (-5.0, -5.0, 0.0)
    hi: tuple = (5.0, 5.0, 2.0)

    def bins(self, points, B: int) -> np.ndarray:
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        u = (np.asarray(points) - lo) / (hi - lo)
        return np.clip(np.floor(u * B), 0, B - 1).astype(np.int64)


def extract_track(clip: ClipRecord, joint: str, stride: int, vocab: UnifiedVocab,
                  quantizer: TrackQuantizer = TrackQuantizer()) -> list[int]:
    """Waypoints every ``stride`` frames, three bin ids (x, y, z) each."""
    if joint not in TRACK_JOINTS:
        raise ValueError(f"track joint must be one of {sorted(TRACK_JOINTS)}, got {joint!r}")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    frames = clip.sequence.frames
    if frames.shape[0] == 0:
        raise ShapeError("empty clip")
    origin = np.array([frames[0, 0, 0], frames[0, 0, 1], 0.0])
    pts = frames[::stride, TRACK_JOINTS[joint]] - origin
    ids = []
    for wp in quantizer.bins(pts, vocab.B):
        ids.extend(vocab.track_token_id(a, int(b)) for a, b in enumerate(wp))
    return ids


def motion_ids(codes, vocab: UnifiedVocab) -> list[int]:
    """Flat id stream: five part codes then ``<frame>`` for every frame."""
    ids = []
    for row in np.asarray(codes):
        ids.extend(vocab.motion_token_id(p, int(c)) for p, c in enumerate(row))
        ids.append(vocab.frame)
    return ids


def codes_from_ids(ids, vocab: UnifiedVocab, K: int | None = None) -> np.ndarray:
    """Inverse of :func:`motion_ids`; raises VocabError on any grammar violation."""
    rows, cur = [], []
    for i in ids:
        if i == vocab.frame:
            if len(cur) != NUM_PARTS:
                raise VocabError(f"<frame> after {len(cur)} part codes")
            rows.append(cur)
            cur = []
            continue
        part, code = vocab.motion_token_inverse(int(i))
        if part != len(cur):
            raise VocabError(f"expected part {len(cur)}, got part {part}")
        cur.append(code)
    if cur:
        raise VocabError("trailing incomplete frame")
    if not rows:
        raise VocabError("no complete frames")
    return np.asarray(rows, dtype=np.int64)


def make_occlusion(tokens: TokenSequence, part: int, span: tuple, vocab: UnifiedVocab) -> list[int]:
    t0, t1 = span
    T = tokens.num_frames
    if not (0 <= part < NUM_PARTS):
        raise ValueError(f"part {part} out of range")
    if not (0 <= t0 < t1 <= T):
        raise ValueError(f"span [{t0}, {t1}) must be nonempty and inside [0, {T})")
    ids = motion_ids(tokens.codes, vocab)
    for t in range(t0, t1):
        ids[t * (NUM_PARTS + 1) + part] = vocab.mask
    return ids


def extract_state(tokens: TokenSequence, n: int, vocab: UnifiedVocab) -> list[int]:
    if not (0 <= n < tokens.num_frames):
        raise IndexError(f"frame {n} out of range [0, {tokens.num_frames})")
    return [vocab.motion_token_id(p, int(c)) for p, c in enumerate(tokens.codes[n])]


def duration_slots(clip: ClipRecord) -> dict:
    T = clip.sequence.num_frames
    return {"frames": str(T), "seconds": f"{T / clip.sequence.fps:.1f}"}


def sample_span(T: int, rng: np.random.Generator, min_frac: float = 0.25) -> tuple[int, int]:
    """Uniform span length over [ceil(min_frac*T), T], then uniform start."""
    lo = max(1, math.ceil(min_frac * T))
    length = int(rng.integers(lo, T + 1))
    start = int(rng.integers(0, T - length + 1))
    return start, start + length


# --- instantiation ----------------------------------------------------------

@dataclass
class QAPair:
    task: str
    template_id: int
    clip_id: str
    seed: int
    prompt_ids: list
    answer_ids: list
    prompt_text: str
    provenance: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"task": self.task, "template_id": self.template_id, "clip_id": self.clip_id,
                "seed": self.seed, "prompt_ids": list(map(int, self.prompt_ids)),
                "answer_ids": list(map(int, self.answer_ids)), "prompt_text": self.prompt_text,
                "provenance": self.provenance}

    @classmethod
    def from_json(cls, d: dict) -> "QAPair":
        return cls(d["task"], d.get("template_id", -1), d["clip_id"], d["seed"], list(d["prompt_ids"]),
                   list(d["answer_ids"]), d.get("prompt_text", ""), d.get("provenance", {}))


@dataclass
class AugmentConfig:
    track_stride: int = 10
    min_span_frac: float = 0.25
    prefix_frac: tuple = (0.25, 0.75)
    min_frames: int = 4
    quantizer: TrackQuantizer = field(default_factory=TrackQuantizer)


def instantiate(template: Template, clip: ClipRecord, codecs, vocab: UnifiedVocab, seed: int,
                tokens: TokenSequence | None = None, cfg: AugmentConfig | None = None) -> QAPair:
    """Expand every slot of ``template`` from ``clip``; deterministic in ``seed``."""
    cfg = cfg or AugmentConfig()
    T = clip.sequence.num_frames
    if template.needs_caption and not clip.caption:
        raise AugmentError(f"template {template.template_id} needs a caption; clip {clip.clip_id} has none")
    if T < cfg.min_frames:
        raise AugmentError(f"clip {clip.clip_id} has {T} frames; need {cfg.min_frames}")
    tokens = tokens if tokens is not None else tokenize_sequence(clip.sequence, codecs)
    rng = make_rng(seed)
    dur = duration_slots(clip)
    prompt_ids, text_parts, prov = [], [], {}
    occluded = None
    for piece in template.pieces():
        if isinstance(piece, str):
            prompt_ids.extend(vocab.encode_text(piece))
            text_parts.append(piece)
            continue
        name, arg = piece.name, piece.arg
        if name == "Occlusion":
            part_name = arg or PART_NAMES[int(rng.integers(NUM_PARTS))]
            part = PART_NAMES.index(part_name)
            span = sample_span(T, rng, cfg.min_span_frac)
            prompt_ids.extend(make_occlusion(tokens, part, span, vocab))
            occluded = (part, span)
            prov["occlusion"] = {"part": part_name, "span": list(span)}
            text_parts.append(f"[occluded {part_name} {span[0]}-{span[1]}]")
        elif name == "Track":
            joint = arg or sorted(TRACK_JOINTS)[int(rng.integers(len(TRACK_JOINTS)))]
            prompt_ids.extend(extract_track(clip, joint, cfg.track_stride, vocab, cfg.quantizer))
            prov["track"] = joint
            text_parts.append(f"[track {joint}]")
        elif name == "Time":
            unit = arg or "frames"
            prompt_ids.extend(vocab.encode_text(dur[unit]))
            prov["time"] = dur[unit]
            text_parts.append(dur[unit])
        elif name in ("State", "State1", "StateN"):
            n = {"State1": 0, "StateN": T - 1}.get(name)
            if n is None:
                n = int(rng.integers(T))
            prompt_ids.extend(extract_state(tokens, n, vocab))
            prov.setdefault("states", []).append(n)
            text_parts.append(f"[state {n}]")
        elif name == "Caption":
            prompt_ids.extend(vocab.encode_text(clip.caption))
            text_parts.append(clip.caption)
        elif name == "Motion":
            if arg == "prefix":
                lo, hi = cfg.prefix_frac
                n = int(np.clip(round(rng.uniform(lo, hi) * T), 1, T - 1))
                prompt_ids.extend(motion_ids(tokens.codes[:n], vocab))
                prov["prefix"] = n
                text_parts.append(f"[motion 0-{n}]")
            else:
                prompt_ids.extend(motion_ids(tokens.codes, vocab))
                text_parts.append(f"[motion 0-{T}]")
    answer = template.answer
    kind, _, arg = answer.partition(":")
    if kind == "Motion":
        answer_ids = motion_ids(tokens.codes, vocab)
    elif kind == "Occlusion":
        part, (t0, t1) = occluded
        answer_ids = [vocab.motion_token_id(part, int(c)) for c in tokens.codes[t0:t1, part]]
    elif kind == "Track":
        answer_ids = extract_track(clip, arg, cfg.track_stride, vocab, cfg.quantizer)
    elif kind == "Time":
        answer_ids = vocab.encode_text(dur[arg])
    elif kind == "State1":
        answer_ids = extract_state(tokens, 0, vocab)
    elif kind == "StateN":
        answer_ids = extract_state(tokens, T - 1, vocab)
    elif kind == "Caption":
        answer_ids = vocab.encode_text(clip.caption)
    else:  # pragma: no cover - rejected at parse time
        raise TemplateError(f"unknown answer {answer!r}")
    if not answer_ids:
        raise AugmentError("empty answer")
    return QAPair(template.task_type, template.template_id, clip.clip_id, int(seed), prompt_ids,
                  answer_ids, "".join(text_parts), prov)


# --- dataset ----------------------------------------------------------------

@dataclass
class DatasetStats:
    pairs: int = 0
    per_task: dict = field(default_factory=dict)
    skipped: dict = field(default_factory=dict)
    token_kinds: dict = field(default_factory=dict)
    answer_length: dict = field(default_factory=dict)

    def to_dict(self):
        return {"pairs": self.pairs, "per_task": dict(sorted(self.per_task.items())),
                "skipped": dict(sorted(self.skipped.items())),
                "token_kinds": dict(sorted(self.token_kinds.items())),
                "answer_length": self.answer_length}


def build_dataset(clips, templates, codecs, vocab: UnifiedVocab, quota: int, master_seed: int,
                  cfg: AugmentConfig | None = None, task_filter=None):
    """Sample up to ``quota`` templates per clip and instantiate them.

    Clips are visited in clip_id order and every (clip, template) draw uses a
    seed derived from ``(master_seed, clip_id, template_id)``, so the output
    is independent of how the work is split.
    """
    cfg = cfg or AugmentConfig()
    pool = [t for t in templates if task_filter is None or t.task_type in task_filter]
    pairs, stats = [], DatasetStats()
    per_task, skipped, kinds = Counter(), Counter(), Counter()
    for clip in sorted(clips, key=lambda c: c.clip_id):
        rng = make_rng(derive_seed(master_seed, "clip", clip.clip_id))
        k = min(quota, len(pool))
        chosen = [pool[i] for i in rng.choice(len(pool), size=k, replace=False)] if k else []
        tokens = tokenize_sequence(clip.sequence, codecs)
        for t in chosen:
            seed = derive_seed(master_seed, clip.clip_id, t.template_id) % (2 ** 31)
            try:
                qa = instantiate(t, clip, codecs, vocab, seed, tokens, cfg)
            except (AugmentError, VocabError) as exc:
                skipped[f"{t.task_type}:{type(exc).__name__}"] += 1
                log.debug("skip %s/%s: %s", clip.clip_id, t.template_id, exc)
                continue
            pairs.append(qa)
            per_task[t.task_type] += 1
            for i in qa.prompt_ids + qa.answer_ids:
                kinds[vocab.kind(i)] += 1
    stats.pairs = len(pairs)
    stats.per_task, stats.skipped, stats.token_kinds = dict(per_task), dict(skipped), dict(kinds)
    if pairs:
        lens = [len(p.answer_ids) for p in pairs]
        stats.answer_length = {"min": min(lens), "max": max(lens), "mean": float(np.mean(lens))}
    if skipped:
        log.info("skipped %d (clip, template) draws", sum(skipped.values()))
    return pairs, stats


def write_jsonl(pairs, path) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for qa in pairs:
            fh.write(json.dumps(qa.to_json(), sort_keys=True) + "\n")
    return path


def read_jsonl(path) -> list[QAPair]:
    with open(path, encoding="utf-8") as fh:
        return [QAPair.from_json(json.loads(line)) for line in fh if line.strip()]
