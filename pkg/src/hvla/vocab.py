"""Unified id space for words, body-part motion codes, track bins and specials.

Layout, with L language words, K codes per part and B bins per axis::

    [0, L)                 words (sorted)
    [L, L + 5K)            motion codes, part-major
    [L + 5K, L + 5K + 3B)  track bins, axis-major (x, y, z)
    then                   <bos> <eos> <sep> <mask> <frame>
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import FormatError, VocabError
from .motion import NUM_PARTS

SPECIALS = ("<bos>", "<eos>", "<sep>", "<mask>", "<frame>")
AXES = ("x", "y", "z")

_TOKEN_RE = re.compile(r"\d+(?:\.\d+)?|[a-z_']+|[^\sa-z0-9_']")
_SLOT_RE = re.compile(r"<\s*[A-Za-z][A-Za-z0-9_]*(?::[A-Za-z0-9_]+)?\s*>")


def tokenize_words(text: str) -> list[str]:
    """Lowercase, then split into numbers, words and single punctuation marks."""
    return _TOKEN_RE.findall(text.lower())


def normalize_text(text: str) -> str:
    return " ".join(tokenize_words(text))


@dataclass
class UnifiedVocab:
    words: tuple
    K: int
    B: int
    _index: dict = field(init=False, repr=False)

    def __post_init__(self):
        self.words = tuple(self.words)
        self._index = {w: i for i, w in enumerate(self.words)}
        if len(self._index) != len(self.words):
            raise VocabError("duplicate words in language table")

    @property
    def L(self) -> int:
        return len(self.words)

    @property
    def motion_base(self) -> int:
        return self.L

    @property
    def track_base(self) -> int:
        return self.L + NUM_PARTS * self.K

    @property
    def special_base(self) -> int:
        return self.track_base + 3 * self.B

    @property
    def size(self) -> int:
        return self.special_base + len(SPECIALS)

    def special(self, name: str) -> int:
        return self.special_base + SPECIALS.index(name)

    @property
    def bos(self):
        return self.special("<bos>")

    @property
    def eos(self):
        return self.special("<eos>")

    @property
    def sep(self):
        return self.special("<sep>")

    @property
    def mask(self):
        return self.special("<mask>")

    @property
    def frame(self):
        return self.special("<frame>")

    # --- motion / track ids -------------------------------------------------
    def motion_token_id(self, part: int, code: int) -> int:
        if not (0 <= part < NUM_PARTS):
            raise VocabError(f"part {part} out of range [0, {NUM_PARTS})")
        if not (0 <= code < self.K):
            raise VocabError(f"code {code} out of range [0, {self.K})")
        return self.motion_base + part * self.K + code

    def motion_token_inverse(self, token_id: int) -> tuple[int, int]:
        if not self.is_motion(token_id):
            raise VocabError(f"id {token_id} is not a motion token")
        off = token_id - self.motion_base
        return off // self.K, off % self.K

    def track_token_id(self, axis: int, bin_: int) -> int:
        if not (0 <= axis < 3):
            raise VocabError(f"axis {axis} out of range [0, 3)")
        if not (0 <= bin_ < self.B):
            raise VocabError(f"bin {bin_} out of range [0, {self.B})")
        return self.track_base + axis * self.B + bin_

    def track_token_inverse(self, token_id: int) -> tuple[int, int]:
        if not self.is_track(token_id):
            raise VocabError(f"id {token_id} is not a track token")
        off = token_id - self.track_base
        return off // self.B, off % self.B

    def is_word(self, i) -> bool:
        return 0 <= i < self.L

    def is_motion(self, i) -> bool:
        return self.motion_base <= i < self.track_base

    def is_track(self, i) -> bool:
        return self.track_base <= i < self.special_base

    def is_special(self, i) -> bool:
        return self.special_base <= i < self.size

    def kind(self, i: int) -> str:
        if self.is_word(i):
            return "word"
        if self.is_motion(i):
            return "motion"
        if self.is_track(i):
            return "track"
        if self.is_special(i):
            return "special"
        raise VocabError(f"id {i} outside vocabulary of size {self.size}")

    def surface(self, i: int) -> str:
        kind = self.kind(i)
        if kind == "word":
            return self.words[i]
        if kind == "motion":
            p, c = self.motion_token_inverse(i)
            return f"m{p}:{c}"
        if kind == "track":
            a, b = self.track_token_inverse(i)
            return f"t{AXES[a]}:{b}"
        return SPECIALS[i - self.special_base]

    # --- text ---------------------------------------------------------------
    def encode_text(self, text: str) -> list[int]:
        if _SLOT_RE.search(text):
            raise VocabError(f"unexpanded slot placeholder in text: {text!r}")
        ids = []
        for w in tokenize_words(text):
            if w not in self._index:
                raise VocabError(f"unknown word {w!r}")
            ids.append(self._index[w])
        return ids

    def decode_text(self, ids) -> str:
        out = []
        for i in ids:
            if not self.is_word(i):
                raise VocabError(f"id {i} is not in the language range [0, {self.L})")
            out.append(self.words[i])
        return " ".join(out)

    def render(self, ids) -> str:
        """Surface forms of arbitrary ids, space-joined (for logs)."""
        return " ".join(self.surface(int(i)) for i in ids)

    # --- persistence --------------------------------------------------------
    def to_text(self) -> str:
        lines = [f"{self.surface(i)}\t{i}\t{self.kind(i)}" for i in range(self.size)]
        return "\n".join(lines) + "\n"

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_text(), encoding="utf-8")
        return path

    @classmethod
    def load(cls, path) -> "UnifiedVocab":
        words, n_motion, n_track, specials = [], 0, 0, []
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            parts = line.split("\t")
            if len(parts) != 3:
                raise FormatError(f"vocab line {lineno}: expected 3 tab-separated fields")
            surface, idx, kind = parts
            expected = len(words) + n_motion + n_track + len(specials)
            if int(idx) != expected:
                raise FormatError(f"vocab line {lineno}: id {idx} out of sequence (expected {expected})")
            if kind == "word":
                words.append(surface)
            elif kind == "motion":
                n_motion += 1
            elif kind == "track":
                n_track += 1
            elif kind == "special":
                specials.append(surface)
            else:
                raise FormatError(f"vocab line {lineno}: unknown kind {kind!r}")
        if tuple(specials) != SPECIALS or n_motion % NUM_PARTS or n_track % 3:
            raise FormatError("vocab file does not follow the unified layout")
        return cls(tuple(words), n_motion // NUM_PARTS, n_track // 3)


def build_vocab(texts, K: int, B: int) -> UnifiedVocab:
    """Closed word-level vocabulary from every text that may be encoded later."""
    words = set()
    for t in texts:
        words.update(tokenize_words(_SLOT_RE.sub(" ", t)))
    if not words:
        raise VocabError("cannot build a vocabulary from an empty corpus")
    if K < 1 or B < 1:
        raise VocabError("K and B must be positive")
    return UnifiedVocab(tuple(sorted(words)), K, B)


def numeral_texts(max_frames: int = 240, max_seconds: float = 10.0) -> list[str]:
    """Integer frame counts and one-decimal second counts used by <Time> slots."""
    out = [str(i) for i in range(max_frames + 1)]
    out += [f"{i / 10:.1f}" for i in range(int(round(max_seconds * 10)) + 1)]
    return out
