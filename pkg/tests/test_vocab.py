import pytest
from hypothesis import given, strategies as st

from hvla.errors import FormatError, VocabError
from hvla.vocab import SPECIALS, UnifiedVocab, build_vocab, normalize_text, numeral_texts, tokenize_words


def test_layout_arithmetic():
    v = build_vocab(["raise left arm"], K=16, B=8)
    assert v.L == 3
    assert (v.motion_base, v.track_base) == (3, 83)
    assert v.special_base == 107 and v.size == 107 + len(SPECIALS)
    assert v.motion_token_id(0, 0) == 3
    assert [v.surface(v.special(s)) for s in SPECIALS] == list(SPECIALS)


def test_build_is_deterministic():
    texts = ["walk to the door", "Turn left, then stop!"]
    a, b = build_vocab(texts, 8, 4), build_vocab(list(reversed(texts)), 8, 4)
    assert a.to_text() == b.to_text()


def test_empty_corpus_rejected():
    with pytest.raises(VocabError):
        build_vocab([], 4, 4)
    with pytest.raises(VocabError):
        build_vocab(["<Track>"], 4, 4)


def test_text_roundtrip_and_errors():
    s = "please move your center position"
    v = build_vocab([s], 4, 4)
    assert v.decode_text(v.encode_text(s)) == normalize_text(s)
    with pytest.raises(VocabError):
        v.encode_text("please dance")
    with pytest.raises(VocabError):
        v.decode_text([v.motion_token_id(0, 0)])
    with pytest.raises(VocabError):
        v.encode_text("please move <Track>")


def test_tokenizer_splits_numbers_and_punctuation():
    assert tokenize_words("Act for 2.0 seconds, then stop.") == ["act", "for", "2.0", "seconds", ",", "then", "stop", "."]
    assert "60" in numeral_texts() and "2.0" in numeral_texts()


def test_out_of_range_ids():
    v = build_vocab(["a"], 4, 4)
    for bad in ((5, 0), (0, 4), (-1, 0)):
        with pytest.raises(VocabError):
            v.motion_token_id(*bad)
    with pytest.raises(VocabError):
        v.track_token_id(3, 0)
    with pytest.raises(VocabError):
        v.kind(v.size)


def test_exhaustive_bijection():
    v = build_vocab(["one two three"], K=32, B=16)
    seen = set()
    for p in range(5):
        for c in range(32):
            i = v.motion_token_id(p, c)
            assert v.motion_token_inverse(i) == (p, c)
            seen.add(i)
    for a in range(3):
        for b in range(16):
            i = v.track_token_id(a, b)
            assert v.track_token_inverse(i) == (a, b)
            seen.add(i)
    seen.update(range(v.L))
    seen.update(v.special(s) for s in SPECIALS)
    assert seen == set(range(v.size))
    assert len({v.surface(i) for i in range(v.size)}) == v.size


@given(st.lists(st.sampled_from(["go", "left", "right", "stop", "now", "2", "."]), min_size=1, max_size=8))
def test_encode_decode_property(words):
    v = build_vocab(["go left right stop now 2 ."], 4, 4)
    s = " ".join(words)
    assert v.decode_text(v.encode_text(s)) == normalize_text(s)


def test_file_roundtrip(tmp_path):
    v = build_vocab(["raise left arm"], 16, 8)
    path = v.save(tmp_path / "v.tsv")
    back = UnifiedVocab.load(path)
    assert back.to_text() == v.to_text()
    lines = path.read_text().splitlines()
    assert lines[3] == "m0:0\t3\tmotion"
    path.write_text("\n".join(lines[:3] + lines[4:]) + "\n")
    with pytest.raises(FormatError):
        UnifiedVocab.load(path)
