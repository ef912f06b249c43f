import numpy as np
import pytest
from hypothesis import settings

from hvla import augment, corpus, partvq
from hvla.vocab import build_vocab, numeral_texts

settings.register_profile("ci", max_examples=40, deadline=None)
settings.load_profile("ci")


@pytest.fixture(scope="session")
def small_corpus():
    cfg = corpus.SynthConfig(clips=12, T_range=(20, 40))
    return [corpus.synth_clip(i, cfg, master_seed=0) for i in range(cfg.clips)]


@pytest.fixture(scope="session")
def codecs(small_corpus):
    res = partvq.train_vq(small_corpus, partvq.VqConfig(K=16, d=8, steps=300, batch_size=64, seed=0))
    return partvq.round_to_f32(res.codecs)


@pytest.fixture(scope="session")
def templates():
    return augment.default_templates()


@pytest.fixture(scope="session")
def vocab(templates):
    from hvla.visfuse import task_texts
    texts = augment.template_texts(templates) + corpus.phrase_bank_text() + task_texts() + numeral_texts()
    return build_vocab(texts, K=16, B=8)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
