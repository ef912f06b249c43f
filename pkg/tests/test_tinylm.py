import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hvla import augment, corpus, partvq, tinylm
from hvla.errors import BadMagicError, ShapeError, TruncatedError
from hvla.optim import lr_at, warmup_steps
from hvla.vocab import build_vocab


def tiny_cfg(V=13, tie=False, seed=1):
    return tinylm.ModelConfig(vocab_size=V, layers=2, heads=2, dim=8, ff_dim=12, context=24, seed=seed,
                              tie_embeddings=tie)


def noisy_params(cfg, seed=0, scale=0.3):
    rng = np.random.default_rng(seed)
    p = tinylm.init_params(cfg)
    return {k: v + rng.normal(0, scale, v.shape) for k, v in p.items()}


def test_config_validation():
    with pytest.raises(ValueError):
        tinylm.ModelConfig(vocab_size=10, dim=10, heads=4)
    with pytest.raises(ValueError):
        tinylm.TrainConfig(warmup_ratio=1.0)


@settings(max_examples=15)
@given(st.integers(0, 10_000), st.integers(1, 11))
def test_causality(seed, j):
    cfg = tiny_cfg()
    p = noisy_params(cfg, seed)
    rng = np.random.default_rng(seed)
    ids = rng.integers(0, cfg.vocab_size, 12)
    a = tinylm.forward(p, ids, cfg)
    ids2 = ids.copy()
    ids2[j] = (ids2[j] + 1) % cfg.vocab_size
    b = tinylm.forward(p, ids2, cfg)
    assert np.array_equal(a[:j], b[:j])
    assert not np.array_equal(a[j:], b[j:])


def test_zero_params_give_uniform_logits_and_ln_v_loss():
    cfg = tinylm.ModelConfig(vocab_size=100, layers=2, heads=4, dim=16, ff_dim=32, context=32)
    p = tinylm.init_params(cfg, zero=True)
    logits = tinylm.forward(p, np.arange(10), cfg)
    assert np.all(logits == logits[:, :1])
    rec = (np.arange(9), np.arange(1, 10), np.r_[np.zeros(4), np.ones(5)])
    loss, *_ = tinylm.nll_loss(p, cfg, [rec], want_grads=False)
    assert abs(loss - math.log(100)) < 1e-4


def test_softmax_rows_normalised():
    cfg = tiny_cfg()
    logits = tinylm.forward(noisy_params(cfg, 3, 2.0), np.arange(10), cfg)
    np.testing.assert_allclose(tinylm.softmax(logits).sum(-1), 1.0, atol=1e-6)


def test_overlong_and_bad_ids():
    cfg = tiny_cfg()
    p = tinylm.init_params(cfg)
    with pytest.raises(ShapeError):
        tinylm.forward(p, np.zeros(25, dtype=int), cfg)
    with pytest.raises(ShapeError):
        tinylm.forward(p, np.array([0, 13]), cfg)


def _records(cfg, seed=0):
    rng = np.random.default_rng(seed)
    r1 = (rng.integers(0, cfg.vocab_size, 7), rng.integers(0, cfg.vocab_size, 7), (rng.random(7) > 0.4) * 1.0)
    r1[2][-1] = 1.0
    r2 = (rng.integers(0, cfg.vocab_size, 5), rng.integers(0, cfg.vocab_size, 5), np.ones(5))
    return [r1, r2]


def fd_check(params, fn, grads, eps=1e-4, per_tensor=12):
    worst = 0.0
    for name, arr in params.items():
        flat = arr.reshape(-1)
        g = np.asarray(grads[name]).reshape(-1)
        for i in np.linspace(0, flat.size - 1, min(per_tensor, flat.size)).astype(int):
            old = flat[i]
            flat[i] = old + eps
            up = fn()
            flat[i] = old - eps
            dn = fn()
            flat[i] = old
            num = (up - dn) / (2 * eps)
            worst = max(worst, abs(num - g[i]) / max(1e-7, abs(num) + abs(g[i])))
    return worst


def lm_gradient_check(tie=False, seed=0):
    cfg = tiny_cfg(tie=tie)
    p = noisy_params(cfg, seed)
    recs = _records(cfg, seed)
    _, g, _, _ = tinylm.nll_loss(p, cfg, recs)
    return fd_check(p, lambda: tinylm.nll_loss(p, cfg, recs, want_grads=False)[0], g)


@pytest.mark.parametrize("tie", [False, True])
def test_gradients_every_tensor(tie):
    assert lm_gradient_check(tie) < 1e-3


def test_prompt_positions_have_zero_gradient():
    cfg = tiny_cfg()
    p = noisy_params(cfg)
    x, y, m = tinylm.record_to_sequence([1, 2, 3], [4, 5], _Vocab())
    logits = tinylm.forward(p, x[None], cfg)
    _, dlogits = tinylm.nll_from_logits(logits, y[None], m[None])
    assert not dlogits[0, :4].any() and dlogits[0, 4:].any()
    assert m.tolist() == [0, 0, 0, 0, 1, 1, 1]


class _Vocab:
    bos, sep, eos = 10, 11, 12


def test_record_layout_and_empty_answer():
    x, y, m = tinylm.record_to_sequence([1, 2], [3], _Vocab())
    assert x.tolist() == [10, 1, 2, 11, 3] and y.tolist() == [1, 2, 11, 3, 12]
    x, y, m = tinylm.record_to_sequence([1, 2], [3], _Vocab(), loss_on_prompt=True)
    assert m.all()
    with pytest.raises(ValueError):
        tinylm.record_to_sequence([1], [], _Vocab())


def test_lr_schedule_shape():
    total, lr = 1000, 1e-3
    w = warmup_steps(total, 0.01)
    assert w == 10
    assert math.isclose(lr_at(0, total, lr), lr / w)
    assert math.isclose(lr_at(w - 1, total, lr), lr)
    assert max(lr_at(s, total, lr) for s in range(total)) == lr
    assert lr_at(total - 1, total, lr) < 1e-3 * lr


def test_train_zero_steps_and_determinism():
    cfg = tiny_cfg()
    p = tinylm.init_params(cfg)
    recs = _records(cfg)
    same = tinylm.train(p, cfg, recs, tinylm.TrainConfig(steps=0)).params
    assert all(np.array_equal(same[k], p[k]) for k in p)
    a = tinylm.train(p, cfg, recs, tinylm.TrainConfig(steps=20, batch_size=2, seed=4))
    b = tinylm.train(p, cfg, recs, tinylm.TrainConfig(steps=20, batch_size=2, seed=4))
    assert all(a.params[k].tobytes() == b.params[k].tobytes() for k in p)
    assert [r[1] for r in a.curve] == [r[1] for r in b.curve]
    with pytest.raises(ValueError):
        tinylm.train(p, cfg, [], tinylm.TrainConfig(steps=1))


def _motion_vocab():
    return build_vocab(["go now"], K=3, B=2)


def test_grammar_constrained_generation_is_decodable():
    v = _motion_vocab()
    cfg = tinylm.ModelConfig(vocab_size=v.size, layers=1, heads=2, dim=8, ff_dim=8, context=64, seed=0)
    for seed in range(10):
        p = noisy_params(cfg, seed, 1.0)
        for max_len in (6, 13, 30):
            out = tinylm.generate(p, cfg, [0, 1], v, tinylm.DecodeConfig(max_len=max_len, grammar=True,
                                                                         temperature=1.0, seed=seed))
            codes = augment.codes_from_ids(out, v)
            assert codes.shape[1] == 5 and len(out) <= max_len


def test_greedy_equals_argmax_loop():
    v = _motion_vocab()
    cfg = tinylm.ModelConfig(vocab_size=v.size, layers=2, heads=2, dim=8, ff_dim=8, context=64, seed=0)
    p = noisy_params(cfg, 5, 1.0)
    out = tinylm.generate(p, cfg, [0, 1], v, tinylm.DecodeConfig(max_len=12, temperature=0.0))
    ctx = [v.bos, 0, 1, v.sep]
    ref = []
    for _ in range(12):
        nxt = int(np.argmax(tinylm.forward(p, np.array(ctx), cfg)[-1]))
        if nxt == v.eos:
            break
        ref.append(nxt)
        ctx.append(nxt)
    assert out == ref


def test_checkpoint_roundtrip_and_errors(tmp_path):
    cfg = tiny_cfg()
    p = noisy_params(cfg)
    path = tinylm.save_checkpoint(tmp_path / "m.hlm", p, cfg)
    back, cfg2, adapters, _ = tinylm.load_checkpoint(path)
    assert cfg2 == cfg and adapters is None
    r = tinylm.round_params(p)
    assert all(np.array_equal(back[k], r[k]) for k in p)
    data = path.read_bytes()
    (tmp_path / "bad.hlm").write_bytes(b"NOPE" + data[4:])
    with pytest.raises(BadMagicError):
        tinylm.load_checkpoint(tmp_path / "bad.hlm")
    (tmp_path / "cut.hlm").write_bytes(data[:-10])
    with pytest.raises(TruncatedError):
        tinylm.load_checkpoint(tmp_path / "cut.hlm")


def test_trained_model_answers_duration(codecs, vocab, templates):
    """Overfit a few Motion->Time records; a 60-frame clip must come back as "2.0"."""
    t = next(t for t in templates if t.task_type == "Motion->Time" and t.answer == "Time:seconds")
    clips = [corpus.generate_clip("idle", {"T": T}, seed=i) for i, T in enumerate((15, 60))]
    pairs = [augment.instantiate(t, c, codecs, vocab, seed=0) for c in clips]
    recs = [tinylm.record_to_sequence(q.prompt_ids, q.answer_ids, vocab) for q in pairs]
    cfg = tinylm.ModelConfig(vocab_size=vocab.size, layers=2, heads=4, dim=32, ff_dim=64, context=512, seed=0)
    res = tinylm.train(tinylm.init_params(cfg), cfg, recs, tinylm.TrainConfig(lr=1e-2, steps=60, batch_size=2))
    out = tinylm.generate(res.params, cfg, pairs[1].prompt_ids, vocab, tinylm.DecodeConfig(max_len=5))
    assert vocab.decode_text(out) == "2.0"
    # conditioning matters: a different prompt changes the loss of the same answer
    alt = tinylm.record_to_sequence(pairs[0].prompt_ids, pairs[1].answer_ids, vocab)
    l_true = tinylm.mean_answer_nll(res.params, cfg, [recs[1]])
    l_alt = tinylm.mean_answer_nll(res.params, cfg, [alt])
    assert l_alt != l_true
