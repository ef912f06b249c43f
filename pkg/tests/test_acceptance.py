"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import json
import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import record_criterion
from test_partvq import vq_gradient_check
from test_retarget import fk_gradient_check, two_link, keypoints
from test_tinylm import lm_gradient_check
from test_visfuse import adapter_gradient_check

from hvla import augment, corpus, metrics, partvq, retarget, tinylm, visfuse
from hvla.motion import NUM_PARTS, PART_NAMES
from hvla.vocab import build_vocab, numeral_texts

ROOT = Path(__file__).resolve().parents[1]


def check(number, passed, detail):
    record_criterion(number, bool(passed), detail)
    assert passed, detail


def test_c01_nearest_code_matches_brute_force():
    rng = np.random.default_rng(0)
    t0 = time.perf_counter()
    mismatches = 0
    for _ in range(1000):
        K, d = int(rng.integers(1, 65)), int(rng.integers(1, 9))
        book = rng.normal(size=(K, d))
        z = rng.normal(size=d)
        if rng.random() < 0.2:  # exact ties and on-codeword latents
            book[int(rng.integers(K))] = book[0]
            z = book[int(rng.integers(K))].copy()
        dist = [float(np.sum((z - c) ** 2)) for c in book]
        want = min(range(K), key=lambda k: (dist[k], k))
        mismatches += int(partvq.nearest_code(z, book)[0] != want)
    dt = time.perf_counter() - t0
    check(1, mismatches == 0 and dt < 10, f"mismatches={mismatches} runtime={dt:.2f}s")


def test_c02_gradient_suite():
    t0 = time.perf_counter()
    errs = {
        "partvq": vq_gradient_check(0),
        "tinylm": max(lm_gradient_check(False), lm_gradient_check(True)),
        "visfuse": adapter_gradient_check(0),
        "retarget_fk": fk_gradient_check("g1_like"),
    }
    dt = time.perf_counter() - t0
    worst = max(errs.values())
    detail = " ".join(f"{k}={v:.2e}" for k, v in errs.items()) + f" runtime={dt:.1f}s"
    check(2, worst < 1e-3 and dt < 120, detail)


def test_c03_vq_training_and_determinism():
    cfg = corpus.SynthConfig(clips=10, T_range=(50, 50))
    clips = [corpus.synth_clip(i, cfg, master_seed=3) for i in range(10)]
    frames = sum(c.sequence.num_frames for c in clips)
    vc = partvq.VqConfig(K=16, d=8, steps=2000, batch_size=128, seed=0)
    a = partvq.train_vq(clips, vc)
    b = partvq.train_vq(clips, vc)
    first, last = a.curve[0][1], a.curve[-1][1]
    same = all(np.array_equal(x.params[k], y.params[k]) for x, y in zip(a.codecs, b.codecs) for k in x.params)
    same = same and a.curve == b.curve
    check(3, frames == 500 and last < 0.2 * first and same,
          f"frames={frames} rec {first:.4f} -> {last:.4f} (ratio {last / first:.3f}) bit_identical={same}")


@pytest.fixture(scope="module")
def overfit_setup():
    cfg = corpus.SynthConfig(clips=60, T_range=(6, 8))
    clips = [corpus.synth_clip(i, cfg, master_seed=1) for i in range(60)]
    codecs = partvq.round_to_f32(partvq.train_vq(clips, partvq.VqConfig(K=16, d=8, steps=300, batch_size=64)).codecs)
    templates = augment.default_templates()
    vocab = build_vocab(augment.template_texts(templates) + corpus.phrase_bank_text() + numeral_texts(), K=16, B=8)
    tasks = {"Occlusion->Motion", "State->Motion", "Motion->Track", "Motion->Time", "Track->Motion"}
    pairs, _ = augment.build_dataset(clips, templates, codecs, vocab, 1, 0, task_filter=tasks)
    # identical prompts with different answers cannot be memorised, so keep one per prompt
    seen, uniq = set(), []
    for p in pairs:
        if tuple(p.prompt_ids) not in seen:
            seen.add(tuple(p.prompt_ids))
            uniq.append(p)
    extra, _ = augment.build_dataset(clips, templates, codecs, vocab, 2, 99,
                                     task_filter={"Caption->Motion", "Time->Motion", "Track->Motion"})
    return vocab, codecs, uniq[:50], extra


def test_c04_lm_overfit_and_grammar_decoding(overfit_setup):
    vocab, codecs, pairs, extra = overfit_setup
    recs = [tinylm.record_to_sequence(p.prompt_ids, p.answer_ids, vocab) for p in pairs]
    mc = tinylm.ModelConfig(vocab_size=vocab.size, layers=2, heads=4, dim=64, ff_dim=256, context=256)
    res = tinylm.train(tinylm.init_params(mc), mc, recs, tinylm.TrainConfig(steps=2000, batch_size=4))
    nll = tinylm.mean_answer_nll(res.params, mc, recs)
    prompts = [p.prompt_ids for p in pairs] + [p.prompt_ids for p in extra[:100 - len(pairs)]]
    decodable = 0
    for i, prompt in enumerate(prompts):
        ids = tinylm.generate(res.params, mc, prompt, vocab,
                              tinylm.DecodeConfig(max_len=60, grammar=True, seed=i, temperature=1.0))
        try:
            codes = augment.codes_from_ids(ids, vocab)
            seq = partvq.detokenize_sequence(partvq.TokenSequence(codes, 30), codecs)
            decodable += int(seq.num_frames >= 1 and np.all(np.isfinite(seq.frames)))
        except Exception:
            pass
    check(4, len(pairs) == 50 and nll < 0.1 and decodable == len(prompts) == 100,
          f"pairs={len(pairs)} answer_nll={nll:.4f} decodable={decodable}/{len(prompts)}")


def test_c05_uniform_logits_give_log_vocab(vocab):
    mc = tinylm.ModelConfig(vocab_size=vocab.size, layers=2, heads=4, dim=16, ff_dim=32, context=64)
    p = tinylm.init_params(mc)
    p["out.w"][:] = 0.0
    p["out.b"][:] = 0.0
    recs = [tinylm.record_to_sequence([3, 4, 5], [vocab.motion_token_id(0, 1), vocab.frame], vocab),
            tinylm.record_to_sequence([7], [9, 10, 11], vocab)]
    loss = tinylm.nll_loss(p, mc, recs, want_grads=False)[0]
    err = abs(loss - math.log(vocab.size))
    check(5, err < 1e-4, f"loss={loss:.8f} ln(V)={math.log(vocab.size):.8f} |diff|={err:.2e}")


def test_c06_fresh_adapters_are_transparent(tmp_path, vocab):
    mc = tinylm.ModelConfig(vocab_size=vocab.size, layers=2, heads=2, dim=16, ff_dim=32, context=64)
    rng = np.random.default_rng(0)
    base = {k: v + rng.normal(0, 0.3, v.shape) for k, v in tinylm.init_params(mc).items()}
    tinylm.save_checkpoint(tmp_path / "base.hlm", base, mc)
    base, mc, _, _ = tinylm.load_checkpoint(tmp_path / "base.hlm")
    acfg = visfuse.AdapterConfig(vis_dim=8, image_size=32, seed=1)
    adapters = visfuse.init_adapters(mc, acfg)
    same = 0
    for i in range(100):
        prompt = [int(t) for t in rng.integers(0, vocab.L, int(rng.integers(1, 8)))]
        img = visfuse.render_scene(visfuse.BEARING_NAMES[i % 4], 1.0 + i % 3, seed=i, size=32)
        dc = tinylm.DecodeConfig(max_len=12, temperature=1.0, seed=i)
        same += int(tinylm.generate(base, mc, prompt, vocab, dc)
                    == visfuse.generate_with_vision(base, mc, adapters, acfg, prompt, img, vocab, dc))
    recs = [visfuse.VlaRecord(visfuse.render_scene(visfuse.BEARING_NAMES[i % 4], 2.0, i, size=32),
                              [5, 6], [vocab.motion_token_id(i % 5, i % 16), vocab.frame]) for i in range(8)]
    res = visfuse.finetune(base, mc, adapters, acfg, recs, vocab, visfuse.FinetuneConfig(steps=500, batch_size=4))
    frozen = res.base_checksum_before == res.base_checksum_after == visfuse.block_checksums(base)
    moved = any(not np.array_equal(res.adapters[k], adapters[k]) for k in adapters)
    check(6, same == 100 and frozen and moved, f"identical={same}/100 frozen_unchanged={frozen} adapters_trained={moved}")


def test_c07_toy_vla_bearing_task():
    t0 = time.perf_counter()
    clips = [corpus.synth_clip(i, corpus.SynthConfig(), 0) for i in range(10)]
    clips += [visfuse.target_clip("turn", b, 8) for b in visfuse.BEARING_NAMES]
    codecs = partvq.train_vq(clips, partvq.VqConfig(K=16, steps=400, batch_size=64)).codecs
    vocab = build_vocab(visfuse.task_texts() + corpus.phrase_bank_text(), 16, 8)
    train = visfuse.make_vla_records(400, "turn", codecs, vocab, 0)
    test = visfuse.make_vla_records(100, "turn", codecs, vocab, 1)
    mc = tinylm.ModelConfig(vocab_size=vocab.size, layers=2, heads=4, dim=32, ff_dim=128, context=64)
    text_only = [tinylm.record_to_sequence(r.prompt_ids, r.target_ids, vocab) for r in train]
    base = tinylm.train(tinylm.init_params(mc), mc, text_only, tinylm.TrainConfig(lr=3e-3, steps=200, batch_size=8)).params
    acfg = visfuse.AdapterConfig()
    res = visfuse.finetune(base, mc, visfuse.init_adapters(mc, acfg), acfg, train, vocab,
                           visfuse.FinetuneConfig(steps=2000, batch_size=8))
    acc = visfuse.bearing_accuracy(base, mc, res.adapters, acfg, test, vocab, codecs)
    dt = time.perf_counter() - t0
    check(7, acc > 0.8 and dt < 600, f"held_out_accuracy={acc:.2f} (chance 0.25) runtime={dt:.0f}s")


def test_c08_metric_oracles():
    rng = np.random.default_rng(0)
    G = corpus.generate_clip("walk", {"T": 20}, seed=0).sequence.frames
    P = G + rng.normal(0, 0.02, G.shape)
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    R = q * np.sign(np.diag(r))
    if np.linalg.det(R) < 0:
        R[:, 0] *= -1
    base = metrics.mpjpe(P, G, "procrustes")
    inv = abs(metrics.mpjpe(1.7 * P @ R.T + [0.3, -2.0, 1.0], G, "procrustes") - base) / base
    off = G + np.array([0.0, 0.006, 0.008])
    g_err = abs(metrics.mpjpe(off, G) - 10.0)
    pa = metrics.mpjpe(off, G, "procrustes")
    A = rng.normal(size=(10_000, 3))
    B = rng.normal(size=(10_000, 3)) + [0.0, 1.0, 0.0]
    f = metrics.fid(A, B)
    M = rng.normal(size=(20, 25))
    S = M @ M.T
    root = metrics.matrix_sqrt_psd(S)
    sq = np.linalg.norm(root @ root - S) / np.linalg.norm(S)
    ok = inv < 1e-9 and g_err < 1e-6 and pa < 1e-6 and abs(f - 1.0) < 0.05 and sq < 1e-6
    check(8, ok, f"pa_invariance={inv:.1e} offset_err={g_err:.1e} pa_offset={pa:.1e} gaussian_fid={f:.4f} "
                 f"sqrt_rel={sq:.1e}")


def test_c09_retarget_oracles():
    sk = retarget.load_builtin("human15")
    clip = corpus.generate_clip("walk", {"T": 100}, seed=1)
    _, reports = retarget.retarget_sequence(clip.sequence, sk)
    mean_res = float(np.mean([r.residual_mm for r in reports]))
    monotone = all(r.final_objective <= r.initial_objective for r in reports)
    d = 1.5
    theta, rep = retarget.retarget_frame(keypoints(left_hand=[0.0, d, 0.0]), two_link(), init=[0, 0, 0, 0.3, 0.4])
    elbow = abs(abs(theta[4]) - math.acos((d * d - 2) / 2))
    ik = max(rep.residual_mm / 1000.0, elbow)
    check(9, mean_res < 1.0 and ik < 1e-3 and monotone and rep.final_objective <= rep.initial_objective,
          f"self_retarget_mean={mean_res:.4f}mm over {len(reports)} frames two_link_err={ik:.1e} "
          f"final<=initial={monotone}")


def test_c10_augmentation(small_corpus, templates, codecs, vocab, tmp_path):
    families = sorted({t.task_type for t in templates})
    runs = []
    for name in ("a", "b"):
        pairs, _ = augment.build_dataset(small_corpus, templates, codecs, vocab, 6, 11)
        runs.append(augment.write_jsonl(pairs, tmp_path / f"{name}.jsonl").read_bytes())
    occ, _ = augment.build_dataset(small_corpus, templates, codecs, vocab, 8, 4,
                                   task_filter={"Occlusion->Motion", "Occlusion+Caption->Motion"})
    by_id = {c.clip_id: c for c in small_corpus}
    bad = 0
    for qa in occ:
        gt = augment.motion_ids(partvq.tokenize_sequence(by_id[qa.clip_id].sequence, codecs).codes, vocab)
        seg = [i for i in qa.prompt_ids if vocab.is_motion(i) or i in (vocab.mask, vocab.frame)]
        masked = [k for k, t in enumerate(seg) if t == vocab.mask]
        part, (t0, t1) = qa.provenance["occlusion"]["part"], qa.provenance["occlusion"]["span"]
        expect = [f * (NUM_PARTS + 1) + PART_NAMES.index(part) for f in range(t0, t1)]
        if (masked != expect or [qa.answer_ids[k] for k in masked] != [gt[k] for k in masked]
                or qa.answer_ids != gt):
            bad += 1
    ok = len(families) >= 12 and runs[0] == runs[1] and occ and bad == 0
    check(10, ok, f"families={len(families)} byte_identical={runs[0] == runs[1]} "
                  f"occlusion_pairs={len(occ)} inconsistent={bad}")


def test_c11_cli_smoke_pipeline(tmp_path):
    run_dir = tmp_path / "smoke"
    cfg_dir = tmp_path / "configs"
    cfg_dir.mkdir()
    for p in (ROOT / "configs" / "smoke").glob("*.json"):
        (cfg_dir / p.name).write_text(p.read_text().replace("runs/smoke", str(run_dir)))
    stages = [("synth", "synth"), ("train-vq", "train_vq"), ("tokenize", "tokenize"), ("build-vocab", "build_vocab"),
              ("augment", "augment"), ("train-lm", "train_lm"), ("eval", "eval")]
    t0 = time.perf_counter()
    codes = []
    for cmd, name in stages:
        proc = subprocess.run([sys.executable, "-m", "hvla.cli", cmd, "--config", str(cfg_dir / f"{name}.json"),
                               "--seed", "0", "--out", str(run_dir / _OUT[cmd]), "--log-level", "WARNING"],
                              capture_output=True, text=True, cwd=tmp_path)
        codes.append(proc.returncode)
        if proc.returncode:
            print(proc.stderr[-2000:])
            break
    dt = time.perf_counter() - t0
    ok = codes == [0] * len(stages)
    e_g = bound = float("nan")
    if ok:
        e_g = json.loads((run_dir / "eval" / "metrics.json").read_text())["e_mpjpe_g"]
        bound = json.loads((run_dir / "vq" / "report.json").read_text())["mpjpe_bound_mm"]
    check(11, ok and dt < 900 and e_g < bound,
          f"exit_codes={codes} runtime={dt:.0f}s e_mpjpe_g={e_g:.2f}mm vq_bound={bound:.2f}mm")


_OUT = {"synth": "corpus", "train-vq": "vq", "tokenize": "tokens", "build-vocab": "vocab",
        "augment": "augment", "train-lm": "lm", "eval": "eval"}
