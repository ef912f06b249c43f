"""Toy vision-conditioned motion task: turn toward / walk to / move away from a red object.

Trains a small text-only base model, freezes it, fits cross-attention
adapters on rendered scenes, and reports held-out bearing accuracy.

    python3 scripts/toy_vla.py --task turn --steps 2000 --out runs/toy_vla
"""

import argparse
import json
import logging
import time
from pathlib import Path

from hvla import corpus, partvq, tinylm, visfuse
from hvla.vocab import build_vocab


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--task", default="turn", choices=sorted(visfuse.TASKS))
    ap.add_argument("--train", type=int, default=400)
    ap.add_argument("--test", type=int, default=100)
    ap.add_argument("--base-steps", type=int, default=200)
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--lr", type=float, default=1e-2)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--no-position-codes", action="store_true")
    ap.add_argument("--out", default="runs/toy_vla")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()

    family = visfuse.TASKS[args.task][1]
    clips = [corpus.synth_clip(i, corpus.SynthConfig(), args.seed) for i in range(10)]
    clips += [visfuse.target_clip(args.task, b, 8) for b in visfuse.BEARING_NAMES]
    codecs = partvq.train_vq(clips, partvq.VqConfig(K=16, steps=400, batch_size=64, seed=args.seed)).codecs
    vocab = build_vocab(visfuse.task_texts() + corpus.phrase_bank_text(), 16, 8)
    train = visfuse.make_vla_records(args.train, args.task, codecs, vocab, args.seed)
    test = visfuse.make_vla_records(args.test, args.task, codecs, vocab, args.seed + 1)
    ceiling = sum(visfuse.classify_generation(r.target_ids, vocab, codecs) == r.image.bearing for r in test)
    ceiling /= len(test)

    mc = tinylm.ModelConfig(vocab_size=vocab.size, layers=2, heads=4, dim=32, ff_dim=128, context=64, seed=args.seed)
    text_only = [tinylm.record_to_sequence(r.prompt_ids, r.target_ids, vocab) for r in train]
    base = tinylm.train(tinylm.init_params(mc), mc, text_only,
                        tinylm.TrainConfig(lr=3e-3, steps=args.base_steps, batch_size=8, seed=args.seed)).params
    acfg = visfuse.AdapterConfig(position_codes=not args.no_position_codes, seed=args.seed)
    fresh = visfuse.init_adapters(mc, acfg)
    base_acc = visfuse.bearing_accuracy(base, mc, fresh, acfg, test, vocab, codecs)
    res = visfuse.finetune(base, mc, fresh, acfg, train, vocab,
                           visfuse.FinetuneConfig(lr=args.lr, steps=args.steps, batch_size=8, seed=args.seed),
                           log_every=max(1, args.steps // 10))
    acc = visfuse.bearing_accuracy(base, mc, res.adapters, acfg, test, vocab, codecs)
    report = {"task": args.task, "family": family, "target_ceiling": ceiling, "base_accuracy": base_acc,
              "adapted_accuracy": acc, "chance": 0.25,
              "frozen_unchanged": res.base_checksum_before == res.base_checksum_after,
              "seconds": round(time.perf_counter() - t0, 1)}
    tinylm.save_checkpoint(out / "model_vla.hlm", base, mc, res.adapters, visfuse.adapter_meta(acfg))
    tinylm.write_curve_csv(out / "curve.csv", res.curve)
    (out / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    print(json.dumps(report, indent=2))


if __name__ == "__main__":
    main()
