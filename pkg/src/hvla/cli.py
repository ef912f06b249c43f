"""``hvla <subcommand> --config <path> [--seed N] [--out DIR]``.

Every subcommand reads a JSON object whose keys must be fields of that
subcommand's config dataclass, writes its outputs into a fresh directory and
leaves ``resolved_config.json`` next to them.  Failures print one line::

    hvla-error code=<code> class=<ExceptionClass> message="<text>"

and exit with the code listed in ``EXIT_CODES``.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import augment, corpus, metrics, partvq, retarget, tinylm, visfuse
from .errors import ConfigError, HvlaError, MissingArtifactError
from .rng import derive_seed
from .vocab import UnifiedVocab, build_vocab, numeral_texts

log = logging.getLogger("hvla")

EXIT_CODES = {
    "config-schema": 2,
    "missing-artifact": 3,
    "numeric-divergence": 4,
    "format": 5,
    "output-exists": 6,
    "error": 1,
}


class OutputExistsError(HvlaError):
    code = "output-exists"


def exit_code_for(exc: BaseException) -> int:
    code = getattr(exc, "code", "error")
    if code in EXIT_CODES:
        return EXIT_CODES[code]
    if isinstance(exc, HvlaError):
        from .errors import FormatError, NumericError
        if isinstance(exc, FormatError):
            return EXIT_CODES["format"]
        if isinstance(exc, NumericError):
            return EXIT_CODES["numeric-divergence"]
    return EXIT_CODES["error"]


# --- configs ------------------------------------------------------------------

@dataclass
class SynthRun:
    clips: int = 200
    families: list = field(default_factory=lambda: list(corpus.FAMILIES))
    T_range: list = field(default_factory=lambda: [40, 120])
    fps: int = 30
    low_fraction: float = 0.5
    noise_std: float = 0.01
    fmt: str = "binary"


@dataclass
class DegradeRun:
    corpus: str = ""
    noise_std: float = 0.01


@dataclass
class TrainVqRun:
    corpus: str = ""
    K: int = 1024
    d: int = 8
    beta: float = 0.25
    lr: float = 2e-3
    steps: int = 2000
    batch_size: int = 128
    dead_after: int = 50


@dataclass
class TokenizeRun:
    corpus: str = ""
    codecs: str = ""


@dataclass
class BuildVocabRun:
    codecs: str = ""
    corpus: str = ""
    templates: str = ""
    B: int = 16
    max_frames: int = 240
    max_seconds: float = 10.0
    extra_texts: list = field(default_factory=list)


@dataclass
class AugmentRun:
    corpus: str = ""
    codecs: str = ""
    vocab: str = ""
    templates: str = ""
    quota: int = 4
    track_stride: int = 10
    min_span_frac: float = 0.25
    tasks: list = field(default_factory=list)


@dataclass
class TrainLmRun:
    vocab: str = ""
    dataset: str = ""
    stage2_dataset: str = ""
    layers: int = 2
    heads: int = 4
    dim: int = 64
    ff_dim: int = 256
    context: int = 512
    tie_embeddings: bool = False
    lr: float = 1e-3
    warmup_ratio: float = 0.01
    schedule: str = "cosine"
    batch_size: int = 4
    steps: int = 1000
    stage2_steps: int = 0
    loss_on_prompt: bool = False


@dataclass
class FinetuneVlaRun:
    model: str = ""
    codecs: str = ""
    vocab: str = ""
    task: str = "turn"
    train_scenes: int = 400
    test_scenes: int = 100
    target_frames: int = 4
    vis_dim: int = 32
    patch: int = 8
    image_size: int = 64
    position_codes: bool = True
    adapter_init: str = "gated"
    freeze_vision: bool = False
    lr: float = 1e-2
    warmup_ratio: float = 0.01
    batch_size: int = 8
    steps: int = 2000
    save_scenes: int = 8


@dataclass
class GenerateRun:
    model: str = ""
    vocab: str = ""
    codecs: str = ""
    prompts: list = field(default_factory=list)
    dataset: str = ""
    limit: int = 10
    temperature: float = 0.0
    max_len: int = 240
    grammar: bool = True
    fps: int = 30


@dataclass
class RetargetRun:
    corpus: str = ""
    robot: str = "g1_like"
    clips: list = field(default_factory=list)
    lr: float = 0.05
    iters: int = 300
    refine_iters: int = 20
    smooth: float = 0.0
    warm_start: bool = True


@dataclass
class EvalRun:
    pred: str = ""
    gt: str = ""
    extractor: str = "random-projection"
    feature_dim: int = 64
    diversity_pairs: int = 200


@dataclass
class StatsRun:
    corpus: str = ""


SMOKE = {
    "synth": {"clips": 20, "T_range": [20, 40]},
    "train-vq": {"K": 16, "steps": 600, "batch_size": 64},
    "build-vocab": {"B": 8},
    "augment": {"quota": 3},
    "train-lm": {"dim": 32, "ff_dim": 128, "heads": 4, "context": 512, "steps": 200, "batch_size": 2},
    "finetune-vla": {"train_scenes": 80, "test_scenes": 20, "steps": 200},
    "generate": {"limit": 3, "max_len": 60},
    "retarget": {"iters": 100},
}


def load_run_config(cls, path, overrides: dict | None = None, subcommand: str = ""):
    data = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise MissingArtifactError(f"config file {p} not found")
        try:
            data = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{p}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{p}: top level must be an object")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown config key(s) for {subcommand}: {', '.join(unknown)}")
    merged = dict(overrides or {})
    merged.update(data)
    for k, v in merged.items():
        default = known[k].default if known[k].default is not dataclasses.MISSING else known[k].default_factory()
        if isinstance(default, bool) and not isinstance(v, bool):
            raise ConfigError(f"{k}: expected a boolean, got {v!r}")
        if isinstance(default, (int, float)) and not isinstance(default, bool):
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f"{k}: expected a number, got {v!r}")
            if isinstance(default, int) and not isinstance(v, int):
                raise ConfigError(f"{k}: expected an integer, got {v!r}")
        if isinstance(default, str) and not isinstance(v, str):
            raise ConfigError(f"{k}: expected a string, got {v!r}")
        if isinstance(default, list) and not isinstance(v, list):
            raise ConfigError(f"{k}: expected a list, got {v!r}")
    return cls(**merged)


def _need(path: str, what: str) -> Path:
    if not path:
        raise ConfigError(f"missing required config key {what!r}")
    p = Path(path)
    if not p.exists():
        raise MissingArtifactError(f"{what} not found: {p}")
    return p


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _load_vocab(path) -> UnifiedVocab:
    return UnifiedVocab.load(_need(path, "vocab"))


def _templates(path: str):
    return augment.parse_templates(_need(path, "templates")) if path else augment.default_templates()


# --- subcommands ---------------------------------------------------------------

def cmd_synth(cfg: SynthRun, seed: int, out: Path) -> dict:
    sc = corpus.SynthConfig(clips=cfg.clips, families=tuple(cfg.families), T_range=tuple(cfg.T_range),
                            fps=cfg.fps, low_fraction=cfg.low_fraction, noise_std=cfg.noise_std, fmt=cfg.fmt)
    unknown = set(sc.families) - set(corpus.FAMILIES)
    if unknown:
        raise ConfigError(f"unknown families: {sorted(unknown)}")
    corpus.write_corpus(out, sc, seed)
    manifest = corpus.corpus_stats(out).to_dict()
    _write_json(out / "manifest.json", manifest)
    return manifest


def cmd_degrade(cfg: DegradeRun, seed: int, out: Path) -> dict:
    src = _need(cfg.corpus, "corpus")
    n = 0
    for path in corpus.list_clip_files(src):
        clip = corpus.load_clip(path)
        low = corpus.degrade_clip(clip, cfg.noise_std, derive_seed(seed, "degrade", clip.clip_id) % (2 ** 31))
        corpus.save_clip(low, out / path.name)
        n += 1
    return {"degraded": n}


def _corpus(path: str):
    clips = corpus.load_corpus(_need(path, "corpus"))
    if not clips:
        raise MissingArtifactError(f"no clips in {path}")
    return clips


def cmd_train_vq(cfg: TrainVqRun, seed: int, out: Path) -> dict:
    clips = _corpus(cfg.corpus)
    vc = partvq.VqConfig(K=cfg.K, d=cfg.d, beta=cfg.beta, lr=cfg.lr, steps=cfg.steps,
                         batch_size=cfg.batch_size, seed=seed, dead_after=cfg.dead_after)
    res = partvq.train_vq(clips, vc)
    partvq.save_codecs(res.codecs, out / "codecs.hvq")
    stored = partvq.load_codecs(out / "codecs.hvq")
    frames = partvq._frames_from(clips)
    rec = partvq.reconstruction_error(frames, stored)
    with open(out / "vq_curve.csv", "w") as fh:
        fh.write("step,rec,emb,com,total\n")
        for row in res.curve:
            fh.write(",".join(repr(v) for v in row) + "\n")
    report = {
        "initial_rec": res.curve[0][1] if res.curve else rec,
        "final_rec": res.curve[-1][1] if res.curve else rec,
        "corpus_rec": rec,
        # mean per-joint error <= (max_p sqrt(joints_p)) * (parts / joints) * mean per-part error
        "mpjpe_bound_mm": 1000.0 * 2.0 * (5.0 / 15.0) * rec,
        "frames": int(frames.shape[0]),
        "reinitialized_codes": res.reinitialized,
    }
    _write_json(out / "report.json", report)
    return report


def cmd_tokenize(cfg: TokenizeRun, seed: int, out: Path) -> dict:
    clips = _corpus(cfg.corpus)
    codecs = partvq.load_codecs(_need(cfg.codecs, "codecs"))
    detok = out / "detok"
    detok.mkdir()
    with open(out / "tokens.jsonl", "w") as fh:
        for clip in sorted(clips, key=lambda c: c.clip_id):
            tok = partvq.tokenize_sequence(clip.sequence, codecs)
            fh.write(json.dumps({"clip_id": clip.clip_id, "fps": tok.fps, "codes": tok.codes.tolist(),
                                 "root": np.round(tok.root, 6).tolist()}, sort_keys=True) + "\n")
            rec = partvq.detokenize_sequence(tok, codecs)
            corpus.save_clip(corpus.ClipRecord(clip.clip_id, rec, clip.caption, clip.quality_tier, clip.family,
                                               clip.seed, clip.params), detok / f"{clip.clip_id}.hvla")
    return {"clips": len(clips)}


def cmd_build_vocab(cfg: BuildVocabRun, seed: int, out: Path) -> dict:
    codecs = partvq.load_codecs(_need(cfg.codecs, "codecs"))
    texts = augment.template_texts(_templates(cfg.templates))
    texts += corpus.phrase_bank_text() + visfuse.task_texts() + list(cfg.extra_texts)
    texts += numeral_texts(cfg.max_frames, cfg.max_seconds)
    if cfg.corpus:
        texts += [c.caption for c in _corpus(cfg.corpus) if c.caption]
    vocab = build_vocab(texts, codecs[0].K, cfg.B)
    vocab.save(out / "vocab.tsv")
    return {"words": vocab.L, "size": vocab.size, "K": vocab.K, "B": vocab.B}


def cmd_augment(cfg: AugmentRun, seed: int, out: Path) -> dict:
    clips = _corpus(cfg.corpus)
    codecs = partvq.load_codecs(_need(cfg.codecs, "codecs"))
    vocab = _load_vocab(cfg.vocab)
    acfg = augment.AugmentConfig(track_stride=cfg.track_stride, min_span_frac=cfg.min_span_frac)
    pairs, stats = augment.build_dataset(clips, _templates(cfg.templates), codecs, vocab, cfg.quota, seed,
                                         acfg, set(cfg.tasks) or None)
    augment.write_jsonl(pairs, out / "dataset.jsonl")
    _write_json(out / "stats.json", stats.to_dict())
    return stats.to_dict()


def _lm_records(path, vocab, context, loss_on_prompt):
    pairs = augment.read_jsonl(_need(path, "dataset"))
    recs, skipped = [], 0
    for qa in pairs:
        x, y, m = tinylm.record_to_sequence(qa.prompt_ids, qa.answer_ids, vocab, loss_on_prompt)
        if len(x) > context:
            skipped += 1
            continue
        recs.append((x, y, m))
    if not recs:
        raise ConfigError(f"no record of {path} fits context {context}")
    return recs, skipped


def cmd_train_lm(cfg: TrainLmRun, seed: int, out: Path) -> dict:
    vocab = _load_vocab(cfg.vocab)
    mc = tinylm.ModelConfig(vocab_size=vocab.size, layers=cfg.layers, heads=cfg.heads, dim=cfg.dim,
                            ff_dim=cfg.ff_dim, context=cfg.context, seed=seed, tie_embeddings=cfg.tie_embeddings)
    params = tinylm.init_params(mc)
    report = {}
    stages = [("stage1", cfg.dataset, cfg.steps)]
    if cfg.stage2_dataset:
        stages.append(("stage2", cfg.stage2_dataset, cfg.stage2_steps))
    for i, (name, path, steps) in enumerate(stages):
        recs, skipped = _lm_records(path, vocab, mc.context, cfg.loss_on_prompt)
        tc = tinylm.TrainConfig(lr=cfg.lr, warmup_ratio=cfg.warmup_ratio, schedule=cfg.schedule,
                                batch_size=cfg.batch_size, steps=steps, seed=seed + i,
                                loss_on_prompt=cfg.loss_on_prompt)
        res = tinylm.train(params, mc, recs, tc)
        params = res.params
        tinylm.write_curve_csv(out / f"curve_{name}.csv", res.curve)
        report[name] = {"records": len(recs), "skipped_too_long": skipped, "steps": steps,
                        "final_loss": res.curve[-1][1] if res.curve else None,
                        "mean_answer_nll": tinylm.mean_answer_nll(params, mc, recs[:64])}
    tinylm.save_checkpoint(out / "model.hlm", params, mc)
    _write_json(out / "report.json", report)
    return report


def cmd_finetune_vla(cfg: FinetuneVlaRun, seed: int, out: Path) -> dict:
    if cfg.task not in visfuse.TASKS:
        raise ConfigError(f"task must be one of {sorted(visfuse.TASKS)}")
    base, mc, _, _ = tinylm.load_checkpoint(_need(cfg.model, "model"))
    codecs = partvq.load_codecs(_need(cfg.codecs, "codecs"))
    vocab = _load_vocab(cfg.vocab)
    if vocab.size != mc.vocab_size:
        raise ConfigError(f"vocab size {vocab.size} does not match model ({mc.vocab_size})")
    train = visfuse.make_vla_records(cfg.train_scenes, cfg.task, codecs, vocab, seed, cfg.target_frames, cfg.image_size)
    test = visfuse.make_vla_records(cfg.test_scenes, cfg.task, codecs, vocab, seed + 1, cfg.target_frames,
                                    cfg.image_size)
    acfg = visfuse.AdapterConfig(vis_dim=cfg.vis_dim, patch=cfg.patch, image_size=cfg.image_size,
                                 position_codes=cfg.position_codes, init=cfg.adapter_init, seed=seed)
    adapters = visfuse.init_adapters(mc, acfg)
    fc = visfuse.FinetuneConfig(lr=cfg.lr, warmup_ratio=cfg.warmup_ratio, batch_size=cfg.batch_size,
                                steps=cfg.steps, seed=seed, freeze_vision=cfg.freeze_vision)
    res = visfuse.finetune(base, mc, adapters, acfg, train, vocab, fc)
    acc = visfuse.bearing_accuracy(base, mc, res.adapters, acfg, test, vocab, codecs)
    tinylm.save_checkpoint(out / "model_vla.hlm", base, mc, res.adapters, visfuse.adapter_meta(acfg))
    tinylm.write_curve_csv(out / "curve.csv", res.curve)
    scenes = out / "scenes"
    scenes.mkdir()
    for i, r in enumerate(test[:cfg.save_scenes]):
        visfuse.save_scene(r.image, scenes / f"scene{i:03d}.ppm")
    report = {"task": cfg.task, "held_out_accuracy": acc, "chance": 0.25, "train": len(train), "test": len(test),
              "frozen_blocks_unchanged": res.base_checksum_before == res.base_checksum_after,
              "final_loss": res.curve[-1][1] if res.curve else None}
    _write_json(out / "report.json", report)
    return report


def cmd_generate(cfg: GenerateRun, seed: int, out: Path) -> dict:
    base, mc, adapters, ameta = tinylm.load_checkpoint(_need(cfg.model, "model"))
    if adapters is not None:
        raise ConfigError("generate runs text-only checkpoints; this one carries vision adapters")
    vocab = _load_vocab(cfg.vocab)
    codecs = partvq.load_codecs(_need(cfg.codecs, "codecs")) if cfg.codecs else None
    prompts = [(f"prompt{i:03d}", vocab.encode_text(t), t) for i, t in enumerate(cfg.prompts)]
    if cfg.dataset:
        for qa in augment.read_jsonl(_need(cfg.dataset, "dataset"))[:cfg.limit]:
            prompts.append((f"{qa.clip_id}_t{qa.template_id}", qa.prompt_ids, qa.prompt_text))
    if not prompts:
        raise ConfigError("give 'prompts' or 'dataset'")
    clips_dir = out / "clips"
    clips_dir.mkdir()
    decoded = 0
    with open(out / "generations.jsonl", "w") as fh:
        for i, (name, ids, text) in enumerate(prompts):
            dc = tinylm.DecodeConfig(temperature=cfg.temperature, max_len=cfg.max_len, grammar=cfg.grammar,
                                     seed=derive_seed(seed, "generate", i) % (2 ** 31))
            gen = tinylm.generate(base, mc, ids, vocab, dc)
            row = {"name": name, "prompt": text, "ids": gen, "surface": vocab.render(gen)}
            if codecs is not None:
                try:
                    codes = augment.codes_from_ids(gen, vocab)
                except HvlaError:
                    row["decodable"] = False
                else:
                    row["decodable"] = True
                    seq = partvq.detokenize_sequence(partvq.TokenSequence(codes, cfg.fps), codecs)
                    corpus.save_clip(corpus.ClipRecord(name, seq, None, "high", "generated", 0, {}),
                                     clips_dir / f"{name}.hvla")
                    decoded += 1
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    return {"prompts": len(prompts), "decoded_clips": decoded}


def cmd_retarget(cfg: RetargetRun, seed: int, out: Path) -> dict:
    clips = _corpus(cfg.corpus)
    if cfg.clips:
        clips = [c for c in clips if c.clip_id in set(cfg.clips)]
        if not clips:
            raise MissingArtifactError(f"none of {cfg.clips} found in {cfg.corpus}")
    if cfg.robot in ("g1_like", "human15"):
        skel = retarget.load_builtin(cfg.robot)
    else:
        skel = retarget.RobotSkeleton.load(_need(cfg.robot, "robot"))
    opt = retarget.RetargetOptions(lr=cfg.lr, iters=cfg.iters, refine_iters=cfg.refine_iters)
    summary = {}
    for clip in sorted(clips, key=lambda c: c.clip_id):
        poses, reports = retarget.retarget_sequence(clip.sequence, skel, opt, cfg.smooth, cfg.warm_start)
        retarget.write_pose_csv(out / f"{clip.clip_id}.csv", skel, poses)
        rep = retarget.sequence_report(reports)
        _write_json(out / f"{clip.clip_id}_report.json", rep)
        summary[clip.clip_id] = {k: rep[k] for k in ("frames", "mean_residual_mm", "max_residual_mm")}
    _write_json(out / "report.json", summary)
    return summary


def cmd_eval(cfg: EvalRun, seed: int, out: Path) -> dict:
    preds = {c.clip_id: c for c in _corpus(cfg.pred)}
    gts = {c.clip_id: c for c in _corpus(cfg.gt)}
    common = sorted(set(preds) & set(gts))
    if not common:
        raise MissingArtifactError("no clip ids shared between pred and gt")
    P = [preds[k].sequence for k in common]
    G = [gts[k].sequence for k in common]
    ext = metrics.FeatureExtractor(mode=cfg.extractor, dim=cfg.feature_dim, seed=seed)
    ext.fit(G)
    rep = metrics.evaluate(P, G, ext, cfg.diversity_pairs, seed)
    d = rep.to_dict()
    d["unmatched_pred"] = sorted(set(preds) - set(gts))
    d["unmatched_gt"] = sorted(set(gts) - set(preds))
    _write_json(out / "metrics.json", d)
    (out / "table.txt").write_text(metrics.format_table(rep) + "\n")
    return d


def cmd_stats(cfg: StatsRun, seed: int, out: Path) -> dict:
    manifest = corpus.corpus_stats(_need(cfg.corpus, "corpus")).to_dict()
    _write_json(out / "manifest.json", manifest)
    return manifest


COMMANDS = {
    "synth": (SynthRun, cmd_synth),
    "degrade": (DegradeRun, cmd_degrade),
    "train-vq": (TrainVqRun, cmd_train_vq),
    "tokenize": (TokenizeRun, cmd_tokenize),
    "build-vocab": (BuildVocabRun, cmd_build_vocab),
    "augment": (AugmentRun, cmd_augment),
    "train-lm": (TrainLmRun, cmd_train_lm),
    "finetune-vla": (FinetuneVlaRun, cmd_finetune_vla),
    "generate": (GenerateRun, cmd_generate),
    "retarget": (RetargetRun, cmd_retarget),
    "eval": (EvalRun, cmd_eval),
    "stats": (StatsRun, cmd_stats),
}


def _prepare_out(out: Path, force: bool) -> Path:
    if out.exists() and any(out.iterdir()):
        if not force:
            raise OutputExistsError(f"output directory {out} is not empty (use --force)")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _apply_threads():
    n = os.environ.get("HVLA_THREADS")
    if n:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, n)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hvla", description="Motion tokenization, language modeling and retargeting pipeline.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON config for this stage")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", default=None, help="output directory (default runs/<subcommand>)")
        sp.add_argument("--smoke", action="store_true", help="tiny sizes for quick end-to-end runs")
        sp.add_argument("--force", action="store_true", help="allow a non-empty output directory")
        sp.add_argument("--log-level", default="INFO")
    return ap


def run(argv=None) -> int:
    _apply_threads()
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.INFO),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    cls, fn = COMMANDS[args.command]
    try:
        cfg = load_run_config(cls, args.config, SMOKE.get(args.command) if args.smoke else None, args.command)
        out = _prepare_out(Path(args.out or f"runs/{args.command}"), args.force)
        resolved = {"subcommand": args.command, "seed": args.seed, "smoke": args.smoke,
                    "config": dataclasses.asdict(cfg)}
        _write_json(out / "resolved_config.json", resolved)
        summary = fn(cfg, args.seed, out)
        log.info("%s done: %s", args.command, json.dumps(summary, sort_keys=True, default=str)[:400])
        return 0
    except Exception as exc:  # every failure becomes one parsable line
        code = getattr(exc, "code", None)
        if not isinstance(code, str):
            code = "missing-artifact" if isinstance(exc, FileNotFoundError) else "error"
        if not isinstance(exc, (HvlaError, OSError, ValueError)):
            log.debug("unexpected failure", exc_info=True)
        msg = json.dumps(str(exc))
        print(f"hvla-error code={code} class={type(exc).__name__} message={msg}", file=sys.stderr)
        return EXIT_CODES.get(code, exit_code_for(exc))


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
