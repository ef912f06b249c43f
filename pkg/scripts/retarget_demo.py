"""Retarget a synthetic clip onto the bundled skeletons and print per-skeleton residuals.

    python3 scripts/retarget_demo.py --family walk --frames 60 --out runs/retarget_demo
"""

import argparse
import json
import time
from pathlib import Path

from hvla import corpus, retarget


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--family", default="walk", choices=corpus.FAMILIES)
    ap.add_argument("--frames", type=int, default=60)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--iters", type=int, default=300)
    ap.add_argument("--smooth", type=float, default=0.0)
    ap.add_argument("--out", default="runs/retarget_demo")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    clip = corpus.generate_clip(args.family, {"T": args.frames}, seed=args.seed)
    summary = {}
    for name in ("human15", "g1_like"):
        sk = retarget.load_builtin(name)
        t0 = time.perf_counter()
        poses, reports = retarget.retarget_sequence(clip.sequence, sk, retarget.RetargetOptions(iters=args.iters),
                                                    smooth=args.smooth)
        retarget.write_pose_csv(out / f"{name}.csv", sk, poses)
        rep = retarget.sequence_report(reports)
        rep.pop("per_frame")
        rep["seconds"] = round(time.perf_counter() - t0, 1)
        summary[name] = rep
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    for name, rep in summary.items():
        print(f"{name:8s} mean {rep['mean_residual_mm']:7.3f} mm  max {rep['max_residual_mm']:7.3f} mm  "
              f"{rep['seconds']:.1f}s")


if __name__ == "__main__":
    main()
