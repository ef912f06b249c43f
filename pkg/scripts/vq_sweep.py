"""Reconstruction error of the part codebooks as a function of codebook size.

    python3 scripts/vq_sweep.py --sizes 4 16 64 --steps 1000
"""

import argparse

from hvla import corpus, partvq


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[4, 16, 64])
    ap.add_argument("--clips", type=int, default=20)
    ap.add_argument("--steps", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    cfg = corpus.SynthConfig(clips=args.clips, T_range=(30, 60))
    clips = [corpus.synth_clip(i, cfg, args.seed) for i in range(args.clips)]
    held = [corpus.synth_clip(i, cfg, args.seed + 1) for i in range(5)]
    frames = partvq._frames_from(held)
    print("K      train_rec  heldout_rec  reinitialised")
    for K in args.sizes:
        res = partvq.train_vq(clips, partvq.VqConfig(K=K, steps=args.steps, batch_size=128, seed=args.seed))
        print(f"{K:<6d} {res.curve[-1][1]:9.4f}  {partvq.reconstruction_error(frames, res.codecs):11.4f}"
              f"  {res.reinitialized}")


if __name__ == "__main__":
    main()
