"""Teacher uncertainty as a function of model size.

Trains two teachers of different widths to the same step budget, evaluates
both on the same fixed sample of corpus positions, and compares their UnC
(non-target mass) distributions: kernel-density CSVs plus medians. Larger
teachers are generally more confident, which is the capability-gap effect
adaptive distillation leans on.

Run from the repository root:  python3 demos/04_unc_across_sizes.py
"""

import argparse
import os

import numpy as np

from atkd import (
    ByteVocab,
    ExperimentSpec,
    ModelConfig,
    load_corpus,
    run_unc_dist,
    train_teacher,
)

HERE = os.path.dirname(os.path.abspath(__file__))
CORPUS = os.path.join(HERE, os.pardir, "data", "sample_corpus.txt")


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--steps", type=int, default=300, help="training steps per teacher")
    ap.add_argument("--out", default=os.path.join(HERE, "out", "unc_dist"))
    args = ap.parse_args()

    vocab = ByteVocab.from_bytes(load_corpus(CORPUS))
    sizes = [(16, 1, 2), (64, 3, 4)]
    teachers = []
    spec = None
    for d, layers, heads in sizes:
        cfg = ModelConfig(
            vocab_size=vocab.size, d_model=d, n_layers=layers, n_heads=heads, context_len=32
        )
        spec = ExperimentSpec(
            corpus_path=CORPUS,
            teacher_config=cfg,
            student_config=cfg,
            steps=args.steps,
            eval_interval=args.steps,
            batch_size=16,
            lr=3e-4,
            warmup_steps=50,
            seeds=(0,),
        )
        print(f"training d{d}L{layers} teacher ...")
        teachers.append(train_teacher(spec, seed=0))

    summary = run_unc_dist(spec, teachers, args.out, sample_tokens=10_000)
    print("\nteacher    params   median UnC")
    for label, params, median in summary:
        print(f"{label:10s} {params:8d}   {median:.4f}")
    smaller, larger = summary[0][2], summary[-1][2]
    trend = "lower" if larger < smaller else "NOT lower"
    print(f"\nthe larger teacher's median UnC is {trend} ({larger:.4f} vs {smaller:.4f})")
    print(f"density curves written under {args.out}")

    # quick terminal sketch of the two densities
    for label, _, _ in summary:
        path = os.path.join(args.out, f"unc_kde_{label}.csv")
        rows = [
            line.split(",")
            for line in open(path).read().strip().split("\n")
            if not line.startswith("#") and not line.startswith("x,")
        ]
        dens = np.array([float(r[1]) for r in rows])
        peaks = (dens / dens.max() * 8).astype(int)
        print(f"{label:10s} " + "".join(" .:-=+*#@"[min(p, 8)] for p in peaks[::4]))


if __name__ == "__main__":
    main()
