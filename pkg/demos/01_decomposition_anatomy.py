"""Per-token anatomy of the distillation divergence on real text.

Trains a small byte-level teacher on the bundled corpus, distills an even
smaller student for a moment, then walks one text window and prints each
position's decomposition: the teacher's uncertainty (UnC, its non-target
mass), the target-confidence term (tkd), the wrong-class-ranking term (dkd),
and the exact identity kl = tkd + unc * dkd. Ends by splitting the window
into hard/easy halves by UnC rank and writing the per-token report CSV.

Run from the repository root:  python3 demos/01_decomposition_anatomy.py
"""

import argparse
import os

import numpy as np

from atkd import (
    ByteVocab,
    ExperimentSpec,
    LogitBatch,
    ModelConfig,
    batch_decompose,
    distill,
    load_corpus,
    rank_and_split,
    split_tokens,
    train_teacher,
    write_report,
)

HERE = os.path.dirname(os.path.abspath(__file__))
CORPUS = os.path.join(HERE, os.pardir, "data", "sample_corpus.txt")


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--steps", type=int, default=300, help="teacher training steps")
    ap.add_argument("--out", default=os.path.join(HERE, "out"), help="output directory")
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)

    data = load_corpus(CORPUS)
    vocab = ByteVocab.from_bytes(data)
    spec = ExperimentSpec(
        corpus_path=CORPUS,
        teacher_config=ModelConfig(
            vocab_size=vocab.size, d_model=32, n_layers=2, n_heads=2, context_len=32
        ),
        student_config=ModelConfig(
            vocab_size=vocab.size, d_model=16, n_layers=1, n_heads=2, context_len=32
        ),
        steps=args.steps,
        eval_interval=args.steps,
        batch_size=16,
        lr=3e-4,
        warmup_steps=50,
        seeds=(0,),
    )

    print(f"training d32 teacher for {args.steps} steps ...")
    teacher = train_teacher(spec, seed=0)
    print(f"distilling d16 student for {args.steps // 2} steps ...")
    import dataclasses

    student_ck, rec = distill(
        dataclasses.replace(spec, steps=max(1, args.steps // 2)), teacher, seed=0
    )
    print(f"student final val perplexity {rec.final_ppl:.3f}\n")

    tokens = vocab.encode(data)
    train, _ = split_tokens(tokens, spec.train_frac)
    window = train[1000 : 1000 + 33]
    inputs, targets = window[None, :-1], window[1:]

    t_logits = teacher.model().forward(inputs).reshape(-1, vocab.size)
    s_logits = student_ck.model().forward(inputs).reshape(-1, vocab.size)
    batch = LogitBatch(t_logits, s_logits, targets)
    d = batch_decompose(batch)

    text = vocab.decode(targets).decode("ascii", errors="replace")
    print("pos  char   unc     tkd      dkd      kl_total  tkd+unc*dkd")
    for i in range(0, 32, 2):
        c = text[i] if text[i] != "\n" else "\\n"
        recon = d.tkd[i] + d.unc[i] * d.dkd[i]
        print(
            f"{i:3d}  {c!r:5s} {d.unc[i]:.4f}  {d.tkd[i]:8.5f} {d.dkd[i]:8.5f} "
            f"{d.kl_total[i]:9.6f} {recon:12.6f}"
        )
    gap = np.abs(d.kl_total - (d.tkd + d.unc * d.dkd)).max()
    print(f"\nmax identity gap over the window: {gap:.2e}")

    split = rank_and_split(d.unc, batch.mask, 0.5)
    hard_chars = "".join(sorted({text[i] for i in split.hard_indices}))
    easy_chars = "".join(sorted({text[i] for i in split.easy_indices}))
    print(f"hard (high-UnC) target chars: {hard_chars!r}")
    print(f"easy (low-UnC)  target chars: {easy_chars!r}")

    report = os.path.join(args.out, "window_report.csv")
    write_report(d, split, report)
    print(f"per-token report written to {report}")


if __name__ == "__main__":
    main()
