"""One-dimensional loss landscape through a distilled student.

Distills a student, then evaluates validation perplexity along the line
theta_1 + beta * (theta_1 - theta_0) where theta_0 is the student's
initialization and theta_1 its distilled weights: beta = -1 recovers the
init exactly, beta = 0 the trained model, and beta > 0 extrapolates past
it. Prints the curve with a terminal sketch. Reuses the demo 02 teacher.

Run from the repository root:  python3 demos/05_loss_landscape.py
"""

import argparse
import importlib.util
import os

import numpy as np

HERE = os.path.dirname(os.path.abspath(__file__))
_spec2 = importlib.util.spec_from_file_location(
    "demo02", os.path.join(HERE, "02_train_and_distill.py")
)
demo02 = importlib.util.module_from_spec(_spec2)
_spec2.loader.exec_module(demo02)

from atkd import Checkpoint, TinyLM, distill, run_landscape


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--steps", type=int, default=300, help="distillation steps")
    ap.add_argument("--points", type=int, default=21)
    ap.add_argument("--out", default=os.path.join(HERE, "out", "landscape"))
    args = ap.parse_args()

    teacher = demo02.shared_teacher()
    spec = demo02.demo_spec(args.steps)

    # theta_0: the student exactly as initialized (seed-owned, reproducible)
    init = TinyLM(spec.student_config.with_seed(0))
    theta0 = Checkpoint(init.config, init.params.copy(), 0, teacher.corpus_hash)

    print(f"distilling student for {args.steps} steps ...")
    theta1, rec = distill(spec, teacher, seed=0)
    print(f"distilled val perplexity {rec.final_ppl:.3f}")

    curve = run_landscape(spec, theta0, theta1, out_dir=args.out, points=args.points)
    ppls = np.array([p for _, p in curve])
    lo, hi = ppls.min(), ppls.max()
    print("\nbeta    val ppl")
    for beta, ppl in curve:
        bar = "#" * (1 + int(40 * (np.log(ppl) - np.log(lo)) / (np.log(hi) - np.log(lo))))
        print(f"{beta:+.2f} {ppl:10.3f}  {bar}")
    print(f"\nbeta=0 equals the distilled model exactly: {dict(curve)[0.0] == rec.final_ppl}")
    print(f"curve written to {os.path.join(args.out, 'landscape.csv')}")


if __name__ == "__main__":
    main()
