"""Hard-token vs easy-token distillation (the token-split experiment).

Each mini-batch is ranked by the teacher's uncertainty; one student trains
only on the hard (high-UnC) half, one only on the easy half, one on all
tokens. The loss is masked rather than the data filtered, so every student
sees identical batches. Reuses the teacher from demo 02 (training it if
needed).

Run from the repository root:  python3 demos/03_token_split.py
"""

import argparse
import importlib.util
import os
import sys

HERE = os.path.dirname(os.path.abspath(__file__))
_spec2 = importlib.util.spec_from_file_location(
    "demo02", os.path.join(HERE, "02_train_and_distill.py")
)
demo02 = importlib.util.module_from_spec(_spec2)
_spec2.loader.exec_module(demo02)

import dataclasses

from atkd import Experiment, run_token_split


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--steps", type=int, default=300, help="distillation steps per arm")
    ap.add_argument("--out", default=os.path.join(HERE, "out", "token_split"))
    args = ap.parse_args()

    teacher = demo02.shared_teacher()
    spec = dataclasses.replace(
        demo02.demo_spec(args.steps), experiment=Experiment.TOKEN_SPLIT
    )

    print(f"running hard / easy / full arms for {args.steps} steps each ...")
    records = run_token_split(spec, teacher, out_dir=args.out)
    print("\narm   final val perplexity")
    for rec in records:
        arm = rec.experiment_id.split(".")[1]
        print(f"{arm:5s} {rec.final_ppl:8.3f}")
    print(f"\nCSV and records written under {args.out}")


if __name__ == "__main__":
    sys.exit(main())
