import json
import os

import numpy as np
import pytest

from atkd.cli import main
from atkd.decompose import LogitBatch
from atkd.logit_io import write_logit_file

CORPUS_TEXT = "the quick brown fox jumps over the lazy dog. " * 200

CONFIG = """\
corpus = {corpus}
steps = 10
teacher_steps = 25
eval_interval = 5
batch_size = 2
lr = 0.01
warmup_steps = 0
seeds = 0
teacher.d_model = 16
teacher.n_layers = 1
teacher.n_heads = 2
teacher.context_len = 8
student.d_model = 8
student.n_layers = 1
student.n_heads = 2
student.context_len = 8
"""


@pytest.fixture(scope="module")
def ws(tmp_path_factory):
    """Workspace with a corpus, a config file, and a trained teacher."""
    root = tmp_path_factory.mktemp("cli")
    corpus = root / "corpus.txt"
    corpus.write_text(CORPUS_TEXT)
    cfg = root / "run.cfg"
    cfg.write_text(CONFIG.format(corpus=corpus))
    out = root / "runs"
    rc = main(["train-teacher", "--config", str(cfg), "--out-dir", str(out)])
    assert rc == 0
    teacher = out / "teacher_d16L1_seed0.ckpt"
    assert teacher.exists()
    return {"root": root, "cfg": str(cfg), "out": str(out), "teacher": str(teacher)}


class TestTrainingCommands:
    def test_second_teacher_via_seed_override(self, ws):
        rc = main(
            ["train-teacher", "--config", ws["cfg"], "--seed", "1", "--out-dir", ws["out"]]
        )
        assert rc == 0
        assert os.path.exists(os.path.join(ws["out"], "teacher_d16L1_seed1.ckpt"))

    def test_distill(self, ws, tmp_path, capsys):
        out = str(tmp_path / "d")
        rc = main(
            ["distill", "--config", ws["cfg"], "--teacher", ws["teacher"], "--out-dir", out]
        )
        assert rc == 0
        assert "final val perplexity" in capsys.readouterr().out
        assert os.path.exists(os.path.join(out, "records.jsonl"))
        names = os.listdir(out)
        assert any(n.startswith("student_") and n.endswith(".ckpt") for n in names)

    def test_distill_ce_mix_flag_changes_run(self, ws, tmp_path):
        outs = []
        for sub, mix in (("a", None), ("b", "0.7")):
            out = str(tmp_path / sub)
            argv = ["distill", "--config", ws["cfg"], "--teacher", ws["teacher"], "--out-dir", out]
            if mix is not None:
                argv += ["--ce-mix", mix]
            assert main(argv) == 0
            with open(os.path.join(out, "records.jsonl")) as f:
                rec = json.loads(f.readline())
            outs.append(rec)
        assert outs[0]["config"]["ce_mix"] == 0.0
        assert outs[1]["config"]["ce_mix"] == 0.7
        assert outs[0]["final_ppl"] != outs[1]["final_ppl"]

    def test_distill_ce_mix_flag_rejects_negative(self, ws, tmp_path):
        rc = main(
            [
                "distill", "--config", ws["cfg"], "--teacher", ws["teacher"],
                "--out-dir", str(tmp_path / "neg"), "--ce-mix", "-0.5",
            ]
        )
        assert rc == 2

    def test_token_split(self, ws, tmp_path):
        out = str(tmp_path / "ts")
        rc = main(
            ["token-split", "--config", ws["cfg"], "--teacher", ws["teacher"], "--out-dir", out]
        )
        assert rc == 0
        assert os.path.exists(os.path.join(out, "token_split.csv"))

    def test_ablation(self, ws, tmp_path):
        out = str(tmp_path / "ab")
        rc = main(
            ["ablation", "--config", ws["cfg"], "--teacher", ws["teacher"], "--out-dir", out]
        )
        assert rc == 0
        assert os.path.exists(os.path.join(out, "ablation_table.csv"))

    def test_sweep_with_param_flag(self, ws, tmp_path):
        root = ws["root"]
        cfg = root / "sweep.cfg"
        cfg.write_text(
            CONFIG.format(corpus=root / "corpus.txt")
            + "sweep.param = k\nsweep.values = 0.0,1.0\n"
        )
        out = str(tmp_path / "sw")
        rc = main(
            [
                "sweep",
                "--config",
                str(cfg),
                "--teacher",
                ws["teacher"],
                "--param",
                "k",
                "--out-dir",
                out,
            ]
        )
        assert rc == 0
        lines = open(os.path.join(out, "sweep.csv")).read().strip().split("\n")
        assert len(lines) == 3

    def test_sweep_without_experiment_rejected(self, ws, tmp_path, capsys):
        rc = main(
            [
                "sweep",
                "--config",
                ws["cfg"],
                "--teacher",
                ws["teacher"],
                "--out-dir",
                str(tmp_path),
            ]
        )
        assert rc == 2
        assert "sweep" in capsys.readouterr().err

    def test_unc_dist(self, ws, tmp_path):
        second = os.path.join(ws["out"], "teacher_d16L1_seed1.ckpt")
        if not os.path.exists(second):
            main(["train-teacher", "--config", ws["cfg"], "--seed", "1", "--out-dir", ws["out"]])
        out = str(tmp_path / "unc")
        rc = main(
            [
                "unc-dist",
                "--config",
                ws["cfg"],
                "--teacher",
                ws["teacher"],
                "--teacher",
                second,
                "--sample-tokens",
                "64",
                "--grid-points",
                "16",
                "--out-dir",
                out,
            ]
        )
        assert rc == 0
        assert os.path.exists(os.path.join(out, "unc_summary.csv"))

    def test_landscape(self, ws, tmp_path):
        second = os.path.join(ws["out"], "teacher_d16L1_seed1.ckpt")
        if not os.path.exists(second):
            main(["train-teacher", "--config", ws["cfg"], "--seed", "1", "--out-dir", ws["out"]])
        out = str(tmp_path / "land")
        rc = main(
            [
                "landscape",
                "--config",
                ws["cfg"],
                "--theta0",
                ws["teacher"],
                "--theta1",
                second,
                "--points",
                "5",
                "--out-dir",
                out,
            ]
        )
        assert rc == 0
        lines = open(os.path.join(out, "landscape.csv")).read().strip().split("\n")
        assert len(lines) == 6


class TestLogitCommands:
    def write_batch(self, tmp_path, with_student=True):
        rng = np.random.default_rng(0)
        T, C = 32, 9
        student = rng.normal(size=(T, C)) if with_student else None
        batch = LogitBatch(rng.normal(size=(T, C)), student, rng.integers(0, C, size=T))
        path = str(tmp_path / "b.lgt")
        write_logit_file(batch, path)
        return path

    def test_decompose(self, tmp_path, capsys):
        logits = self.write_batch(tmp_path)
        out = str(tmp_path / "report.csv")
        rc = main(["decompose", "--logits", logits, "--out", out, "--k", "0.25"])
        assert rc == 0
        assert "32 tokens" in capsys.readouterr().out
        lines = open(out).read().strip().split("\n")
        assert lines[0] == "token_index,unc,tkd,dkd,kl_total,split"
        assert sum(1 for l in lines[1:] if l.endswith(",hard")) == 8

    def test_decompose_requires_student(self, tmp_path, capsys):
        logits = self.write_batch(tmp_path, with_student=False)
        rc = main(["decompose", "--logits", logits, "--out", str(tmp_path / "r.csv")])
        assert rc == 2
        assert "student" in capsys.readouterr().err

    def test_check_grads_ok(self, tmp_path, capsys):
        rc = main(["check-grads", "--tokens", "16", "--classes", "7", "--seed", "3"])
        assert rc == 0
        out = capsys.readouterr().out
        assert out.count("ok") == 7 and "FAIL" not in out

    def test_check_grads_fail_exit(self, capsys):
        rc = main(["check-grads", "--tokens", "16", "--classes", "7", "--tolerance", "1e-30"])
        assert rc == 1
        assert "FAIL" in capsys.readouterr().out

    def test_check_grads_from_file(self, tmp_path):
        logits = self.write_batch(tmp_path)
        assert main(["check-grads", "--logits", logits]) == 0


class TestExitCodes:
    def test_config_error_is_2(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("steps = 5\n")  # no corpus
        rc = main(["train-teacher", "--config", str(cfg), "--out-dir", str(tmp_path)])
        assert rc == 2
        assert "config error" in capsys.readouterr().err

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_training_divergence_is_3(self, tmp_path, capsys):
        corpus = tmp_path / "c.txt"
        corpus.write_text(CORPUS_TEXT)
        cfg = tmp_path / "diverge.cfg"
        cfg.write_text(
            CONFIG.format(corpus=corpus).replace("lr = 0.01", "lr = 1e39")
        )
        rc = main(["train-teacher", "--config", str(cfg), "--out-dir", str(tmp_path)])
        assert rc == 3
        assert "training error" in capsys.readouterr().err

    def test_missing_corpus_file_is_4(self, tmp_path, capsys):
        cfg = tmp_path / "gone.cfg"
        cfg.write_text("corpus = /nonexistent/gone.txt\n")
        rc = main(["train-teacher", "--config", str(cfg), "--out-dir", str(tmp_path)])
        assert rc == 4
        assert "error" in capsys.readouterr().err

    def test_garbage_checkpoint_is_4(self, ws, tmp_path, capsys):
        bad = tmp_path / "bad.ckpt"
        bad.write_bytes(b"not a checkpoint at all")
        rc = main(
            [
                "distill",
                "--config",
                ws["cfg"],
                "--teacher",
                str(bad),
                "--out-dir",
                str(tmp_path),
            ]
        )
        assert rc == 4
        assert "file format error" in capsys.readouterr().err

    def test_missing_config_file_is_4(self, tmp_path):
        rc = main(
            ["train-teacher", "--config", str(tmp_path / "none.cfg"), "--out-dir", str(tmp_path)]
        )
        assert rc == 4
