"""Experiment orchestration: teacher training, distillation, and the analysis
runners (token splits, objective ablations, sweeps, UnC distributions, loss
landscapes).

Every runner is deterministic given an :class:`ExperimentSpec` and a seed:
batches are drawn from a seed-owned generator, models initialize from seeded
configs, and outputs are written in a fixed order. Re-running a spec
reproduces RunRecords and CSVs bitwise, except for the ``wall_time`` field,
which is informational and excluded from reproducibility comparisons
(:meth:`RunRecord.reproducible_json`).

Distillation trains on the KD loss only. Ground-truth cross-entropy can be
mixed in with ``ce_mix`` (weight w: total = kd + w * ce); the default of 0
matches the assumption that no CE term is used.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .checkpoint import Checkpoint
from .corpus import ByteVocab, corpus_sha256, load_corpus, sample_windows, split_tokens
from .decompose import LogitBatch, _log_parts
from .errors import ConfigError, InvalidInputError, TrainingDivergedError, TrainingFailedError
from .gradients import loss_grad
from .model import Adam, ModelConfig, TinyLM, interpolate, perplexity
from .objective import Mode, ObjectiveConfig, rank_and_split
from .logit_io import fmt_float, kde_emit

__all__ = [
    "Experiment",
    "SweepGrid",
    "ExperimentSpec",
    "RunRecord",
    "spec_from_config",
    "parse_config_file",
    "train_teacher",
    "distill",
    "distill_arms",
    "run_token_split",
    "run_objective_ablation",
    "run_sweep",
    "run_unc_dist",
    "run_landscape",
    "TEACHER_LADDER",
]

# Teacher size ladder standing in for the paper's model-size axis. Depth and
# heads grow with width; the largest rung equals the default teacher config.
TEACHER_LADDER = ((16, 2, 2), (32, 2, 2), (64, 3, 4), (128, 4, 4))  # (d_model, layers, heads)

# Default shapes are calibrated so the bundled-corpus analyses reproduce on a
# small CPU box: the teacher is ~40x the student's parameter count, and the
# teacher's default step budget (1200) leaves it moderately sharp - confident
# on common transitions, uncertain on rare ones - which is the regime where
# non-target (dark-knowledge) matching visibly helps. Training the teacher
# much longer makes its non-target tails collapse into sampling noise at this
# corpus size, and the decomposition-based objectives stop paying off.
_DEFAULT_TEACHER = dict(d_model=128, n_layers=4, n_heads=4, context_len=32)
_DEFAULT_STUDENT = dict(d_model=16, n_layers=2, n_heads=2, context_len=32)
_DEFAULT_TEACHER_STEPS = 1200


class Experiment(Enum):
    DISTILL = "distill"
    TOKEN_SPLIT = "token_split"
    OBJECTIVE_ABLATION = "objective_ablation"
    ALPHA_SWEEP = "alpha_sweep"
    K_SWEEP = "k_sweep"
    LAMBDA_SWEEP = "lambda_sweep"
    UNC_DIST = "unc_dist"
    LANDSCAPE = "landscape"

    @classmethod
    def parse(cls, text: str) -> "Experiment":
        key = str(text).strip().lower().replace("-", "_")
        for e in cls:
            if e.value == key:
                return e
        known = ", ".join(e.value for e in cls)
        raise ConfigError(f"unknown experiment {text!r}; known: {known}")


_SWEEP_PARAMS = ("k_ratio", "lam", "alpha", "teacher_size")
_SWEEP_DEFAULTS = {
    Experiment.K_SWEEP: ("k_ratio", tuple(round(i / 10, 1) for i in range(11))),
    Experiment.LAMBDA_SWEEP: ("lam", tuple(round(i / 10, 1) for i in range(11))),
    Experiment.ALPHA_SWEEP: ("alpha", (0.0, 0.25, 0.5, 0.75, 1.0)),
}
_SWEEP_EXPERIMENTS = tuple(_SWEEP_DEFAULTS)


@dataclass(frozen=True)
class SweepGrid:
    """One swept parameter and its grid values."""

    parameter: str
    values: tuple[float, ...]

    def __post_init__(self):
        name = {"lambda": "lam", "k": "k_ratio"}.get(self.parameter, self.parameter)
        object.__setattr__(self, "parameter", name)
        if name not in _SWEEP_PARAMS:
            raise ConfigError(f"sweep parameter must be one of {_SWEEP_PARAMS}, got {name!r}")
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise ConfigError("sweep needs at least one value")
        if name in ("k_ratio", "lam", "alpha") and not all(0.0 <= v <= 1.0 for v in vals):
            raise ConfigError(f"{name} sweep values must lie in [0, 1], got {vals}")
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class ExperimentSpec:
    """Declarative description of one harness run."""

    corpus_path: str
    teacher_config: ModelConfig
    student_config: ModelConfig
    objective: ObjectiveConfig = ObjectiveConfig()
    experiment: Experiment = Experiment.DISTILL
    steps: int = 3000
    teacher_steps: int | None = _DEFAULT_TEACHER_STEPS
    eval_interval: int = 300
    batch_size: int = 16
    lr: float = 3e-4
    warmup_steps: int = 100
    train_frac: float = 0.9
    seeds: tuple[int, ...] = (0, 1, 2)
    sweep: SweepGrid | None = None
    ce_mix: float = 0.0

    def __post_init__(self):
        if isinstance(self.experiment, str):
            object.__setattr__(self, "experiment", Experiment.parse(self.experiment))
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")
        if self.teacher_steps is not None and self.teacher_steps < 1:
            raise ConfigError(f"teacher_steps must be >= 1, got {self.teacher_steps}")
        if self.eval_interval < 1:
            raise ConfigError(f"eval_interval must be >= 1, got {self.eval_interval}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.lr > 0 or not math.isfinite(self.lr):
            raise ConfigError(f"lr must be positive and finite, got {self.lr}")
        if self.warmup_steps < 0:
            raise ConfigError(f"warmup_steps must be >= 0, got {self.warmup_steps}")
        if not 0.0 < self.train_frac < 1.0:
            raise ConfigError(f"train_frac must be in (0, 1), got {self.train_frac}")
        if self.ce_mix < 0.0:
            raise ConfigError(f"ce_mix must be >= 0, got {self.ce_mix}")
        seeds = tuple(int(s) for s in self.seeds)
        if not seeds:
            raise ConfigError("need at least one seed")
        object.__setattr__(self, "seeds", seeds)
        if self.teacher_config.vocab_size != self.student_config.vocab_size:
            raise ConfigError("teacher and student must share the corpus vocabulary")
        if self.student_config.context_len > self.teacher_config.context_len:
            raise ConfigError("student context_len cannot exceed the teacher's")
        if self.sweep is not None:
            if self.experiment in _SWEEP_DEFAULTS:
                want = _SWEEP_DEFAULTS[self.experiment][0]
                if self.sweep.parameter != want:
                    raise ConfigError(
                        f"{self.experiment.value} sweeps {want}, not {self.sweep.parameter}"
                    )
            elif self.experiment is not Experiment.UNC_DIST:
                raise ConfigError(
                    f"experiment {self.experiment.value} does not take a sweep grid"
                )

    def sweep_grid(self) -> SweepGrid:
        if self.sweep is not None:
            return self.sweep
        if self.experiment not in _SWEEP_DEFAULTS:
            raise ConfigError(f"experiment {self.experiment.value} has no sweep defaults")
        return SweepGrid(*_SWEEP_DEFAULTS[self.experiment])


@dataclass
class RunRecord:
    """Outcome of one training run, serialized as one JSONL line."""

    experiment_id: str
    seed: int
    config: dict
    eval_steps: list[int]
    val_ppl: list[float]
    final_ppl: float
    wall_time: float
    loss_first: float | None = None

    def __post_init__(self):
        if list(self.eval_steps) != sorted(set(int(s) for s in self.eval_steps)):
            raise InvalidInputError("eval_steps must be strictly increasing")
        if len(self.eval_steps) != len(self.val_ppl):
            raise InvalidInputError("eval_steps and val_ppl lengths differ")
        if any(p < 1.0 for p in self.val_ppl) or self.final_ppl < 1.0:
            raise InvalidInputError("perplexity below 1 indicates a broken evaluation")

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True, separators=(",", ":"))

    def reproducible_json(self) -> str:
        """Serialization with the informational wall_time field removed."""
        d = dataclasses.asdict(self)
        del d["wall_time"]
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "RunRecord":
        return cls(**json.loads(line))


# ---------------------------------------------------------------------------
# config files


def parse_config_file(path: str) -> dict[str, str]:
    """Line-oriented `key = value` file; '#' starts a comment; blanks ignored."""
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
            key, value = line.split("=", 1)
            key = key.strip()
            if not key:
                raise ConfigError(f"{path}:{lineno}: empty key")
            if key in out:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            out[key] = value.strip()
    return out


_SPEC_INT_KEYS = {"steps", "teacher_steps", "eval_interval", "batch_size", "warmup_steps"}
_SPEC_FLOAT_KEYS = {"lr", "train_frac", "ce_mix"}
_MODEL_KEYS = {"d_model", "n_layers", "n_heads", "context_len", "seed"}
_OBJECTIVE_KEYS = {"mode", "k_ratio", "lam", "lambda", "alpha"}


def _parse_number(key: str, text: str, kind):
    try:
        return kind(text)
    except ValueError as e:
        raise ConfigError(f"config key {key}={text!r}: {e}") from e


def spec_from_config(
    mapping: dict[str, str],
    *,
    seed_override: int | None = None,
    experiment: Experiment | str | None = None,
) -> ExperimentSpec:
    """Build a full spec from flat key=value pairs.

    Recognized keys: ``corpus`` (required), ``experiment``, ``steps``,
    ``teacher_steps``, ``eval_interval``, ``batch_size``, ``lr``,
    ``warmup_steps``, ``train_frac``, ``seeds`` (comma list), ``ce_mix``,
    ``teacher.<field>`` / ``student.<field>`` for ModelConfig fields,
    ``objective.<field>`` for ObjectiveConfig fields, and ``sweep.param`` /
    ``sweep.values`` (comma list). vocab_size is derived from the corpus.
    """
    mapping = dict(mapping)
    if "corpus" not in mapping:
        raise ConfigError("config must name a corpus (corpus=path/to/file)")
    corpus_path = mapping.pop("corpus")
    data = load_corpus(corpus_path)
    vocab_size = ByteVocab.from_bytes(data).size

    teacher_kw = dict(_DEFAULT_TEACHER)
    student_kw = dict(_DEFAULT_STUDENT)
    objective_kw: dict[str, object] = {}
    spec_kw: dict[str, object] = {}
    sweep_param = None
    sweep_values = None

    for key, value in mapping.items():
        if key in _SPEC_INT_KEYS:
            spec_kw[key] = _parse_number(key, value, int)
        elif key in _SPEC_FLOAT_KEYS:
            spec_kw[key] = _parse_number(key, value, float)
        elif key == "seeds":
            spec_kw["seeds"] = tuple(
                _parse_number(key, v, int) for v in value.split(",") if v.strip()
            )
        elif key == "experiment":
            spec_kw["experiment"] = Experiment.parse(value)
        elif key.startswith(("teacher.", "student.")):
            side, _, fieldname = key.partition(".")
            if fieldname not in _MODEL_KEYS:
                raise ConfigError(f"unknown config key {key!r}")
            target = teacher_kw if side == "teacher" else student_kw
            target[fieldname] = _parse_number(key, value, int)
        elif key.startswith("objective."):
            fieldname = key.split(".", 1)[1]
            if fieldname not in _OBJECTIVE_KEYS:
                raise ConfigError(f"unknown config key {key!r}")
            if fieldname == "mode":
                objective_kw["mode"] = Mode.parse(value)
            else:
                objective_kw[{"lambda": "lam"}.get(fieldname, fieldname)] = _parse_number(
                    key, value, float
                )
        elif key == "sweep.param":
            sweep_param = value
        elif key == "sweep.values":
            sweep_values = tuple(
                _parse_number(key, v, float) for v in value.split(",") if v.strip()
            )
        else:
            raise ConfigError(f"unknown config key {key!r}")

    if experiment is not None:
        spec_kw["experiment"] = (
            experiment if isinstance(experiment, Experiment) else Experiment.parse(experiment)
        )
    if seed_override is not None:
        spec_kw["seeds"] = (int(seed_override),)
    sweep = None
    if sweep_param is not None or sweep_values is not None:
        if sweep_param is None or sweep_values is None:
            raise ConfigError("sweep.param and sweep.values must be given together")
        sweep = SweepGrid(sweep_param, sweep_values)

    return ExperimentSpec(
        corpus_path=corpus_path,
        teacher_config=ModelConfig(vocab_size=vocab_size, **teacher_kw),
        student_config=ModelConfig(vocab_size=vocab_size, **student_kw),
        objective=ObjectiveConfig(**objective_kw),
        sweep=sweep,
        **spec_kw,
    )


# ---------------------------------------------------------------------------
# shared training plumbing


def _load_data(spec: ExperimentSpec):
    data = load_corpus(spec.corpus_path)
    vocab = ByteVocab.from_bytes(data)
    if vocab.size != spec.teacher_config.vocab_size:
        raise ConfigError(
            f"corpus has {vocab.size} distinct bytes but configs declare "
            f"vocab_size={spec.teacher_config.vocab_size}"
        )
    tokens = vocab.encode(data)
    train, val = split_tokens(tokens, spec.train_frac)
    return vocab, train, val, corpus_sha256(data)


def _lr_at(spec: ExperimentSpec, t: int) -> float:
    if spec.warmup_steps == 0:
        return spec.lr
    return spec.lr * min(1.0, (t + 1) / spec.warmup_steps)


def _ce_loss_grad(flat_logits: np.ndarray, targets: np.ndarray, mask: np.ndarray):
    """Mean next-token cross-entropy over mask-true rows, with its logit grad."""
    n = int(np.count_nonzero(mask))
    m = np.max(flat_logits, axis=-1, keepdims=True)
    z = flat_logits - m
    ez = np.exp(z)
    logz = np.log(ez.sum(axis=-1, keepdims=True))
    rows = np.arange(flat_logits.shape[0])
    logp_t = z[rows, targets] - logz[:, 0]
    loss = float(-np.sum(logp_t[mask]) / n)
    grad = ez / ez.sum(axis=-1, keepdims=True)
    grad[rows, targets] -= 1.0
    grad[~mask] = 0.0
    grad *= 1.0 / n
    return loss, grad


def _eval_points(steps: int, interval: int) -> list[int]:
    pts = {0, steps}
    pts.update(range(interval, steps + 1, interval))
    return sorted(pts)


def _teacher_unc(teacher_logits: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Per-token teacher non-target mass, identical to batch_decompose's unc."""
    return np.exp(_log_parts(teacher_logits, targets).logp_nt)


def _arm_mask(arm: str, unc: np.ndarray, k_ratio: float) -> np.ndarray:
    """Restrict the loss to one side of the per-batch UnC split."""
    full = np.ones(unc.shape[0], dtype=bool)
    if arm == "full":
        return full
    split = rank_and_split(unc, full, k_ratio)
    mask = np.zeros(unc.shape[0], dtype=bool)
    mask[split.hard_indices if arm == "hard" else split.easy_indices] = True
    return mask


def _config_echo(spec: ExperimentSpec, objective: ObjectiveConfig, extra: dict | None = None):
    cfg = {
        "teacher": dataclasses.asdict(spec.teacher_config),
        "student": dataclasses.asdict(spec.student_config),
        "objective": {
            "mode": objective.mode.value,
            "k_ratio": objective.k_ratio,
            "lam": objective.lam,
            "alpha": objective.alpha,
        },
        "steps": spec.steps,
        "batch_size": spec.batch_size,
        "lr": spec.lr,
        "warmup_steps": spec.warmup_steps,
        "eval_interval": spec.eval_interval,
        "ce_mix": spec.ce_mix,
    }
    if extra:
        cfg.update(extra)
    return cfg


def _append_records(out_dir: str | None, records: list[RunRecord]) -> None:
    if out_dir is None:
        return
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "records.jsonl"), "a", newline="\n") as f:
        for r in records:
            f.write(r.to_json() + "\n")


def _write_csv(out_dir: str, name: str, header: str, rows: list[str], comments=()) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    with open(path, "w", newline="\n") as f:
        for c in comments:
            f.write(f"# {c}\n")
        f.write(header + "\n")
        for row in rows:
            f.write(row + "\n")
    return path


# ---------------------------------------------------------------------------
# teacher training


def train_teacher(
    spec: ExperimentSpec,
    *,
    seed: int | None = None,
    config: ModelConfig | None = None,
    out_dir: str | None = None,
) -> Checkpoint:
    """Supervised next-token training; returns (and optionally saves) a checkpoint.

    The final validation perplexity must come in strictly below the uniform
    baseline (vocab_size); anything else means the run failed to learn and
    raises TrainingFailedError rather than silently handing back a bad teacher.
    """
    seed = spec.seeds[0] if seed is None else int(seed)
    vocab, train, val, digest = _load_data(spec)
    cfg = (config if config is not None else spec.teacher_config).with_seed(seed)
    if cfg.vocab_size != vocab.size:
        raise ConfigError(f"teacher config vocab {cfg.vocab_size} != corpus {vocab.size}")
    steps = spec.teacher_steps if spec.teacher_steps is not None else spec.steps

    t_start = time.perf_counter()
    model = TinyLM(cfg)
    opt = Adam(model.param_count, lr=spec.lr)
    rng = np.random.default_rng(seed)
    eval_at = _eval_points(steps, spec.eval_interval)
    series: list[float] = []
    ctx = cfg.context_len
    all_true = np.ones(spec.batch_size * ctx, dtype=bool)

    if 0 in eval_at:
        series.append(perplexity(model, val))
    for t in range(steps):
        w = sample_windows(train, spec.batch_size, ctx + 1, rng)
        logits, cache = model._forward(w[:, :-1])
        flat = logits.reshape(-1, cfg.vocab_size)
        loss, grad = _ce_loss_grad(flat, w[:, 1:].ravel(), all_true)
        if not math.isfinite(loss):
            raise TrainingDivergedError(f"non-finite loss at step {t + 1}", step=t + 1)
        gp = model._backward(cache, grad.reshape(w.shape[0], ctx, cfg.vocab_size))
        opt.step(model, gp, lr=_lr_at(spec, t))
        if (t + 1) in eval_at:
            series.append(perplexity(model, val))
    final = series[-1]
    if not final < vocab.size:
        raise TrainingFailedError(
            f"teacher val perplexity {final:.3f} is not below the uniform "
            f"baseline {vocab.size}"
        )

    ckpt = Checkpoint(config=cfg, params=model.params.copy(), step_count=steps, corpus_hash=digest)
    record = RunRecord(
        experiment_id=f"train_teacher.d{cfg.d_model}L{cfg.n_layers}.seed{seed}",
        seed=seed,
        config=_config_echo(spec, spec.objective, {"role": "teacher", "steps": steps}),
        eval_steps=eval_at,
        val_ppl=series,
        final_ppl=final,
        wall_time=time.perf_counter() - t_start,
    )
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        ckpt.save(os.path.join(out_dir, f"teacher_d{cfg.d_model}L{cfg.n_layers}_seed{seed}.ckpt"))
        _append_records(out_dir, [record])
    return ckpt


# ---------------------------------------------------------------------------
# distillation


def distill_arms(
    spec: ExperimentSpec,
    teacher: Checkpoint,
    *,
    arms: dict,
    seed: int | None = None,
    out_dir: str | None = None,
    save_checkpoints: bool = False,
) -> dict[str, tuple[Checkpoint, RunRecord]]:
    """Distill several students against one frozen teacher in a single pass.

    ``arms`` maps an arm name to ``(objective, mask_arm)`` or
    ``(objective, mask_arm, experiment_id)``; a ``mask_arm`` of hard/easy
    restricts the loss per batch to that side of the teacher-UnC split (loss
    masking, not data filtering, so batch statistics stay comparable).

    The batch sequence is a pure function of ``seed``, so every arm sees
    exactly the batches a standalone ``distill`` call would draw, and the
    teacher forward pass is computed once per batch and shared. Each arm's
    trained parameters and perplexity series are therefore bit-for-bit equal
    to running ``distill`` once per arm; the group just avoids re-paying the
    teacher. ``wall_time`` on every record is the wall clock of the whole
    group (the true cost of producing it). The teacher parameter hash is
    asserted unchanged.
    """
    if not arms:
        raise ConfigError("distill_arms needs at least one arm")
    seed = spec.seeds[0] if seed is None else int(seed)
    plan: dict[str, tuple[ObjectiveConfig, str, str]] = {}
    for name, entry in arms.items():
        if len(entry) == 2:
            obj, mask_arm = entry
            exp_id = f"{spec.experiment.value}.{name}.seed{seed}"
        else:
            obj, mask_arm, exp_id = entry
        if mask_arm not in ("full", "hard", "easy"):
            raise ConfigError(f"mask_arm must be full/hard/easy, got {mask_arm!r}")
        plan[str(name)] = (obj, mask_arm, exp_id)

    vocab, train, val, digest = _load_data(spec)
    if teacher.config.vocab_size != vocab.size:
        raise ConfigError(
            f"teacher checkpoint vocab {teacher.config.vocab_size} != corpus {vocab.size}"
        )
    s_cfg = spec.student_config.with_seed(seed)
    if s_cfg.context_len > teacher.config.context_len:
        raise ConfigError("student context_len cannot exceed the teacher's")

    t_start = time.perf_counter()
    hash_before = teacher.param_hash()
    t_model = teacher.model()
    students = {name: (TinyLM(s_cfg), Adam(TinyLM(s_cfg).param_count, lr=spec.lr)) for name in plan}
    rng = np.random.default_rng(seed)
    eval_at = _eval_points(spec.steps, spec.eval_interval)
    series: dict[str, list[float]] = {name: [] for name in plan}
    loss_first: dict[str, float | None] = {name: None for name in plan}
    ctx = s_cfg.context_len
    V = vocab.size
    need_unc = any(mask_arm != "full" for _, mask_arm, _ in plan.values())

    if 0 in eval_at:
        for name, (student, _) in students.items():
            series[name].append(perplexity(student, val))
    for t in range(spec.steps):
        w = sample_windows(train, spec.batch_size, ctx + 1, rng)
        inputs = w[:, :-1]
        targets = w[:, 1:].ravel()
        t_logits = t_model.forward(inputs).reshape(-1, V)
        unc = _teacher_unc(t_logits, targets) if need_unc else None
        lr_t = _lr_at(spec, t)
        for name, (obj, mask_arm, _) in plan.items():
            student, opt = students[name]
            s_logits, cache = student._forward(inputs)
            s_flat = s_logits.reshape(-1, V)
            mask = None if mask_arm == "full" else _arm_mask(mask_arm, unc, obj.k_ratio)
            batch = LogitBatch(t_logits, s_flat, targets, mask)
            loss, glog = loss_grad(batch, obj)
            if spec.ce_mix > 0.0:
                ce_loss, ce_grad = _ce_loss_grad(s_flat, targets, batch.mask)
                loss = loss + spec.ce_mix * ce_loss
                glog = glog + spec.ce_mix * ce_grad
            if t == 0:
                loss_first[name] = loss
            if not math.isfinite(loss):
                where = f" in arm {name!r}" if len(plan) > 1 else ""
                raise TrainingDivergedError(
                    f"non-finite loss{where} at step {t + 1}", step=t + 1
                )
            gp = student._backward(cache, glog.reshape(w.shape[0], ctx, V))
            opt.step(student, gp, lr=lr_t)
        if (t + 1) in eval_at:
            for name, (student, _) in students.items():
                series[name].append(perplexity(student, val))

    if teacher.param_hash() != hash_before:
        raise InvalidInputError("teacher parameters changed during distillation")
    wall = time.perf_counter() - t_start
    out: dict[str, tuple[Checkpoint, RunRecord]] = {}
    records = []
    for name, (obj, mask_arm, exp_id) in plan.items():
        student, _ = students[name]
        ckpt = Checkpoint(
            config=s_cfg, params=student.params.copy(), step_count=spec.steps, corpus_hash=digest
        )
        record = RunRecord(
            experiment_id=exp_id,
            seed=seed,
            config=_config_echo(spec, obj, {"mask_arm": mask_arm, "role": "student"}),
            eval_steps=eval_at,
            val_ppl=series[name],
            final_ppl=series[name][-1],
            wall_time=wall,
            loss_first=loss_first[name],
        )
        out[name] = (ckpt, record)
        records.append(record)
    if out_dir is not None:
        _append_records(out_dir, records)
        if save_checkpoints:
            os.makedirs(out_dir, exist_ok=True)
            for name, (_, _, exp_id) in plan.items():
                safe = exp_id.replace("/", "_").replace("=", "")
                out[name][0].save(os.path.join(out_dir, f"student_{safe}.ckpt"))
    return out


def distill(
    spec: ExperimentSpec,
    teacher: Checkpoint,
    *,
    seed: int | None = None,
    objective: ObjectiveConfig | None = None,
    mask_arm: str = "full",
    experiment_id: str | None = None,
    out_dir: str | None = None,
    save_checkpoint: bool = False,
) -> tuple[Checkpoint, RunRecord]:
    """Distill one student against a frozen teacher.

    ``mask_arm`` restricts the loss per batch to the hard/easy side of the
    teacher-UnC split (loss masking, not data filtering, so batch statistics
    stay comparable). The teacher parameter hash is asserted unchanged.
    """
    seed = spec.seeds[0] if seed is None else int(seed)
    obj = spec.objective if objective is None else objective
    exp_id = experiment_id or f"{spec.experiment.value}.{obj.mode.value}.seed{seed}"
    result = distill_arms(
        spec,
        teacher,
        arms={"run": (obj, mask_arm, exp_id)},
        seed=seed,
        out_dir=out_dir,
        save_checkpoints=save_checkpoint,
    )
    return result["run"]


def _distill_group_job(args):
    spec, teacher, seed, arms = args
    result = distill_arms(spec, teacher, seed=seed, arms=arms)
    return [result[name][1] for name in arms]


def _run_job_groups(groups, jobs: int) -> dict[str, RunRecord]:
    """Run one distill_arms group per (seed) and index records by experiment_id.

    Groups are the parallelism unit: every arm inside a group shares its
    teacher forward passes, so splitting them across workers would only buy
    back what the sharing already saved.
    """
    if jobs <= 1 or len(groups) <= 1:
        batches = [_distill_group_job(g) for g in groups]
    else:
        # results are gathered in submission order, so parallelism cannot
        # reorder anything; each job owns its model state and writes nothing
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            batches = list(pool.map(_distill_group_job, groups))
    return {r.experiment_id: r for batch in batches for r in batch}


# ---------------------------------------------------------------------------
# experiment runners


def run_token_split(
    spec: ExperimentSpec, teacher: Checkpoint, out_dir: str | None = None, jobs: int = 1
) -> list[RunRecord]:
    """Hard-only / easy-only / full-mask ForwardKL students, per seed."""
    objective = ObjectiveConfig(mode=Mode.FORWARD_KL, k_ratio=spec.objective.k_ratio)
    arms = ("hard", "easy", "full")
    groups = [
        (
            spec,
            teacher,
            seed,
            {arm: (objective, arm, f"token_split.{arm}.seed{seed}") for arm in arms},
        )
        for seed in spec.seeds
    ]
    by_id = _run_job_groups(groups, jobs)
    records = [by_id[f"token_split.{arm}.seed{seed}"] for arm in arms for seed in spec.seeds]
    _append_records(out_dir, records)
    if out_dir is not None:
        rows = [
            f"{r.experiment_id.split('.')[1]},{r.seed},{fmt_float(r.final_ppl)}"
            for r in records
        ]
        _write_csv(out_dir, "token_split.csv", "arm,seed,final_ppl", rows)
    return records


_ABLATION_MODES = (Mode.TKD_ONLY, Mode.DKD_ONLY, Mode.TKD_PLUS_DKD)
_ABLATION_SETS = ("full", "easy", "hard")


def run_objective_ablation(
    spec: ExperimentSpec, teacher: Checkpoint, out_dir: str | None = None, jobs: int = 1
) -> list[RunRecord]:
    """{TkdOnly, DkdOnly, TkdPlusDkd} x {full, easy, hard} grid, per seed."""
    def _id(mode, token_set, seed):
        return f"objective_ablation.{mode.value}.{token_set}.seed{seed}"

    groups = []
    for seed in spec.seeds:
        arms = {}
        for mode in _ABLATION_MODES:
            objective = ObjectiveConfig(mode=mode, k_ratio=spec.objective.k_ratio)
            for token_set in _ABLATION_SETS:
                arms[f"{mode.value}.{token_set}"] = (
                    objective,
                    token_set,
                    _id(mode, token_set, seed),
                )
        groups.append((spec, teacher, seed, arms))
    by_id = _run_job_groups(groups, jobs)
    records = [
        by_id[_id(mode, token_set, seed)]
        for mode in _ABLATION_MODES
        for token_set in _ABLATION_SETS
        for seed in spec.seeds
    ]
    _append_records(out_dir, records)
    if out_dir is not None:
        rows = []
        for r in records:
            _, mode, token_set, seed_part = r.experiment_id.split(".")
            rows.append(f"{mode},{token_set},{r.seed},{fmt_float(r.final_ppl)}")
        _write_csv(out_dir, "ablation.csv", "mode,token_set,seed,final_ppl", rows)
        by_cell: dict[tuple[str, str], list[float]] = {}
        for r in records:
            _, mode, token_set, _ = r.experiment_id.split(".")
            by_cell.setdefault((mode, token_set), []).append(r.final_ppl)
        table_rows = []
        for mode in _ABLATION_MODES:
            cells = [
                fmt_float(sum(v) / len(v))
                for s in _ABLATION_SETS
                for v in [by_cell[(mode.value, s)]]
            ]
            table_rows.append(",".join([mode.value] + cells))
        _write_csv(
            out_dir,
            "ablation_table.csv",
            "mode," + ",".join(_ABLATION_SETS),
            table_rows,
            comments=["mean final val perplexity across seeds"],
        )
    return records


def _objective_for(spec: ExperimentSpec, parameter: str, value: float) -> ObjectiveConfig:
    base = spec.objective
    if parameter == "k_ratio":
        return ObjectiveConfig(mode=Mode.ATKD, k_ratio=value, lam=base.lam, alpha=base.alpha)
    if parameter == "lam":
        return ObjectiveConfig(mode=Mode.ATKD, k_ratio=base.k_ratio, lam=value, alpha=base.alpha)
    if parameter == "alpha":
        return ObjectiveConfig(
            mode=Mode.ALPHA_TKD_DKD, k_ratio=base.k_ratio, lam=base.lam, alpha=value
        )
    raise ConfigError(f"cannot sweep parameter {parameter!r} through distillation")


def run_sweep(
    spec: ExperimentSpec, teacher: Checkpoint, out_dir: str | None = None, jobs: int = 1
) -> list[RunRecord]:
    """One distill per grid value per seed; CSV `param,value,seed,final_ppl`."""
    grid = spec.sweep_grid()

    def _id(value, seed):
        return f"{spec.experiment.value}.{grid.parameter}={value}.seed{seed}"

    groups = [
        (
            spec,
            teacher,
            seed,
            {
                f"{grid.parameter}={value}": (
                    _objective_for(spec, grid.parameter, value),
                    "full",
                    _id(value, seed),
                )
                for value in grid.values
            },
        )
        for seed in spec.seeds
    ]
    by_id = _run_job_groups(groups, jobs)
    records = [_id(value, seed) for value in grid.values for seed in spec.seeds]
    records = [by_id[i] for i in records]
    _append_records(out_dir, records)
    if out_dir is not None:
        rows = []
        for (value, seed), r in zip(
            [(v, s) for v in grid.values for s in spec.seeds], records
        ):
            rows.append(
                f"{grid.parameter},{fmt_float(value)},{seed},{fmt_float(r.final_ppl)}"
            )
        _write_csv(out_dir, "sweep.csv", "param,value,seed,final_ppl", rows)
    return records


def teacher_unc_sample(
    spec: ExperimentSpec, teacher: Checkpoint, sample_tokens: int = 10_000
) -> np.ndarray:
    """Teacher UnC over a fixed, teacher-independent sample of train tokens."""
    vocab, train, _, _ = _load_data(spec)
    if teacher.config.vocab_size != vocab.size:
        raise ConfigError(
            f"teacher checkpoint vocab {teacher.config.vocab_size} != corpus {vocab.size}"
        )
    ctx = teacher.config.context_len
    n_windows = max(1, -(-int(sample_tokens) // ctx))
    rng = np.random.default_rng(spec.seeds[0])  # same windows for every teacher
    w = sample_windows(train, n_windows, ctx + 1, rng)
    model = teacher.model()
    uncs = []
    for start in range(0, n_windows, 64):
        blk = w[start : start + 64]
        logits = model.forward(blk[:, :-1]).reshape(-1, vocab.size)
        uncs.append(_teacher_unc(logits, blk[:, 1:].ravel()))
    return np.concatenate(uncs)


def run_unc_dist(
    spec: ExperimentSpec,
    teachers: list[Checkpoint],
    out_dir: str,
    sample_tokens: int = 10_000,
    grid_points: int = 256,
) -> list[tuple[str, int, float]]:
    """Per-teacher UnC kernel density files plus a median summary CSV.

    Returns (label, param_count, median_unc) per teacher, ordered as given.
    """
    if len(teachers) < 2:
        raise ConfigError(f"need at least 2 teacher checkpoints, got {len(teachers)}")
    ctxs = {t.config.context_len for t in teachers}
    if len(ctxs) != 1:
        raise ConfigError("teacher checkpoints must share context_len for a fair sample")
    os.makedirs(out_dir, exist_ok=True)
    summary: list[tuple[str, int, float]] = []
    n_tokens = None
    for ckpt in teachers:
        unc = teacher_unc_sample(spec, ckpt, sample_tokens)
        n_tokens = unc.shape[0]
        cfg = ckpt.config
        label = f"d{cfg.d_model}L{cfg.n_layers}s{cfg.seed}"
        kde_emit(
            unc,
            grid_points,
            os.path.join(out_dir, f"unc_kde_{label}.csv"),
            comments=[f"teacher={label}", f"sample_tokens={n_tokens}"],
        )
        summary.append((label, ckpt.params.shape[0], float(np.median(unc))))
    rows = [f"{label},{p},{fmt_float(med)}" for label, p, med in summary]
    _write_csv(
        out_dir,
        "unc_summary.csv",
        "teacher,params,median_unc",
        rows,
        comments=[f"sample_tokens={n_tokens}"],
    )
    return summary


def run_landscape(
    spec: ExperimentSpec,
    theta0: Checkpoint,
    theta1: Checkpoint,
    out_dir: str | None = None,
    points: int = 21,
) -> list[tuple[float, float]]:
    """Val perplexity along theta1 + beta*(theta1 - theta0), beta in [-1, 1]."""
    c0 = dataclasses.replace(theta0.config, seed=0)
    c1 = dataclasses.replace(theta1.config, seed=0)
    if c0 != c1:
        raise ConfigError(f"checkpoint architectures differ: {c0} vs {c1}")
    if points < 2:
        raise ConfigError(f"need >= 2 landscape points, got {points}")
    vocab, _, val, _ = _load_data(spec)
    if c1.vocab_size != vocab.size:
        raise ConfigError(f"checkpoint vocab {c1.vocab_size} != corpus {vocab.size}")
    curve = []
    for beta in np.linspace(-1.0, 1.0, int(points)):
        params = interpolate(theta0.params, theta1.params, float(beta))
        model = TinyLM(theta1.config, params)
        curve.append((float(beta), perplexity(model, val)))
    if out_dir is not None:
        rows = [f"{fmt_float(b)},{fmt_float(p)}" for b, p in curve]
        _write_csv(out_dir, "landscape.csv", "beta,perplexity", rows)
    return curve
