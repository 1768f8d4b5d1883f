"""Decomposed token-level knowledge distillation with an adaptive objective.

The forward KL between a teacher and a student factorizes per token into a
binary target/non-target term (TKD), a renormalized non-target term (DKD),
and the teacher's non-target mass (UnC) as the coupling weight:

    KL(p || q) = tkd + unc * dkd

The adaptive objective ranks tokens by teacher UnC, splits them into hard and
easy sets, and reweights the two terms per set. This package provides the
numerics (`probs`, `decompose`, `objective`, `gradients`), a small byte-level
transformer with hand-written backprop (`model`), bit-exact file formats
(`logit_io`, `checkpoint`), and experiment runners with a CLI (`harness`,
`cli`).
"""

from .checkpoint import Checkpoint
from .decompose import (
    BatchDecomposition,
    LogitBatch,
    TokenDecomposition,
    batch_decompose,
    token_decompose,
)
from .errors import (
    AtkdError,
    BadMagicError,
    ConfigError,
    EmptyBatchError,
    FileFormatError,
    InfiniteDivergenceError,
    InvalidInputError,
    InvariantViolationError,
    TrainingDivergedError,
    TrainingFailedError,
    TruncatedFileError,
    VersionMismatchError,
)
from .gradients import fd_check, loss_grad
from .harness import (
    Experiment,
    ExperimentSpec,
    RunRecord,
    SweepGrid,
    distill,
    distill_arms,
    run_landscape,
    run_objective_ablation,
    run_sweep,
    run_token_split,
    run_unc_dist,
    spec_from_config,
    train_teacher,
)
from .logit_io import kde_emit, read_logit_file, write_logit_file, write_report
from .model import (
    Adam,
    ModelConfig,
    TinyLM,
    interpolate,
    param_count,
    perplexity,
    sample,
)
from .objective import (
    Mode,
    ObjectiveConfig,
    TokenSplit,
    atkd_loss,
    atkd_on_reverse,
    hard_count,
    objective_eval,
    rank_and_split,
)
from .probs import (
    BinaryProb,
    binary_split,
    kl_div,
    log_softmax,
    logsumexp,
    nontarget_renorm,
    softmax,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # probability primitives
    "BinaryProb",
    "binary_split",
    "kl_div",
    "log_softmax",
    "logsumexp",
    "nontarget_renorm",
    "softmax",
    # decomposition
    "BatchDecomposition",
    "LogitBatch",
    "TokenDecomposition",
    "batch_decompose",
    "token_decompose",
    # objectives
    "Mode",
    "ObjectiveConfig",
    "TokenSplit",
    "atkd_loss",
    "atkd_on_reverse",
    "hard_count",
    "objective_eval",
    "rank_and_split",
    # gradients
    "fd_check",
    "loss_grad",
    # model
    "Adam",
    "ModelConfig",
    "TinyLM",
    "interpolate",
    "param_count",
    "perplexity",
    "sample",
    # persistence
    "Checkpoint",
    "kde_emit",
    "read_logit_file",
    "write_logit_file",
    "write_report",
    # harness
    "Experiment",
    "ExperimentSpec",
    "RunRecord",
    "SweepGrid",
    "distill",
    "distill_arms",
    "run_landscape",
    "run_objective_ablation",
    "run_sweep",
    "run_token_split",
    "run_unc_dist",
    "spec_from_config",
    "train_teacher",
    # errors
    "AtkdError",
    "BadMagicError",
    "ConfigError",
    "EmptyBatchError",
    "FileFormatError",
    "InfiniteDivergenceError",
    "InvalidInputError",
    "InvariantViolationError",
    "TrainingDivergedError",
    "TrainingFailedError",
    "TruncatedFileError",
    "VersionMismatchError",
]
