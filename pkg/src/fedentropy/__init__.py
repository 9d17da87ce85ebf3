"""Deterministic federated-learning simulator with maximum-entropy grouping.

Cloud-side device selection collects per-device averaged soft labels,
greedily filters devices whose labels lower the group's weighted entropy,
aggregates only the survivors, and routes devices through positive/negative
pools picked epsilon-greedily each round.
"""

__version__ = "0.1.0"

from .datagen import (
    Dataset,
    DataSplit,
    PartitionSpec,
    make_blobs,
    make_partition,
    partition_dirichlet,
    partition_single_label,
    partition_stats,
    partition_two_label,
)
from .experiment import (
    ConfigError,
    ExperimentConfig,
    ExperimentResult,
    RoundRow,
    SummaryRow,
    build_config,
    load_config,
    run_experiment,
    write_round_csv,
    write_summary,
)
from .federation import (
    ClientConfig,
    RoundReport,
    TrainingState,
    aggregate_models,
    baseline_random_round,
    client_update,
    evaluate,
    init_training,
    run_round,
    run_training,
)
from .judgment import (
    JudgmentResult,
    SoftLabelSummary,
    aggregate_soft_labels,
    entropy,
    greedy_oracle,
    group_entropy,
    judge_entropy,
)
from .model import (
    Batch,
    Gradients,
    ModelParams,
    finite_diff_grad,
    forward,
    loss_and_grad,
    sgd_step,
    softmax,
)
from .pools import DevicePools, SelectionConfig, init_pools, return_devices, select_round
