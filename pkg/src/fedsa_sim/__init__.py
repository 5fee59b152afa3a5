"""Deterministic federated-learning simulator with simulated-annealing
hyperparameter and participant selection, plus a plain-averaging baseline
and a centralized reference, for flow-based intrusion detection."""

from .annealing import (
    FedSAConfig,
    SearchSpace,
    Solution,
    acceptance_probability,
    cool,
    gen_neighbor_solution,
    init_solution,
    neighbor_eta,
    neighbor_int,
    neighbor_participants,
    run_fedsa,
)
from .config import ConfigError, ExperimentConfig, parse_config
from .data import (
    DataError,
    Dataset,
    Shard,
    SynthSpec,
    load_csv,
    load_flow_data,
    normalize,
    shard_dataset,
    split,
    synth_generate,
)
from .federation import (
    FedAvgConfig,
    FederationConfig,
    ParticipantState,
    decay_eta,
    fedavg_aggregate,
    federated_objective,
    local_update,
    run_fedavg,
    select_random,
)
from .metrics import (
    ClassificationMetrics,
    ConfusionCounts,
    RoundRecord,
    classification_metrics,
    confusion,
)
from .nn import (
    Batch,
    NetworkSpec,
    ParameterVector,
    backward,
    cross_entropy,
    evaluate,
    forward,
    init_params,
    sgd_step,
)
from .runner import run_centralized, run_experiment, run_sweep

__version__ = "0.1.0"
