"""Synchronous federated-learning runtime.

Participants train local copies of the global model for a fixed number of
mini-batch SGD steps; the server aggregates the selected participants'
parameters weighted by shard size, evaluates on the held-out validation set
and (for the plain-averaging baseline) decays the learning rate every round.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import seeding
from .data import Dataset, Shard
from .metrics import RoundRecord, confusion, round_record
from .nn import Batch, NetworkSpec, ParameterVector, evaluate, init_params, loss_and_grad, sgd_step

logger = logging.getLogger(__name__)

# The baseline's learning-rate decay multiplies eta by 1/(1 + gamma*i) each
# round with gamma = 0.1/i, so the gamma*i product is 0.1 for every round.
ETA_DECAY_GAMMA_I = 0.1


@dataclass(frozen=True)
class ParticipantState:
    """A participant's identity and private shard."""

    id: int
    shard: Shard
    shard_size: int

    def __post_init__(self) -> None:
        if self.shard_size != len(self.shard):
            raise ValueError(
                f"shard_size {self.shard_size} does not match shard of {len(self.shard)} rows"
            )


def build_participants(shards: Sequence[Shard]) -> tuple[ParticipantState, ...]:
    """Participant registry from shards; IDs must be contiguous from 0."""
    states = tuple(
        ParticipantState(id=s.owner_id, shard=s, shard_size=len(s)) for s in shards
    )
    ids = sorted(p.id for p in states)
    if ids != list(range(len(states))):
        raise ValueError(f"participant IDs must be contiguous from 0, got {ids}")
    return states


@dataclass(frozen=True)
class FederationConfig:
    """Shared federation shape: population, per-round subset, batch size."""

    n_participants: int
    subset_size: int
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_participants < 1:
            raise ValueError(f"n_participants must be >= 1, got {self.n_participants}")
        if not 1 <= self.subset_size <= self.n_participants:
            raise ValueError(
                f"subset_size must lie in [1, {self.n_participants}], got {self.subset_size}"
            )
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.seed < 0:
            raise ValueError(f"seed must be non-negative, got {self.seed}")


@dataclass(frozen=True)
class FedAvgConfig:
    """Static hyperparameters for the plain-averaging baseline."""

    tau: int
    eta0: float
    rounds: int

    def __post_init__(self) -> None:
        if self.tau < 1:
            raise ValueError(f"tau must be >= 1, got {self.tau}")
        # eta0 == 0 is permitted so a no-learning run stays expressible.
        if self.eta0 < 0.0:
            raise ValueError(f"eta0 must be >= 0, got {self.eta0}")
        if self.rounds < 1:
            raise ValueError(f"rounds must be >= 1, got {self.rounds}")


def local_update(
    global_params: ParameterVector,
    shard: Shard,
    tau: int,
    eta: float,
    batch_size: int,
    seed: int | np.random.Generator,
) -> tuple[ParameterVector, float]:
    """Exactly tau mini-batch SGD steps starting from the global parameters.

    Each step samples batch_size rows uniformly, without replacement unless
    the shard is smaller than the batch. Returns the updated parameters and
    the training loss observed on the final batch.
    """
    if tau < 1:
        raise ValueError(f"tau must be >= 1, got {tau}")
    if len(shard) == 0:
        raise ValueError(f"participant {shard.owner_id} has an empty shard")
    rng = np.random.default_rng(seed)
    feats = shard.samples.features
    labs = shard.samples.labels
    n = len(shard)
    replace = n < batch_size
    params = global_params
    loss = float("nan")
    for _ in range(tau):
        idx = rng.choice(n, size=batch_size, replace=replace)
        loss, grad = loss_and_grad(params, Batch(feats[idx], labs[idx]))
        params = sgd_step(params, grad, eta)
    return params, loss


def fedavg_aggregate(
    contributions: Sequence[tuple[ParameterVector, int]],
) -> ParameterVector:
    """Shard-size-weighted average of parameter vectors.

    Weights are D_n / D with D summed over the contributing subset only.
    """
    if not contributions:
        raise ValueError("cannot aggregate zero contributions")
    layout = contributions[0][0].layout
    total = 0
    for params, size in contributions:
        if params.layout != layout:
            raise ValueError(f"layout mismatch: {params.layout} vs {layout}")
        if size <= 0:
            raise ValueError(f"contribution sizes must be > 0, got {size}")
        total += size
    if len(contributions) == 1:
        return contributions[0][0].copy()
    acc = np.zeros_like(contributions[0][0].values)
    for params, size in contributions:
        acc += (size / total) * params.values
    return ParameterVector(acc, layout)


def federated_objective(local_losses: Sequence[tuple[float, int]]) -> float:
    """Shard-size-weighted mean of the participants' local losses."""
    if not local_losses:
        raise ValueError("cannot combine zero local losses")
    total = 0
    for _, size in local_losses:
        if size <= 0:
            raise ValueError(f"sizes must be > 0, got {size}")
        total += size
    return float(sum((size / total) * loss for loss, size in local_losses))


def select_random(
    all_ids: Sequence[int], k: int, seed: int | np.random.Generator
) -> tuple[int, ...]:
    """Uniform k-subset of participant IDs, returned sorted."""
    ids = sorted(set(int(i) for i in all_ids))
    if k < 1:
        raise ValueError(f"subset size must be >= 1, got {k}")
    if k > len(ids):
        raise ValueError(f"cannot select {k} of {len(ids)} participants")
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(ids), size=k, replace=False)
    return tuple(sorted(ids[i] for i in chosen))


def decay_eta(eta_prev: float, round_index: int) -> float:
    """Per-round learning-rate decay; the decay factor is 1/1.1 every round."""
    if round_index < 1:
        raise ValueError(f"round_index must be >= 1, got {round_index}")
    return eta_prev / (1.0 + ETA_DECAY_GAMMA_I)


def run_round(
    params: ParameterVector,
    participants: Sequence[ParticipantState],
    subset: Sequence[int],
    tau: int,
    eta: float,
    batch_size: int,
    seed: int,
    round_index: int,
) -> tuple[ParameterVector, float]:
    """One aggregation round over the given subset.

    Returns the new global parameters and the shard-size-weighted training
    objective over the contributing participants. Participants with empty
    shards are skipped with a warning.
    """
    by_id = {p.id: p for p in participants}
    contributions: list[tuple[ParameterVector, int]] = []
    losses: list[tuple[float, int]] = []
    for pid in subset:
        participant = by_id[pid]
        if len(participant.shard) == 0:
            logger.warning("skipping participant %d: empty shard", pid)
            continue
        rng = seeding.stream(seed, seeding.LOCAL_TRAIN, round_index, pid)
        local, loss = local_update(params, participant.shard, tau, eta, batch_size, rng)
        contributions.append((local, participant.shard_size))
        losses.append((loss, participant.shard_size))
    new_global = fedavg_aggregate(contributions)
    return new_global, federated_objective(losses)


def run_fedavg(
    fed: FederationConfig,
    cfg: FedAvgConfig,
    shards: Sequence[Shard],
    validation: Dataset,
    net: NetworkSpec | None = None,
) -> list[RoundRecord]:
    """The baseline driver: random selection, fixed tau, decaying eta."""
    participants = build_participants(shards)
    if len(participants) != fed.n_participants:
        raise ValueError(
            f"{len(participants)} shards provided for {fed.n_participants} participants"
        )
    if net is None:
        net = NetworkSpec(input_dim=validation.features.shape[1])
    val_batch = validation.as_batch()
    all_ids = [p.id for p in participants]

    params = init_params(net, seeding.stream(fed.seed, seeding.INIT_PARAMS))
    eta = cfg.eta0
    records: list[RoundRecord] = []
    for t in range(1, cfg.rounds + 1):
        subset = select_random(all_ids, fed.subset_size, seeding.stream(fed.seed, seeding.SELECT, t))
        params, objective = run_round(
            params, participants, subset, cfg.tau, eta, fed.batch_size, fed.seed, t
        )
        loss, preds = evaluate(params, val_batch)
        records.append(
            round_record(
                round_index=t,
                phase="fedavg",
                loss=loss,
                counts=confusion(preds, validation.labels),
                tau=cfg.tau,
                eta=eta,
                participants=subset,
                train_objective=objective,
            )
        )
        eta = decay_eta(eta, t)
    return records
