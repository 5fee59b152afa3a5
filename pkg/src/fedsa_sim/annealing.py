"""Simulated-annealing search over federated hyperparameters.

Each candidate solution bundles the local-update count, the learning rate and
the participant subset for one aggregation round. Neighbors step integer
values by +/-1 with direction flips at the bounds, nudge the learning rate by
a scaled uniform draw, and walk participant IDs with collision fallback to a
random free participant. Worse candidates are accepted with Boltzmann
probability, and the temperature cools only on such acceptances. At the end
of every epoch the incumbent best solution is re-evaluated with one extra
aggregation round; if it degraded, a fresh random solution replaces it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import seeding
from .data import Dataset, Shard
from .federation import FederationConfig, build_participants, run_round
from .metrics import RoundRecord, confusion, round_record
from .nn import NetworkSpec, evaluate, init_params

TEMPERATURE_FLOOR = 1e-8

COOL_ONE_MINUS_ALPHA = "one_minus_alpha"
COOL_ALPHA = "alpha"
_COOL_MODES = (COOL_ONE_MINUS_ALPHA, COOL_ALPHA)


@dataclass(frozen=True)
class SearchSpace:
    """Bounds for the learning rate and update count, plus the ID pool."""

    eta_a: float
    eta_b: float
    tau_min: int
    tau_max: int
    mu: tuple[int, ...]
    k: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "mu", tuple(int(i) for i in self.mu))
        # eta_a == eta_b is allowed so the learning rate can be pinned.
        if self.eta_a > self.eta_b:
            raise ValueError(f"eta bounds reversed: [{self.eta_a}, {self.eta_b}]")
        if self.eta_a <= 0.0:
            raise ValueError(f"eta_a must be > 0, got {self.eta_a}")
        if self.tau_min > self.tau_max:
            raise ValueError(f"tau bounds reversed: [{self.tau_min}, {self.tau_max}]")
        if self.tau_min < 1:
            raise ValueError(f"tau_min must be >= 1, got {self.tau_min}")
        if len(set(self.mu)) != len(self.mu) or not self.mu:
            raise ValueError("mu must be a non-empty list of unique participant IDs")
        if not 1 <= self.k <= len(self.mu):
            raise ValueError(f"k must lie in [1, {len(self.mu)}], got {self.k}")


@dataclass(frozen=True)
class Solution:
    """A candidate (tau, eta, participant subset) plus its search directions."""

    tau: int
    eta: float
    participants: tuple[int, ...]
    tau_direction: int
    eta_direction: int
    participant_directions: tuple[int, ...]

    def validate(self, space: SearchSpace) -> None:
        if not space.tau_min <= self.tau <= space.tau_max:
            raise ValueError(f"tau {self.tau} outside [{space.tau_min}, {space.tau_max}]")
        if not space.eta_a <= self.eta <= space.eta_b:
            raise ValueError(f"eta {self.eta} outside [{space.eta_a}, {space.eta_b}]")
        if len(self.participants) != space.k:
            raise ValueError(f"expected {space.k} participants, got {len(self.participants)}")
        if len(set(self.participants)) != len(self.participants):
            raise ValueError(f"duplicate participants in {self.participants}")
        if not set(self.participants) <= set(space.mu):
            raise ValueError(f"participants {self.participants} not all in the ID pool")
        directions = (self.tau_direction, self.eta_direction, *self.participant_directions)
        if any(d not in (-1, 1) for d in directions):
            raise ValueError(f"directions must be +/-1, got {directions}")
        if len(self.participant_directions) != len(self.participants):
            raise ValueError("one direction per participant slot required")


@dataclass(frozen=True)
class FedSAConfig:
    """Annealer controls: initial temperature, cooling, eta step, budget."""

    t_init: float
    alpha: float
    epsilon: float
    epochs: int
    seed: int = 0
    cool_mode: str = COOL_ONE_MINUS_ALPHA

    def __post_init__(self) -> None:
        if self.t_init <= 0.0:
            raise ValueError(f"t_init must be > 0, got {self.t_init}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.seed < 0:
            raise ValueError(f"seed must be non-negative, got {self.seed}")
        if self.cool_mode not in _COOL_MODES:
            raise ValueError(f"cool_mode must be one of {_COOL_MODES}, got {self.cool_mode!r}")


@dataclass
class AnnealState:
    """Mutable annealer bookkeeping across epochs."""

    temperature: float
    best_solution: Solution
    best_loss: float
    epoch: int = 0


def init_solution(space: SearchSpace, seed: int | np.random.Generator) -> Solution:
    """Uniformly random solution: tau, eta, k-subset and all directions."""
    rng = np.random.default_rng(seed)
    tau = int(rng.integers(space.tau_min, space.tau_max + 1))
    eta = float(rng.uniform(space.eta_a, space.eta_b))
    participants = tuple(int(i) for i in rng.choice(space.mu, size=space.k, replace=False))
    directions = rng.choice((-1, 1), size=2 + space.k)
    return Solution(
        tau=tau,
        eta=eta,
        participants=participants,
        tau_direction=int(directions[0]),
        eta_direction=int(directions[1]),
        participant_directions=tuple(int(d) for d in directions[2:]),
    )


def acceptance_probability(delta_e: float, temperature: float) -> float:
    """Boltzmann acceptance: exp(-delta_e / T), clamped to at most 1."""
    if temperature <= 0.0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    if delta_e <= 0.0:
        return 1.0
    return min(1.0, math.exp(-delta_e / temperature))


def cool(temperature: float, alpha: float, mode: str = COOL_ONE_MINUS_ALPHA) -> float:
    """Reduce the temperature by the cooling factor, floored at 1e-8."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if mode not in _COOL_MODES:
        raise ValueError(f"mode must be one of {_COOL_MODES}, got {mode!r}")
    factor = (1.0 - alpha) if mode == COOL_ONE_MINUS_ALPHA else alpha
    return max(temperature * factor, TEMPERATURE_FLOOR)


def neighbor_int(value: int, lo: int, hi: int, direction: int) -> tuple[int, int]:
    """Step an integer by +/-1, flipping the direction at the bounds."""
    if direction not in (-1, 1):
        raise ValueError(f"direction must be +/-1, got {direction}")
    if not lo <= value <= hi:
        raise ValueError(f"value {value} outside [{lo}, {hi}]")
    if lo == hi:
        return value, direction
    candidate = value + direction
    if lo <= candidate <= hi:
        return candidate, direction
    return value - direction, -direction


def neighbor_participants(
    current: Sequence[int],
    mu: Sequence[int],
    directions: Sequence[int],
    rng: np.random.Generator,
) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Move every participant slot one step along the ID space.

    A slot first tries its own direction (with a border flip), then the
    opposite direction, and finally falls back to a uniformly random
    not-yet-selected participant. The result is duplicate-free and the same
    size as the input.
    """
    pool = sorted(set(int(i) for i in mu))
    current = [int(i) for i in current]
    directions = [int(d) for d in directions]
    if len(current) != len(directions):
        raise ValueError("one direction per slot required")
    if len(set(current)) != len(current) or not set(current) <= set(pool):
        raise ValueError(f"current subset {current} is not a duplicate-free subset of the pool")
    if len(current) == len(pool):
        return tuple(current), tuple(directions)

    position = {pid: i for i, pid in enumerate(pool)}
    lo, hi = 0, len(pool) - 1
    new_ids: list[int] = []
    new_dirs: list[int] = []
    for i, (pid, direction) in enumerate(zip(current, directions)):
        taken = set(new_ids) | set(current[i + 1 :])
        pos = position[pid]
        cand_pos, cand_dir = neighbor_int(pos, lo, hi, direction)
        if pool[cand_pos] not in taken:
            new_ids.append(pool[cand_pos])
            new_dirs.append(cand_dir)
            continue
        flip_pos, flip_dir = neighbor_int(pos, lo, hi, -direction)
        if pool[flip_pos] not in taken:
            new_ids.append(pool[flip_pos])
            new_dirs.append(flip_dir)
            continue
        free = [x for x in pool if x not in taken and x != pid]
        new_ids.append(int(rng.choice(free)))
        new_dirs.append(direction)
    return tuple(new_ids), tuple(new_dirs)


def neighbor_eta(
    eta_best: float,
    space: SearchSpace,
    epsilon: float,
    direction: int,
    rng: np.random.Generator,
) -> float:
    """Nudge the best-so-far learning rate by epsilon * uniform(eta_a, eta_b)."""
    if not space.eta_a <= eta_best <= space.eta_b:
        raise ValueError(f"eta {eta_best} outside [{space.eta_a}, {space.eta_b}]")
    u = float(rng.uniform(space.eta_a, space.eta_b))
    candidate = eta_best + direction * epsilon * u
    return float(min(max(candidate, space.eta_a), space.eta_b))


def gen_neighbor_solution(
    best: Solution,
    space: SearchSpace,
    cfg: FedSAConfig,
    rng: np.random.Generator,
) -> Solution:
    """Neighbor of the best solution: step tau, eta and the subset together."""
    best.validate(space)
    tau, tau_dir = neighbor_int(best.tau, space.tau_min, space.tau_max, best.tau_direction)
    eta = neighbor_eta(best.eta, space, cfg.epsilon, best.eta_direction, rng)
    participants, part_dirs = neighbor_participants(
        best.participants, space.mu, best.participant_directions, rng
    )
    return Solution(
        tau=tau,
        eta=eta,
        participants=participants,
        tau_direction=tau_dir,
        eta_direction=best.eta_direction,
        participant_directions=part_dirs,
    )


def run_fedsa(
    fed: FederationConfig,
    space: SearchSpace,
    cfg: FedSAConfig,
    shards: Sequence[Shard],
    validation: Dataset,
    net: NetworkSpec | None = None,
) -> tuple[Solution, list[RoundRecord]]:
    """Run the annealing driver for cfg.epochs epochs.

    Every epoch spends two aggregation rounds (candidate evaluation plus
    best-solution revalidation) on top of the initial bootstrap round, so the
    run emits exactly 1 + 2*epochs records. The global model advances on
    every round regardless of whether the candidate is accepted.
    """
    participants = build_participants(shards)
    if len(participants) != fed.n_participants:
        raise ValueError(
            f"{len(participants)} shards provided for {fed.n_participants} participants"
        )
    if set(space.mu) != {p.id for p in participants}:
        raise ValueError("search-space ID pool does not match the participant registry")
    if net is None:
        net = NetworkSpec(input_dim=validation.features.shape[1])
    val_batch = validation.as_batch()
    sa_rng = seeding.stream(cfg.seed, seeding.ANNEAL)

    def aggregation_round(solution: Solution, params, round_index):
        new_params, objective = run_round(
            params,
            participants,
            solution.participants,
            solution.tau,
            solution.eta,
            fed.batch_size,
            fed.seed,
            round_index,
        )
        loss, preds = evaluate(new_params, val_batch)
        return new_params, loss, preds, objective

    params = init_params(net, seeding.stream(fed.seed, seeding.INIT_PARAMS))
    records: list[RoundRecord] = []

    state = AnnealState(
        temperature=cfg.t_init,
        best_solution=init_solution(space, sa_rng),
        best_loss=math.inf,
        epoch=0,
    )
    round_index = 1
    params, loss, preds, objective = aggregation_round(state.best_solution, params, round_index)
    state.best_loss = loss
    records.append(
        _sa_record(round_index, "init", loss, preds, validation, state.best_solution,
                   state.temperature, epoch=0, train_objective=objective)
    )

    for epoch in range(1, cfg.epochs + 1):
        state.epoch = epoch
        candidate = gen_neighbor_solution(state.best_solution, space, cfg, sa_rng)
        round_index += 1
        params, current_loss, preds, objective = aggregation_round(candidate, params, round_index)

        delta_e = current_loss - state.best_loss
        event: tuple[str, ...] = ()
        if current_loss < state.best_loss:
            state.best_solution = candidate
            state.best_loss = current_loss
            event = ("accepted",)
        elif sa_rng.uniform() < acceptance_probability(delta_e, state.temperature):
            state.best_solution = candidate
            state.best_loss = current_loss
            state.temperature = cool(state.temperature, cfg.alpha, cfg.cool_mode)
            event = ("accepted", "accepted_worse")
        records.append(
            _sa_record(round_index, "candidate", current_loss, preds, validation, candidate,
                       state.temperature, epoch=epoch, train_objective=objective,
                       extra_flags=event)
        )

        # Revalidate the incumbent with one more aggregation round; a
        # degraded loss triggers a random restart of the search point.
        revalidated = state.best_solution
        round_index += 1
        params, test_loss, preds, objective = aggregation_round(revalidated, params, round_index)
        event = ()
        if test_loss > state.best_loss:
            state.best_solution = init_solution(space, sa_rng)
            event = ("reinitialized",)
        state.best_loss = test_loss
        records.append(
            _sa_record(round_index, "revalidation", test_loss, preds, validation, revalidated,
                       state.temperature, epoch=epoch, train_objective=objective,
                       extra_flags=event)
        )

    return state.best_solution, records


def _sa_record(
    round_index: int,
    phase: str,
    loss: float,
    preds: np.ndarray,
    validation: Dataset,
    solution: Solution,
    temperature: float,
    *,
    epoch: int,
    train_objective: float,
    extra_flags: Sequence[str] = (),
) -> RoundRecord:
    return round_record(
        round_index=round_index,
        phase=phase,
        loss=loss,
        counts=confusion(preds, validation.labels),
        tau=solution.tau,
        eta=solution.eta,
        participants=solution.participants,
        temperature=temperature,
        epoch=epoch,
        train_objective=train_objective,
        extra_flags=extra_flags,
    )
