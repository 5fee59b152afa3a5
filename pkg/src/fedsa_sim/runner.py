"""Experiment orchestration: data pipeline, driver dispatch, run artifacts.

Every run writes its own directory (never overwriting a previous one) with
``config_echo.yaml``, ``records.jsonl`` (one JSON object per aggregation
round) and ``summary.json``.
"""

from __future__ import annotations

import json
import logging
import statistics
import time
from dataclasses import dataclass, replace
from datetime import datetime
from pathlib import Path
from typing import Any

import yaml

from . import seeding
from .annealing import SearchSpace, Solution, run_fedsa
from .config import DEFAULT_BATCH_SIZE, ConfigError, ExperimentConfig
from .data import Dataset, Shard, load_flow_data, normalize, shard_dataset, split, synth_generate
from .federation import decay_eta, local_update, run_fedavg
from .metrics import RoundRecord, confusion, round_record
from .nn import NetworkSpec, evaluate, init_params

logger = logging.getLogger(__name__)

# The centralized reference spends ten training-epoch equivalents per
# record block, one epoch-equivalent being tau mini-batch steps, so its
# curve aligns one-to-one with the federated round budget.
EPOCH_EQUIVALENTS_PER_BLOCK = 10


@dataclass(frozen=True)
class Pipeline:
    """Prepared data for one experiment."""

    train: Dataset
    validation: Dataset
    shards: list[Shard] | None
    net: NetworkSpec
    dropped_rows: int
    split_mode: str


@dataclass(frozen=True)
class RunResult:
    run_dir: Path
    records: list[RoundRecord]
    summary: dict[str, Any]
    best_solution: Solution | None = None


@dataclass(frozen=True)
class SweepResult:
    sweep_dir: Path
    summary: dict[str, Any]


def build_pipeline(cfg: ExperimentConfig) -> Pipeline:
    """Load or generate the data, split, normalize and (if federated) shard."""
    if cfg.csv is not None:
        dataset, dropped = load_flow_data(
            cfg.csv.path,
            cfg.csv.label_column,
            drop_columns=cfg.csv.drop_columns,
            label_map=cfg.csv.label_map,
        )
        logger.info("loaded %d rows (%d dropped) from %s", len(dataset), dropped, cfg.csv.path)
    else:
        assert cfg.synthetic is not None
        dataset = synth_generate(cfg.synthetic)
        dropped = 0

    train, validation = split(
        dataset,
        cfg.train_fraction,
        seeding.stream(cfg.seed, seeding.SPLIT),
        balanced=cfg.balanced_split,
    )
    train, [validation], _ = normalize(train, [validation])

    shards = None
    if cfg.federation is not None:
        shards = shard_dataset(
            train, cfg.federation.n_participants, seeding.stream(cfg.seed, seeding.SHARD)
        )
    net = NetworkSpec(input_dim=train.features.shape[1], hidden=cfg.hidden)
    return Pipeline(
        train=train,
        validation=validation,
        shards=shards,
        net=net,
        dropped_rows=dropped,
        split_mode="balanced" if cfg.balanced_split else "random",
    )


def _centralized_records(cfg: ExperimentConfig, pipe: Pipeline) -> list[RoundRecord]:
    """Train one model on the pooled training set, one record per block.

    Each block is ten epoch-equivalents (an epoch-equivalent being tau
    mini-batch steps), and the block count equals the federated round budget.
    The learning rate follows the same per-round decay as the federated
    baseline.
    """
    avg = cfg.fedavg
    assert avg is not None
    batch_size = cfg.federation.batch_size if cfg.federation is not None else DEFAULT_BATCH_SIZE
    pooled = Shard(owner_id=0, samples=pipe.train)
    params = init_params(pipe.net, seeding.stream(cfg.seed, seeding.INIT_PARAMS))
    val_batch = pipe.validation.as_batch()
    steps_per_block = EPOCH_EQUIVALENTS_PER_BLOCK * avg.tau
    eta = avg.eta0
    records: list[RoundRecord] = []
    for block in range(1, avg.rounds + 1):
        params, train_loss = local_update(
            params, pooled, steps_per_block, eta, batch_size,
            seeding.stream(cfg.seed, seeding.LOCAL_TRAIN, block, 0),
        )
        loss, preds = evaluate(params, val_batch)
        records.append(
            round_record(
                round_index=block,
                phase="centralized",
                loss=loss,
                counts=confusion(preds, pipe.validation.labels),
                tau=avg.tau,
                eta=eta,
                train_objective=train_loss,
            )
        )
        eta = decay_eta(eta, block)
    return records


def run_centralized(cfg: ExperimentConfig) -> list[RoundRecord]:
    """Centralized baseline on the pooled training set."""
    if cfg.fedavg is None:
        raise ConfigError("centralized driver requires the fedavg section (tau, eta0, rounds)")
    return _centralized_records(cfg, build_pipeline(cfg))


def _dispatch(cfg: ExperimentConfig, pipe: Pipeline) -> tuple[list[RoundRecord], Solution | None]:
    if cfg.driver == "fedsa":
        assert cfg.federation is not None and cfg.fedsa is not None and pipe.shards is not None
        space = SearchSpace(
            eta_a=cfg.eta_bounds[0],
            eta_b=cfg.eta_bounds[1],
            tau_min=cfg.tau_bounds[0],
            tau_max=cfg.tau_bounds[1],
            mu=tuple(range(cfg.federation.n_participants)),
            k=cfg.federation.subset_size,
        )
        best, records = run_fedsa(
            cfg.federation, space, cfg.fedsa, pipe.shards, pipe.validation, pipe.net
        )
        return records, best
    if cfg.driver == "fedavg":
        assert cfg.federation is not None and cfg.fedavg is not None and pipe.shards is not None
        records = run_fedavg(cfg.federation, cfg.fedavg, pipe.shards, pipe.validation, pipe.net)
        return records, None
    return _centralized_records(cfg, pipe), None


def run_experiment(cfg: ExperimentConfig) -> RunResult:
    """Full run: pipeline, driver, artifacts. Returns the run directory."""
    start = time.perf_counter()
    pipe = build_pipeline(cfg)
    records, best_solution = _dispatch(cfg, pipe)
    wall_time = time.perf_counter() - start

    best = min(records, key=lambda r: r.loss)
    final = records[-1]
    summary: dict[str, Any] = {
        "driver": cfg.driver,
        "seed": cfg.seed,
        "total_rounds": len(records),
        "best_round": best.round_index,
        "best_loss": best.loss,
        "best_accuracy": best.accuracy,
        "final": final.to_json_dict(),
        "wall_time_sec": wall_time,
        "dropped_rows": pipe.dropped_rows,
        "split_mode": pipe.split_mode,
    }
    if best_solution is not None:
        summary["best_solution"] = {
            "tau": best_solution.tau,
            "eta": best_solution.eta,
            "participants": list(best_solution.participants),
        }

    stem = cfg.source_path.stem if cfg.source_path is not None else "run"
    run_dir = _unique_dir(cfg.output, f"{stem}-{cfg.driver}")
    _write_artifacts(run_dir, cfg, records, summary)
    logger.info("run complete: %s (%d rounds, %.2fs)", run_dir, len(records), wall_time)
    return RunResult(run_dir=run_dir, records=records, summary=summary, best_solution=best_solution)


def run_sweep(cfg: ExperimentConfig) -> SweepResult:
    """Temperature x cooling grid, each cell repeated over the sweep seeds.

    Every cell/seed combination is an independent run; the sweep summary
    reports each cell's mean and standard deviation of final accuracy plus
    the spread of cell means.
    """
    if cfg.sweep is None:
        raise ConfigError("sweep command requires a sweep section in the config")
    if cfg.driver != "fedsa" or cfg.fedsa is None or cfg.federation is None:
        raise ConfigError("sweep requires driver fedsa with fedsa and federation sections")

    stem = cfg.source_path.stem if cfg.source_path is not None else "sweep"
    sweep_dir = _unique_dir(cfg.output, f"{stem}-sweep")
    cells: list[dict[str, Any]] = []
    for t_init in cfg.sweep.t_inits:
        for alpha in cfg.sweep.alphas:
            finals: list[float] = []
            for seed in cfg.sweep.seeds:
                run_cfg = replace(
                    cfg,
                    seed=seed,
                    output=sweep_dir,
                    federation=replace(cfg.federation, seed=seed),
                    fedsa=replace(cfg.fedsa, t_init=t_init, alpha=alpha, seed=seed),
                    sweep=None,
                    source_path=Path(f"t{t_init}-a{alpha}-s{seed}"),
                )
                result = run_experiment(run_cfg)
                finals.append(result.records[-1].accuracy)
            cells.append(
                {
                    "t_init": t_init,
                    "alpha": alpha,
                    "seeds": list(cfg.sweep.seeds),
                    "final_accuracies": finals,
                    "mean_accuracy": statistics.mean(finals),
                    "std_accuracy": statistics.pstdev(finals),
                }
            )
    means = [c["mean_accuracy"] for c in cells]
    summary: dict[str, Any] = {
        "driver": cfg.driver,
        "grid": {
            "t_init": list(cfg.sweep.t_inits),
            "alpha": list(cfg.sweep.alphas),
            "seeds": list(cfg.sweep.seeds),
        },
        "cells": cells,
        "spread_of_cell_means": max(means) - min(means),
        "max_cell_std": max(c["std_accuracy"] for c in cells),
    }
    with open(sweep_dir / "sweep_summary.json", "w", encoding="utf-8") as f:
        json.dump(summary, f, indent=2)
    logger.info("sweep complete: %s (%d cells)", sweep_dir, len(cells))
    return SweepResult(sweep_dir=sweep_dir, summary=summary)


def _unique_dir(base: Path, name: str) -> Path:
    """Timestamped directory under base; never reuses an existing one."""
    base = Path(base)
    stamp = datetime.now().strftime("%Y%m%d-%H%M%S")
    candidate = base / f"{name}-{stamp}"
    counter = 1
    while True:
        try:
            candidate.mkdir(parents=True, exist_ok=False)
            return candidate
        except FileExistsError:
            candidate = base / f"{name}-{stamp}-{counter}"
            counter += 1


def _write_artifacts(
    run_dir: Path,
    cfg: ExperimentConfig,
    records: list[RoundRecord],
    summary: dict[str, Any],
) -> None:
    with open(run_dir / "config_echo.yaml", "w", encoding="utf-8") as f:
        yaml.safe_dump(cfg.to_echo_dict(), f, sort_keys=False)
    with open(run_dir / "records.jsonl", "w", encoding="utf-8", newline="\n") as f:
        for record in records:
            f.write(json.dumps(record.to_json_dict()) + "\n")
    with open(run_dir / "summary.json", "w", encoding="utf-8") as f:
        json.dump(summary, f, indent=2)
