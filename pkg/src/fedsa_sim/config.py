"""Experiment configuration: one YAML/JSON document, fully validated.

Unknown keys are rejected with their key path; every default the parser fills
in is recorded in ``applied_defaults`` and echoed to the run log.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Mapping

import yaml

from .annealing import COOL_ONE_MINUS_ALPHA, FedSAConfig
from .data import SynthSpec
from .federation import FedAvgConfig, FederationConfig

logger = logging.getLogger(__name__)

DRIVERS = ("fedsa", "fedavg", "centralized")

DEFAULT_ETA_BOUNDS = (0.01, 0.5)
DEFAULT_TAU_BOUNDS = (1, 20)
DEFAULT_EPSILON = 0.1
DEFAULT_T_INIT = 0.8
DEFAULT_ALPHA = 0.05
DEFAULT_BATCH_SIZE = 32
DEFAULT_TRAIN_FRACTION = 0.7
DEFAULT_HIDDEN = (50, 100)
DEFAULT_OUTPUT = "runs"


class ConfigError(Exception):
    """Raised when a config document is missing, malformed or inconsistent."""


@dataclass(frozen=True)
class CsvSource:
    path: Path
    label_column: str
    drop_columns: tuple[str, ...] = ()
    label_map: Mapping[str, int] | None = None


@dataclass(frozen=True)
class SweepSpec:
    """Grid of annealer controls for the robustness sweep."""

    t_inits: tuple[float, ...]
    alphas: tuple[float, ...]
    seeds: tuple[int, ...]


@dataclass(frozen=True)
class ExperimentConfig:
    driver: str
    seed: int
    output: Path
    train_fraction: float
    balanced_split: bool
    hidden: tuple[int, ...]
    csv: CsvSource | None = None
    synthetic: SynthSpec | None = None
    federation: FederationConfig | None = None
    fedavg: FedAvgConfig | None = None
    fedsa: FedSAConfig | None = None
    eta_bounds: tuple[float, float] = DEFAULT_ETA_BOUNDS
    tau_bounds: tuple[int, int] = DEFAULT_TAU_BOUNDS
    sweep: SweepSpec | None = None
    applied_defaults: tuple[str, ...] = ()
    source_path: Path | None = None

    def to_echo_dict(self) -> dict[str, Any]:
        """Fully resolved config for the run directory echo."""
        out: dict[str, Any] = {
            "driver": self.driver,
            "seed": self.seed,
            "output": str(self.output),
            "train_fraction": self.train_fraction,
            "balanced_split": self.balanced_split,
            "network": {"hidden": list(self.hidden)},
        }
        if self.csv is not None:
            out["data"] = {
                "csv": {
                    "path": str(self.csv.path),
                    "label_column": self.csv.label_column,
                    "drop_columns": list(self.csv.drop_columns),
                    "label_map": dict(self.csv.label_map) if self.csv.label_map else None,
                }
            }
        else:
            assert self.synthetic is not None
            out["data"] = {
                "synthetic": {
                    "n_samples": self.synthetic.n_samples,
                    "n_features": self.synthetic.n_features,
                    "class_ratio": self.synthetic.class_ratio,
                    "separation": self.synthetic.separation,
                    "seed": self.synthetic.seed,
                }
            }
        if self.federation is not None:
            out["federation"] = {
                "n_participants": self.federation.n_participants,
                "subset_size": self.federation.subset_size,
                "batch_size": self.federation.batch_size,
            }
        if self.fedavg is not None:
            out["fedavg"] = {
                "tau": self.fedavg.tau,
                "eta0": self.fedavg.eta0,
                "rounds": self.fedavg.rounds,
            }
        if self.fedsa is not None:
            out["fedsa"] = {
                "epochs": self.fedsa.epochs,
                "t_init": self.fedsa.t_init,
                "alpha": self.fedsa.alpha,
                "epsilon": self.fedsa.epsilon,
                "eta_bounds": list(self.eta_bounds),
                "tau_bounds": list(self.tau_bounds),
                "cool_mode": self.fedsa.cool_mode,
            }
        if self.sweep is not None:
            out["sweep"] = {
                "t_init": list(self.sweep.t_inits),
                "alpha": list(self.sweep.alphas),
                "seeds": list(self.sweep.seeds),
            }
        out["applied_defaults"] = list(self.applied_defaults)
        return out


class _Section:
    """One mapping level of the document, with typed access and path-aware errors."""

    def __init__(self, mapping: Mapping[str, Any], path: str, defaults: list[str]):
        if not isinstance(mapping, Mapping):
            raise ConfigError(f"{path or 'config'}: expected a mapping, got {type(mapping).__name__}")
        self.mapping = mapping
        self.path = path
        self.defaults = defaults
        self.seen: set[str] = set()

    def _key(self, key: str) -> str:
        return f"{self.path}.{key}" if self.path else key

    def has(self, key: str) -> bool:
        return key in self.mapping

    def child(self, key: str) -> "_Section":
        self.seen.add(key)
        return _Section(self.mapping[key], self._key(key), self.defaults)

    def take(self, key: str, kind: type, default: Any = ..., allow_none: bool = False) -> Any:
        self.seen.add(key)
        if key not in self.mapping:
            if default is ...:
                raise ConfigError(f"missing required key: {self._key(key)}")
            if default is not None or allow_none:
                self.defaults.append(f"{self._key(key)} = {default!r}")
            return default
        value = self.mapping[key]
        if kind is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if kind is int and isinstance(value, bool):
            raise ConfigError(f"{self._key(key)}: expected int, got bool")
        if not isinstance(value, kind):
            raise ConfigError(
                f"{self._key(key)}: expected {kind.__name__}, got {type(value).__name__}"
            )
        return value

    def finish(self) -> None:
        unknown = set(self.mapping) - self.seen
        if unknown:
            names = ", ".join(sorted(self._key(k) for k in unknown))
            raise ConfigError(f"unknown key(s): {names}")


def _pair(section: _Section, key: str, kind: type, default: tuple | None) -> tuple:
    raw = section.take(key, list, default=list(default) if default is not None else ...)
    if len(raw) != 2:
        raise ConfigError(f"{section._key(key)}: expected [low, high], got {raw!r}")
    try:
        return tuple(kind(v) for v in raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{section._key(key)}: values must be {kind.__name__}") from None


def _build(path: str, factory, **kwargs):
    try:
        return factory(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def parse_config(
    path: str | Path,
    *,
    seed: int | None = None,
    driver: str | None = None,
    output: str | None = None,
) -> ExperimentConfig:
    """Parse and validate a config document, applying CLI overrides.

    Every default the parser applies is collected in ``applied_defaults`` and
    logged, so a run directory always shows the fully resolved configuration.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        document = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"could not parse {path}: {exc}") from exc
    cfg = parse_config_dict(document, seed=seed, driver=driver, output=output)
    return replace(cfg, source_path=path)


def parse_config_dict(
    document: Any,
    *,
    seed: int | None = None,
    driver: str | None = None,
    output: str | None = None,
) -> ExperimentConfig:
    defaults: list[str] = []
    root = _Section(document, "", defaults)

    driver_value = driver if driver is not None else root.take("driver", str)
    if driver is not None:
        root.seen.add("driver")
    if driver_value not in DRIVERS:
        raise ConfigError(f"driver: must be one of {DRIVERS}, got {driver_value!r}")

    seed_value = seed if seed is not None else root.take("seed", int)
    if seed is not None:
        root.seen.add("seed")
    if seed_value < 0:
        raise ConfigError(f"seed: must be non-negative, got {seed_value}")

    output_value = output if output is not None else root.take("output", str, default=DEFAULT_OUTPUT)
    if output is not None:
        root.seen.add("output")

    train_fraction = root.take("train_fraction", float, default=DEFAULT_TRAIN_FRACTION)
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError(f"train_fraction: must lie in (0, 1), got {train_fraction}")
    balanced = root.take("balanced_split", bool, default=False)

    hidden = DEFAULT_HIDDEN
    if root.has("network"):
        net_section = root.child("network")
        raw_hidden = net_section.take("hidden", list, default=list(DEFAULT_HIDDEN))
        net_section.finish()
        try:
            hidden = tuple(int(h) for h in raw_hidden)
        except (TypeError, ValueError):
            raise ConfigError("network.hidden: widths must be integers") from None
    else:
        defaults.append(f"network.hidden = {list(DEFAULT_HIDDEN)!r}")
        root.seen.add("network")

    if not root.has("data"):
        raise ConfigError("missing required key: data")
    data_section = root.child("data")
    has_csv = data_section.has("csv")
    has_synth = data_section.has("synthetic")
    if has_csv == has_synth:
        raise ConfigError("data: exactly one of data.csv or data.synthetic is required")

    csv_source = None
    synth_spec = None
    if has_csv:
        csv_section = data_section.child("csv")
        csv_path = csv_section.take("path", str)
        label_column = csv_section.take("label_column", str)
        drop_raw = csv_section.take("drop_columns", list, default=[])
        label_map_raw = csv_section.take("label_map", dict, default=None, allow_none=True)
        csv_section.finish()
        label_map = None
        if label_map_raw is not None:
            try:
                label_map = {str(k): int(v) for k, v in label_map_raw.items()}
            except (TypeError, ValueError):
                raise ConfigError("data.csv.label_map: values must be 0/1 integers") from None
            if any(v not in (0, 1) for v in label_map.values()):
                raise ConfigError("data.csv.label_map: values must be 0 or 1")
        csv_source = CsvSource(
            path=Path(csv_path),
            label_column=label_column,
            drop_columns=tuple(str(c) for c in drop_raw),
            label_map=label_map,
        )
    else:
        synth_section = data_section.child("synthetic")
        synth_kwargs = {
            "n_samples": synth_section.take("n_samples", int),
            "n_features": synth_section.take("n_features", int),
            "class_ratio": synth_section.take("class_ratio", float),
            "separation": synth_section.take("separation", float),
            "seed": synth_section.take("seed", int, default=seed_value),
        }
        synth_section.finish()
        synth_spec = _build("data.synthetic", SynthSpec, **synth_kwargs)
    data_section.finish()

    federation_cfg = None
    if root.has("federation"):
        fed_section = root.child("federation")
        n_participants = fed_section.take("n_participants", int)
        subset_size = fed_section.take("subset_size", int)
        batch_size = fed_section.take("batch_size", int, default=DEFAULT_BATCH_SIZE)
        fed_section.finish()
        if subset_size > n_participants:
            raise ConfigError(
                f"federation.subset_size ({subset_size}) must be <= "
                f"federation.n_participants ({n_participants})"
            )
        federation_cfg = _build(
            "federation",
            FederationConfig,
            n_participants=n_participants,
            subset_size=subset_size,
            batch_size=batch_size,
            seed=seed_value,
        )
    elif driver_value in ("fedsa", "fedavg"):
        raise ConfigError(f"missing required key: federation (driver {driver_value})")
    else:
        root.seen.add("federation")

    fedavg_cfg = None
    if root.has("fedavg"):
        avg_section = root.child("fedavg")
        fedavg_cfg = _build(
            "fedavg",
            FedAvgConfig,
            tau=avg_section.take("tau", int),
            eta0=avg_section.take("eta0", float),
            rounds=avg_section.take("rounds", int),
        )
        avg_section.finish()
    elif driver_value in ("fedavg", "centralized"):
        raise ConfigError(f"missing required key: fedavg (driver {driver_value})")
    else:
        root.seen.add("fedavg")

    fedsa_cfg = None
    eta_bounds = DEFAULT_ETA_BOUNDS
    tau_bounds = DEFAULT_TAU_BOUNDS
    sweep_spec = None
    if root.has("fedsa"):
        sa_section = root.child("fedsa")
        epochs = sa_section.take("epochs", int)
        t_init = sa_section.take("t_init", float, default=DEFAULT_T_INIT)
        alpha = sa_section.take("alpha", float, default=DEFAULT_ALPHA)
        epsilon = sa_section.take("epsilon", float, default=DEFAULT_EPSILON)
        eta_bounds = _pair(sa_section, "eta_bounds", float, DEFAULT_ETA_BOUNDS)
        tau_bounds = _pair(sa_section, "tau_bounds", int, DEFAULT_TAU_BOUNDS)
        cool_mode = sa_section.take("cool_mode", str, default=COOL_ONE_MINUS_ALPHA)
        sa_section.finish()
        fedsa_cfg = _build(
            "fedsa",
            FedSAConfig,
            t_init=t_init,
            alpha=alpha,
            epsilon=epsilon,
            epochs=epochs,
            seed=seed_value,
            cool_mode=cool_mode,
        )
        if fedsa_cfg.epochs < 1:
            raise ConfigError(f"fedsa.epochs: must be >= 1, got {fedsa_cfg.epochs}")
        if eta_bounds[0] >= eta_bounds[1]:
            raise ConfigError(f"fedsa.eta_bounds: low must be < high, got {list(eta_bounds)}")
        if tau_bounds[0] > tau_bounds[1] or tau_bounds[0] < 1:
            raise ConfigError(f"fedsa.tau_bounds: need 1 <= low <= high, got {list(tau_bounds)}")
        if eta_bounds[0] <= 0.0:
            raise ConfigError(f"fedsa.eta_bounds: low must be > 0, got {eta_bounds[0]}")
    elif driver_value == "fedsa":
        raise ConfigError("missing required key: fedsa (driver fedsa)")
    else:
        root.seen.add("fedsa")

    if root.has("sweep"):
        sweep_section = root.child("sweep")
        t_inits = tuple(float(v) for v in sweep_section.take("t_init", list))
        alphas = tuple(float(v) for v in sweep_section.take("alpha", list))
        seeds = tuple(int(v) for v in sweep_section.take("seeds", list))
        sweep_section.finish()
        if not (t_inits and alphas and seeds):
            raise ConfigError("sweep: t_init, alpha and seeds must be non-empty lists")
        for name, values, check in (
            ("t_init", t_inits, lambda v: v > 0),
            ("alpha", alphas, lambda v: 0 < v < 1),
            ("seeds", seeds, lambda v: v >= 0),
        ):
            bad = [v for v in values if not check(v)]
            if bad:
                raise ConfigError(f"sweep.{name}: invalid value(s) {bad}")
        sweep_spec = SweepSpec(t_inits=t_inits, alphas=alphas, seeds=seeds)
    else:
        root.seen.add("sweep")

    root.finish()

    cfg = ExperimentConfig(
        driver=driver_value,
        seed=seed_value,
        output=Path(output_value),
        train_fraction=train_fraction,
        balanced_split=balanced,
        hidden=hidden,
        csv=csv_source,
        synthetic=synth_spec,
        federation=federation_cfg,
        fedavg=fedavg_cfg,
        fedsa=fedsa_cfg,
        eta_bounds=eta_bounds,
        tau_bounds=tau_bounds,
        sweep=sweep_spec,
        applied_defaults=tuple(defaults),
    )
    for entry in cfg.applied_defaults:
        logger.info("default applied: %s", entry)
    return cfg
