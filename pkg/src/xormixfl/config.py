"""Experiment configuration and run reports.

Configs are TOML files with one table per component::

    method = "xormixfl"
    seed = 0

    [data]
    dir = "data/mnist"

    [partition]
    num_devices = 3
    target_labels = [5]
    dummy_labels = [2]
    n = 10
    m = 200
    server_rich = 500
    server_deficient = 10

    [blend]
    alpha = 0.5
    p = 1

    [train]
    learning_rate = 0.1
    batch_size = 32
    epochs = 20
    hidden = 128

    [fedavg]
    rounds = 10
    local_epochs = 1

    [output]
    dir = "out"

Every key is optional; unknown keys are rejected.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .blending import BlendParams
from .classifier import EvalReport, TrainConfig
from .dataset import PartitionSpec
from .errors import ConfigError
from .privacy import PrivacySummary

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

METHODS = ("xormixfl", "mixfl", "standalone", "vanillafl")
DATA_ENV = "XORMIXFL_DATA"


@dataclass(frozen=True)
class FedAvgConfig:
    rounds: int = 10
    local_epochs: int = 1

    def __post_init__(self):
        if self.rounds < 1:
            raise ConfigError("fedavg.rounds", "must be >= 1")
        if self.local_epochs < 1:
            raise ConfigError("fedavg.local_epochs", "must be >= 1")


@dataclass(frozen=True)
class ExperimentConfig:
    method: str = "xormixfl"
    seed: int = 0
    partition: PartitionSpec = PartitionSpec()
    blend: BlendParams = BlendParams()
    train: TrainConfig = TrainConfig()
    fedavg: FedAvgConfig = FedAvgConfig()
    data_dir: str | None = None
    out_dir: str = "out"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError("method", f"unknown method {self.method!r}; valid methods: {', '.join(METHODS)}")
        # one master seed drives every sub-stream
        if self.partition.seed != self.seed:
            object.__setattr__(self, "partition", replace(self.partition, seed=self.seed))
        if self.train.seed != self.seed:
            object.__setattr__(self, "train", replace(self.train, seed=self.seed))

    @property
    def N(self) -> int:
        return self.partition.N

    @property
    def M(self) -> int:
        return self.partition.M

    def resolve_data_dir(self) -> Path:
        d = self.data_dir or os.environ.get(DATA_ENV)
        if not d:
            raise ConfigError("data.dir", f"no dataset directory; set data.dir or ${DATA_ENV}")
        return Path(d)

    def with_overrides(self, **changes) -> ExperimentConfig:
        """Return a copy with top-level fields or dotted ``section.key`` entries replaced."""
        d = self.to_dict()
        for key, value in changes.items():
            section, _, name = key.rpartition(".")
            target = d[section] if section else d
            if section and name not in target:
                raise ConfigError(key, "unknown key")
            target[name] = value
        return ExperimentConfig.from_dict(d)

    def to_dict(self) -> dict:
        part = asdict(self.partition)
        part.pop("seed")
        part["target_labels"] = list(part["target_labels"])
        part["dummy_labels"] = list(part["dummy_labels"])
        train = asdict(self.train)
        train.pop("seed")
        return {
            "method": self.method,
            "seed": self.seed,
            "data": {"dir": self.data_dir},
            "partition": part,
            "blend": asdict(self.blend),
            "train": train,
            "fedavg": asdict(self.fedavg),
            "output": {"dir": self.out_dir},
        }

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        sections = {"data", "partition", "blend", "train", "fedavg", "output"}
        for key in d:
            if key not in sections | {"method", "seed"}:
                raise ConfigError(key, "unknown key")
        seed = _typed(d, "seed", "seed", int, 0)
        method = _typed(d, "method", "method", str, "xormixfl")

        def section(name, klass, skip=()):
            raw = d.get(name) or {}
            if not isinstance(raw, dict):
                raise ConfigError(name, "must be a table")
            allowed = {f.name: f for f in fields(klass) if f.name not in skip}
            kwargs = {}
            for key, value in raw.items():
                if key not in allowed:
                    raise ConfigError(f"{name}.{key}", "unknown key")
                kwargs[key] = _coerce(f"{name}.{key}", value, allowed[key].type)
            return kwargs

        part = section("partition", PartitionSpec, ("seed",))
        train = section("train", TrainConfig, ("seed",))
        data = d.get("data") or {}
        output = d.get("output") or {}
        for name, raw, keys in (("data", data, {"dir"}), ("output", output, {"dir"})):
            for key in raw:
                if key not in keys:
                    raise ConfigError(f"{name}.{key}", "unknown key")
        return cls(
            method=method,
            seed=seed,
            partition=PartitionSpec(seed=seed, **part),
            blend=BlendParams(**section("blend", BlendParams)),
            train=TrainConfig(seed=seed, **train),
            fedavg=FedAvgConfig(**section("fedavg", FedAvgConfig)),
            data_dir=data.get("dir"),
            out_dir=output.get("dir", "out"),
        )

    @classmethod
    def from_toml(cls, path) -> ExperimentConfig:
        try:
            with open(path, "rb") as f:
                raw = tomllib.load(f)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError("", f"{path}: {exc}") from exc
        except OSError as exc:
            raise ConfigError("", f"cannot read config {path}: {exc}") from exc
        cfg = cls.from_dict(raw)
        # relative data paths are relative to the config file
        if cfg.data_dir and not Path(cfg.data_dir).is_absolute():
            cfg = replace(cfg, data_dir=str((Path(path).parent / cfg.data_dir).resolve()))
        return cfg


def _typed(d, key, path, kind, default):
    value = d.get(key, default)
    return _coerce(path, value, kind)


def _coerce(path, value, annotation):
    kind = annotation if isinstance(annotation, type) else str(annotation)
    if kind in (int, "int"):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if kind in (float, "float"):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if kind in (str, "str"):
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    if "tuple" in str(kind):
        if not isinstance(value, (list, tuple)) or not all(isinstance(v, int) and not isinstance(v, bool) for v in value):
            raise ConfigError(path, f"expected a list of integers, got {value!r}")
        return tuple(value)
    return value


@dataclass
class RunReport:
    config: dict
    method: str
    eval: EvalReport | None = None
    privacy: PrivacySummary | None = None
    train_inventory: list[int] = field(default_factory=list)
    message_counts: dict[str, int] = field(default_factory=dict)
    message_digest: str | None = None
    wall_clock_seconds: float = 0.0

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "method": self.method,
            "eval": self.eval.to_dict() if self.eval else None,
            "privacy": self.privacy.to_dict() if self.privacy else None,
            "train_inventory": list(self.train_inventory),
            "message_counts": dict(self.message_counts),
            "message_digest": self.message_digest,
            "wall_clock_seconds": self.wall_clock_seconds,
        }

    @classmethod
    def from_dict(cls, d: dict) -> RunReport:
        return cls(
            config=d["config"],
            method=d["method"],
            eval=EvalReport.from_dict(d["eval"]) if d.get("eval") else None,
            privacy=PrivacySummary.from_dict(d["privacy"]) if d.get("privacy") else None,
            train_inventory=list(d.get("train_inventory", [])),
            message_counts=dict(d.get("message_counts", {})),
            message_digest=d.get("message_digest"),
            wall_clock_seconds=d.get("wall_clock_seconds", 0.0),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> RunReport:
        return cls.from_dict(json.loads(text))

    def reproducible_part(self) -> dict:
        """Everything except wall-clock time; equal across reruns of one config."""
        d = self.to_dict()
        d.pop("wall_clock_seconds")
        return d
