"""Comparison schemes: standalone server training, FedAvg, and the MixFL ablation."""

from __future__ import annotations

import time
from enum import Enum

import numpy as np

from .classifier import EvalReport, ModelParams, TrainConfig, evaluate, init_params, train
from .config import ExperimentConfig, FedAvgConfig, RunReport
from .dataset import NUM_CLASSES, Dataset, inventory, partition
from .errors import ShapeMismatch, ZeroWeights
from .protocol import finish_exchange, run_exchange
from .seeding import substream
from .xorcodec import MIX

__all__ = ["BaselineKind", "FedAvgConfig", "fedavg_aggregate", "run_mixfl", "run_standalone", "run_vanilla_fl"]


class BaselineKind(Enum):
    STANDALONE = "standalone"
    VANILLA_FL = "vanillafl"
    MIXFL = "mixfl"


def run_standalone(server_shard: Dataset, cfg: TrainConfig, test: Dataset, target_labels=()) -> EvalReport:
    """Train on the server's own imbalanced shard only."""
    return evaluate(train(server_shard, cfg), test, target_labels)


def fedavg_aggregate(models: list[ModelParams], weights) -> ModelParams:
    """Parameter-wise weighted mean with weights normalised to sum to one."""
    if not models:
        raise ValueError("no models to aggregate")
    weights = np.asarray(weights, dtype=np.float64)
    if len(weights) != len(models):
        raise ValueError(f"{len(models)} models but {len(weights)} weights")
    if (weights < 0).any():
        raise ValueError("weights must be nonnegative")
    if weights.sum() == 0:
        raise ZeroWeights("aggregation weights sum to zero")
    shapes = [tuple(a.shape for a in m.arrays()) for m in models]
    if len(set(shapes)) != 1:
        raise ShapeMismatch(f"models have differing architectures: {sorted(set(shapes))}")
    weights = weights / weights.sum()
    dtype = models[0].w1.dtype
    merged = []
    for arrays in zip(*(m.arrays() for m in models)):
        acc = np.zeros(arrays[0].shape, dtype=np.float64)
        for w, a in zip(weights, arrays):
            if w:
                acc += w * a
        merged.append(acc.astype(dtype))
    return ModelParams(*merged)


def fedavg_train(clients: list[Dataset], facfg: FedAvgConfig, cfg: TrainConfig) -> ModelParams:
    if not clients:
        raise ValueError("FedAvg needs at least one participant")
    n_in = clients[0].n_pixels
    model = init_params(n_in, cfg.hidden, NUM_CLASSES, substream(cfg.seed, "model-init"))
    sizes = [len(c) for c in clients]
    for r in range(facfg.rounds):
        local = [train(c, cfg, init=model, epochs=facfg.local_epochs, stream=f"fedavg/{r}/{j}")
                 for j, c in enumerate(clients)]
        model = fedavg_aggregate(local, sizes)
    return model


def run_vanilla_fl(device_shards: list[Dataset], server_shard: Dataset, facfg: FedAvgConfig, cfg: TrainConfig,
                   test: Dataset, target_labels=()) -> EvalReport:
    """FedAvg over the devices plus the server acting as one more client."""
    return evaluate(fedavg_train([server_shard, *device_shards], facfg, cfg), test, target_labels)


def run_mixfl(config: ExperimentConfig, data: tuple[Dataset, Dataset] | None = None,
              keep: list | None = None) -> RunReport:
    """Same exchange as XorMixFL, but devices upload quantized linear blends that the server keeps verbatim."""
    from .experiment import load_data

    started = time.perf_counter()
    train_full, test = data if data is not None else load_data(config.resolve_data_dir())
    exchange = run_exchange(train_full, config, MIX, test)
    report = finish_exchange(exchange, train_full, test, config, "MixFL", started)
    if keep is not None:
        keep.append(exchange)
    return report


def run_baseline_report(kind: BaselineKind, config: ExperimentConfig, data: tuple[Dataset, Dataset]) -> RunReport:
    """Standalone / Vanilla FL wrapped in a RunReport (no uploads, so no privacy stats)."""
    started = time.perf_counter()
    train_full, test = data
    part = partition(train_full, config.partition, test)
    targets = config.partition.target_labels
    if kind is BaselineKind.STANDALONE:
        report = run_standalone(part.server_shard, config.train, test, targets)
        tag = "Standalone"
    elif kind is BaselineKind.VANILLA_FL:
        report = run_vanilla_fl(part.device_shards, part.server_shard, config.fedavg, config.train, test, targets)
        tag = "VanillaFL"
    else:
        raise ValueError(f"{kind} is not a model-only baseline")
    return RunReport(config=config.to_dict(), method=tag, eval=report,
                     train_inventory=inventory(part.server_shard).as_list(),
                     wall_clock_seconds=time.perf_counter() - started)
