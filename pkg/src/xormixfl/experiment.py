"""Run dispatch, sweeps, report files and sample-image export."""

from __future__ import annotations

import csv
import itertools
import logging
import math
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from functools import lru_cache
from pathlib import Path

import numpy as np

from .blending import BlendParams, blend_chain
from .config import ExperimentConfig, RunReport
from .dataset import NUM_CLASSES, Dataset, load_mnist, partition
from .errors import ConfigError
from .privacy import PrivacySummary, score_augmented, summarize, write_privacy_csv
from .seeding import substream
from .xorcodec import MIX, XOR, decode, encode, quantize, xor_bytes

log = logging.getLogger(__name__)

METRIC_COLUMNS = (["method", "N", "M", "p", "alpha", "seed", "test_acc", "target_label_acc"]
                  + [f"per_label_{k}" for k in range(NUM_CLASSES)])
SWEEP_COLUMNS = (["cell", "method", "N", "M", "p", "alpha", "seed", "target_labels", "dummy_labels",
                  "test_acc", "target_label_acc"] + [f"per_label_{k}" for k in range(NUM_CLASSES)]
                 + ["privacy_mean", "privacy_std", "privacy_count", "error"])
METHOD_TAGS = {"xormixfl": "XorMixFL", "mixfl": "MixFL", "standalone": "Standalone", "vanillafl": "VanillaFL"}


@lru_cache(maxsize=4)
def _load(directory: str) -> tuple[Dataset, Dataset]:
    return load_mnist(directory)


def load_data(directory) -> tuple[Dataset, Dataset]:
    """MNIST ``(train, test)`` from ``directory``, cached per process."""
    return _load(str(Path(directory).resolve()))


def run_config(config: ExperimentConfig, data: tuple[Dataset, Dataset] | None = None,
               privacy_only: bool = False, keep: list | None = None) -> RunReport:
    """Run the configured method once.

    ``privacy_only`` stops XorMixFL/MixFL after decoding: no model is
    trained, the report carries privacy statistics only.
    """
    from .baselines import BaselineKind, run_baseline_report, run_mixfl
    from .protocol import privacy_summary, run_exchange, run_one_shot

    data = data if data is not None else load_data(config.resolve_data_dir())
    if privacy_only:
        if config.method not in ("xormixfl", "mixfl"):
            raise ConfigError("method", "privacy-only runs need xormixfl or mixfl")
        scheme = XOR if config.method == "xormixfl" else MIX
        tag = METHOD_TAGS[config.method]
        exchange = run_exchange(data[0], config, scheme, data[1])
        if keep is not None:
            keep.append(exchange)
        return RunReport(config=config.to_dict(), method=tag,
                         privacy=privacy_summary(exchange, data[0], config, tag),
                         message_counts=exchange.bus.counts(), message_digest=exchange.bus.digest())
    if config.method == "xormixfl":
        return run_one_shot(config, data, keep)
    if config.method == "mixfl":
        return run_mixfl(config, data, keep)
    return run_baseline_report(BaselineKind(config.method), config, data)


def metrics_row(report: RunReport) -> dict:
    cfg = report.config
    row = {"method": report.method, "N": len(cfg["partition"]["target_labels"]),
           "M": len(cfg["partition"]["dummy_labels"]), "p": cfg["blend"]["p"], "alpha": cfg["blend"]["alpha"],
           "seed": cfg["seed"], "test_acc": "", "target_label_acc": ""}
    row.update({f"per_label_{k}": "" for k in range(NUM_CLASSES)})
    if report.eval is not None:
        row["test_acc"] = report.eval.test_accuracy
        row["target_label_acc"] = "" if report.eval.target_label_accuracy is None else report.eval.target_label_accuracy
        for k, acc in report.eval.per_label_accuracy.items():
            row[f"per_label_{k}"] = acc
    return row


def write_run_outputs(report: RunReport, out_dir, exchange=None) -> list[Path]:
    """report.json, metrics.csv and privacy.csv; plus messages.jsonl and augmented.npz when an exchange ran."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json())
    with open(out / "metrics.csv", "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=METRIC_COLUMNS)
        w.writeheader()
        w.writerow(metrics_row(report))
    write_privacy_csv([report.privacy] if report.privacy else [], out / "privacy.csv")
    written = [out / "report.json", out / "metrics.csv", out / "privacy.csv"]
    if exchange is not None:
        exchange.bus.write_jsonl(out / "messages.jsonl")
        save_augmented(exchange.server.decoded, exchange.scheme, out / "augmented.npz")
        written += [out / "messages.jsonl", out / "augmented.npz"]
    return written


def save_augmented(decoded, scheme: str, path) -> None:
    width = max((len(d.contributors) for d in decoded), default=0)
    contributors = np.full((len(decoded), width), -1, dtype=np.int64)
    for i, d in enumerate(decoded):
        contributors[i, :len(d.contributors)] = d.contributors
    pixels = np.stack([d.pixels for d in decoded]) if decoded else np.zeros((0, 0), np.uint8)
    np.savez_compressed(path, pixels=pixels, labels=np.array([d.label for d in decoded], dtype=np.int64),
                        contributors=contributors, scheme=np.array(scheme))


class _Augmented:
    def __init__(self, pixels, label, contributors):
        self.pixels = pixels
        self.label = label
        self.contributors = contributors


def load_augmented(path) -> tuple[list[_Augmented], str]:
    with np.load(path) as z:
        items = [_Augmented(p, int(lab), tuple(int(c) for c in row if c >= 0))
                 for p, lab, row in zip(z["pixels"], z["labels"], z["contributors"])]
        return items, str(z["scheme"])


def score_augmented_file(path, source: Dataset, config: ExperimentConfig) -> PrivacySummary:
    items, scheme = load_augmented(path)
    tag = "XorMixFL" if scheme == XOR else "MixFL"
    return summarize(score_augmented(items, source), tag, config.M, config.blend.p, config.blend.alpha)


# --- sweeps -----------------------------------------------------------------

def expand_grid(grid: dict[str, list]) -> list[dict]:
    if not grid:
        raise ConfigError("sweep.grid", "grid is empty")
    for key, values in grid.items():
        if not isinstance(values, list) or not values:
            raise ConfigError(f"sweep.grid.{key}", "must be a non-empty list")
    keys = list(grid)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


def _sweep_task(args):
    index, cell, seed, base, data_dir, privacy_only = args
    row = {"cell": index, "seed": seed, "error": ""}
    try:
        cfg = base.with_overrides(**cell, seed=seed)
        row.update({"method": METHOD_TAGS[cfg.method], "N": cfg.N, "M": cfg.M, "p": cfg.blend.p,
                    "alpha": cfg.blend.alpha,
                    "target_labels": " ".join(map(str, cfg.partition.target_labels)),
                    "dummy_labels": " ".join(map(str, cfg.partition.dummy_labels))})
        report = run_config(cfg, load_data(data_dir), privacy_only=privacy_only)
        metrics = metrics_row(report)
        row.update({k: metrics[k] for k in METRIC_COLUMNS if k.startswith(("test_acc", "target_label", "per_label"))})
        if report.privacy is not None:
            row.update({"privacy_mean": report.privacy.mean, "privacy_std": report.privacy.std_dev,
                        "privacy_count": report.privacy.count})
    except Exception as exc:  # partial-failure policy: record and continue
        log.warning("sweep cell %d seed %s failed: %s", index, seed, exc)
        row["error"] = f"{type(exc).__name__}: {exc}"
        log.debug("%s", traceback.format_exc())
    return row


def run_sweep(base: ExperimentConfig, grid: dict[str, list], seeds: list[int], workers: int = 1,
              privacy_only: bool = False) -> list[dict]:
    """One row per (cell, seed) in cell order, followed by that cell's mean row."""
    if not seeds:
        raise ConfigError("sweep.seeds", "seed list is empty")
    cells = expand_grid(grid)
    for cell in cells:  # validate everything before any run starts
        for seed in seeds:
            base.with_overrides(**cell, seed=seed)
    data_dir = str(base.resolve_data_dir())
    tasks = [(i, cell, seed, base, data_dir, privacy_only) for i, cell in enumerate(cells) for seed in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_task, tasks))
    else:
        rows = [_sweep_task(t) for t in tasks]
    out = []
    for i in range(len(cells)):
        cell_rows = [r for r in rows if r["cell"] == i]
        out.extend(cell_rows)
        out.append(_mean_row(i, cell_rows))
    return out


def _mean_row(index: int, rows: list[dict]) -> dict:
    good = [r for r in rows if not r.get("error")]
    mean = {"cell": index, "seed": "mean", "error": "" if good else "all runs failed"}
    template = good[0] if good else rows[0]
    for key in ("method", "N", "M", "p", "alpha", "target_labels", "dummy_labels"):
        mean[key] = template.get(key, "")
    numeric = ["test_acc", "target_label_acc", "privacy_mean", "privacy_std", "privacy_count"] + \
              [f"per_label_{k}" for k in range(NUM_CLASSES)]
    for key in numeric:
        values = [r[key] for r in good if r.get(key) not in (None, "")]
        mean[key] = float(np.mean(values)) if values else ""
    return mean


def write_sweep_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=SWEEP_COLUMNS, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: r.get(k, "") for k in SWEEP_COLUMNS})


def write_sweep_privacy_csv(rows: list[dict], path) -> None:
    """Per-cell mean privacy rows in the privacy.csv schema."""
    summaries = []
    for r in rows:
        if r["seed"] == "mean" and r.get("privacy_mean") not in (None, ""):
            summaries.append(PrivacySummary(r["privacy_mean"], r["privacy_std"], int(r["privacy_count"]),
                                            r["method"], r["M"], r["p"], r["alpha"]))
    write_privacy_csv(summaries, path)


# --- images -----------------------------------------------------------------

def write_pgm(path, pixels, shape=(28, 28)) -> None:
    """Binary 8-bit PGM (P5)."""
    rows, cols = shape
    data = np.asarray(pixels, dtype=np.uint8).reshape(rows, cols)
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (cols, rows))
        f.write(data.tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as f:
        blob = f.read()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while blob[pos:pos + 1].isspace():
            pos += 1
        if blob[pos:pos + 1] == b"#":
            pos = blob.index(b"\n", pos) + 1
            continue
        end = pos
        while not blob[end:end + 1].isspace():
            end += 1
        tokens.append(blob[pos:end])
        pos = end
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    cols, rows, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval > 255:
        raise ValueError(f"{path}: 16-bit PGM not supported")
    pixels = np.frombuffer(blob, dtype=np.uint8, count=rows * cols, offset=pos + 1)
    return pixels.reshape(rows, cols)


def export_samples(config: ExperimentConfig, count: int, out_dir, data: tuple[Dataset, Dataset] | None = None) -> list[Path]:
    """Write the six visual panels per example: raw target/dummy, cipher, mixup, decodes at p=1 and p=3."""
    if count < 0:
        raise ConfigError("count", "must be >= 0")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if count == 0:
        return []
    train_full, test = data if data is not None else load_data(config.resolve_data_dir())
    part = partition(train_full, config.partition, test)
    target, dummy = config.partition.target_labels[0], config.partition.dummy_labels[0]
    device = part.device_shards[0]
    dev_t, dev_d, srv_d = device.by_label(target), device.by_label(dummy), part.server_shard.by_label(dummy)
    alpha = config.blend.alpha
    shape = train_full.image_shape
    p1, p3 = BlendParams(alpha, 1), BlendParams(alpha, 3)
    written = []
    for i in range(count):
        rng = substream(config.seed, f"export/{i}")
        t1, d1, s1 = blend_chain(dev_t, p1, rng), blend_chain(dev_d, p1, rng), blend_chain(srv_d, p1, rng)
        enc1 = encode(t1, d1, device=0)
        t3, d3, s3 = blend_chain(dev_t, p3, rng), blend_chain(dev_d, p3, rng), blend_chain(srv_d, p3, rng)
        panels = {
            "raw_target": quantize(t1.values),
            "raw_dummy": quantize(d1.values),
            "encoded": enc1.cipher,
            "mixup": quantize(alpha * t1.values + (1 - alpha) * d1.values),
            "decoded_p1": decode(enc1, s1).pixels,
            "decoded_p3": decode(encode(t3, d3, device=0), s3).pixels,
        }
        for name, pixels in panels.items():
            path = out / f"{name}_{i:03d}.pgm"
            write_pgm(path, pixels, shape)
            written.append(path)
    return written
