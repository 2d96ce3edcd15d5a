"""``xormixfl`` command line.

Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ExperimentConfig, tomllib
from .errors import ConfigError, XorMixFLError

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

log = logging.getLogger("xormixfl")


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_toml(args.config) if args.config else ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_overrides(seed=args.seed)
    return cfg


def _out_dir(args, cfg: ExperimentConfig) -> Path:
    return Path(args.out if getattr(args, "out", None) else cfg.out_dir)


def cmd_run(args) -> int:
    from .experiment import load_data, run_config, write_run_outputs

    cfg = _load_config(args)
    data = load_data(cfg.resolve_data_dir())
    keep = []
    report = run_config(cfg, data, keep=keep)
    out = _out_dir(args, cfg)
    write_run_outputs(report, out, keep[0] if keep else None)
    line = {"method": report.method, "out": str(out)}
    if report.eval:
        line["test_acc"] = round(report.eval.test_accuracy, 4)
        line["target_label_acc"] = report.eval.target_label_accuracy
    if report.privacy:
        line["privacy_mean"] = round(report.privacy.mean, 2)
        line["privacy_std"] = round(report.privacy.std_dev, 2)
    print(json.dumps(line))
    return EXIT_OK


def _sweep_table(path) -> tuple[dict, list[int], int, bool]:
    try:
        with open(path, "rb") as f:
            raw = tomllib.load(f)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError("", f"cannot read {path}: {exc}") from exc
    sweep = raw.get("sweep")
    if not isinstance(sweep, dict):
        raise ConfigError("sweep", "sweep config needs a [sweep] table")
    unknown = set(sweep) - {"grid", "seeds", "workers", "privacy_only"}
    if unknown:
        raise ConfigError(f"sweep.{sorted(unknown)[0]}", "unknown key")
    seeds = sweep.get("seeds", [0])
    if not isinstance(seeds, list):
        raise ConfigError("sweep.seeds", "must be a list of integers")
    return sweep.get("grid", {}), seeds, int(sweep.get("workers", 1)), bool(sweep.get("privacy_only", False))


def cmd_sweep(args) -> int:
    from .experiment import run_sweep, write_sweep_csv, write_sweep_privacy_csv

    if not args.config:
        raise ConfigError("config", "sweep requires --config")
    # the base config is the same file without its [sweep] table
    with open(args.config, "rb") as f:
        raw = tomllib.load(f)
    raw.pop("sweep", None)
    base = ExperimentConfig.from_dict(raw)
    if base.data_dir and not Path(base.data_dir).is_absolute():
        base = base.with_overrides(**{"data.dir": str((Path(args.config).parent / base.data_dir).resolve())})
    grid, seeds, workers, privacy_only = _sweep_table(args.config)
    if args.seed is not None:
        seeds = [args.seed]
    workers = args.workers if args.workers is not None else workers
    privacy_only = privacy_only or args.privacy_only
    rows = run_sweep(base, grid, seeds, workers=workers, privacy_only=privacy_only)
    out = _out_dir(args, base)
    out.mkdir(parents=True, exist_ok=True)
    write_sweep_csv(rows, out / "sweep.csv")
    write_sweep_privacy_csv(rows, out / "privacy.csv")
    failed = sum(1 for r in rows if r["seed"] != "mean" and r["error"])
    print(json.dumps({"runs": sum(1 for r in rows if r["seed"] != "mean"), "failed": failed, "out": str(out)}))
    return EXIT_RUNTIME if failed and failed == sum(1 for r in rows if r["seed"] != "mean") else EXIT_OK


def cmd_export(args) -> int:
    from .experiment import export_samples

    cfg = _load_config(args)
    written = export_samples(cfg, args.count, _out_dir(args, cfg))
    print(json.dumps({"written": len(written), "out": str(_out_dir(args, cfg))}))
    return EXIT_OK


def cmd_privacy(args) -> int:
    from .experiment import load_data, score_augmented_file
    from .privacy import write_privacy_csv

    cfg = _load_config(args)
    train_full, _ = load_data(cfg.resolve_data_dir())
    summary = score_augmented_file(args.augmented, train_full, cfg)
    out = _out_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    write_privacy_csv([summary], out / "privacy.csv")
    print(json.dumps(summary.to_dict()))
    return EXIT_OK


def cmd_partition(args) -> int:
    from .dataset import inventory, partition
    from .experiment import load_data
    from .protocol import plan_quotas

    cfg = _load_config(args)
    train_full, test = load_data(cfg.resolve_data_dir())
    part = partition(train_full, cfg.partition, test)
    server_inv = inventory(part.server_shard)
    plan = plan_quotas(server_inv, cfg.partition.target_labels, cfg.partition.num_devices, cfg.partition.server_rich)
    summary = {
        "server": server_inv.as_list(),
        "devices": [inventory(d).as_list() for d in part.device_shards],
        "holdout": len(part.holdout_test),
        "quota": {f"{d}/{label}": q for (d, label), q in sorted(plan.per_device.items())},
        "quota_total": plan.total,
    }
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xormixfl", description="One-shot federated learning with XOR-encoded mixup.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out=True):
        p.add_argument("--config", help="TOML experiment config")
        p.add_argument("--seed", type=int, help="override the master seed")
        if out:
            p.add_argument("--out", help="output directory (default: output.dir)")
        return p

    common(sub.add_parser("run", help="run one experiment")).set_defaults(func=cmd_run)
    p = common(sub.add_parser("sweep", help="run a parameter grid over seeds"))
    p.add_argument("--workers", type=int, help="parallel worker processes")
    p.add_argument("--privacy-only", action="store_true", help="skip model training")
    p.set_defaults(func=cmd_sweep)
    p = common(sub.add_parser("export-samples", help="write example images as PGM"))
    p.add_argument("--count", type=int, default=4)
    p.set_defaults(func=cmd_export)
    p = common(sub.add_parser("privacy", help="score a saved augmented set"))
    p.add_argument("--augmented", required=True, help="augmented.npz written by `run`")
    p.set_defaults(func=cmd_privacy)
    p = common(sub.add_parser("partition", help="show the data split"), out=False)
    p.add_argument("--dry-run", action="store_true", help="print shard inventories and quotas (the only mode)")
    p.set_defaults(func=cmd_partition)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (XorMixFLError, OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
