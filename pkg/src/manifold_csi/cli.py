"""Command-line interface.

Subcommands: gen-data, train, compress, reconstruct, eval, sweep. Exit codes:
0 on success, 2 on configuration errors, 3 on numeric failures.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import storage
from .channel import add_estimation_noise, build_dataset
from .codec import CodecBundle, compress, reconstruct
from .experiment import (
    ConfigError,
    config_hash,
    config_to_text,
    ExperimentConfig,
    load_config,
    run_eval,
    run_sweep,
    run_train,
)

__all__ = ["main"]


def _add_config_arg(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="experiment config file (key = value lines)")


def _load(args) -> ExperimentConfig:
    config = load_config(args.config) if args.config else ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        config = replace(config, seed=args.seed)
    if getattr(args, "output_dir", None) is not None:
        config = replace(config, output_dir=str(args.output_dir))
    config.validate()
    return config


def _cmd_gen_data(args) -> int:
    config = _load(args)
    slots = args.slots if args.slots is not None else config.train_slots
    channel = replace(config.channel, rng_seed=config.seed)
    data = build_dataset(channel, slots)
    if args.snr_db is not None:
        data = add_estimation_noise(data, args.snr_db, rng=config.seed + 1)
    out = args.out or (config.resolved_output_dir() / "dataset.mlcf")
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    storage.write_matrix(out, data)
    print(f"wrote {data.shape[0]}x{data.shape[1]} dataset to {out}")
    return 0


def _cmd_train(args) -> int:
    config = _load(args)
    bundle_dir = run_train(config)
    print(f"bundle directory: {bundle_dir}")
    return 0


def _cmd_compress(args) -> int:
    bundle = CodecBundle.load(args.bundle)
    csi = storage.read_matrix(args.input)
    embedding, stats = compress(csi, bundle, k=args.k, lam=args.lam)
    storage.write_matrix(args.output, embedding)
    print(
        f"compressed {csi.shape} -> {embedding.shape}; "
        f"mean landmark-fit error {stats.approx_errors.mean():.3e}"
    )
    return 0


def _cmd_reconstruct(args) -> int:
    bundle = CodecBundle.load(args.bundle)
    embedding = storage.read_matrix(args.input)
    csi = reconstruct(embedding, bundle, k=args.k, lam=args.lam)
    storage.write_matrix(args.output, csi)
    print(f"reconstructed {embedding.shape} -> {csi.shape}")
    return 0


def _cmd_eval(args) -> int:
    config = _load(args)
    bundle_dir = args.bundle or run_train(config)
    records = run_eval(bundle_dir, config)
    out = config.resolved_output_dir() / "results" / f"{config_hash(config.seeded())}.csv"
    print(f"{len(records)} records -> {out}")
    for rec in records:
        bits = "raw" if rec.bits is None else f"{rec.bits}b"
        print(
            f"  gamma={rec.gamma} bits={bits} snr={rec.snr_db} "
            f"NMSE={rec.nmse_db:.2f} dB cosine={rec.cosine:.4f}"
        )
    return 0


def _cmd_sweep(args) -> int:
    config = _load(args)
    table = run_sweep(config)
    print(f"results table: {table}")
    return 0


def _cmd_show_config(args) -> int:
    print(config_to_text(_load(args)), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="manifold-csi",
        description="Landmark-based CSI compression: data generation, training, evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic CSI dataset file")
    _add_config_arg(p)
    p.add_argument("--out", type=Path, help="output matrix file")
    p.add_argument("--slots", type=int, help="number of slots (defaults to train_slots)")
    p.add_argument("--seed", type=int)
    p.add_argument("--snr-db", type=float, dest="snr_db", help="add estimation noise at this SNR")
    p.add_argument("--output-dir", type=Path, dest="output_dir")
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("train", help="learn codec bundles for every configured gamma")
    _add_config_arg(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--output-dir", type=Path, dest="output_dir")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("compress", help="compress a CSI matrix file with a trained bundle")
    p.add_argument("--bundle", type=Path, required=True, help="bundle gamma directory")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--output", type=Path, required=True)
    p.add_argument("--k", type=int, help="override the neighbor count")
    p.add_argument("--lam", type=float, help="override the locality weight")
    p.set_defaults(func=_cmd_compress)

    p = sub.add_parser("reconstruct", help="reconstruct CSI from an embedding file")
    p.add_argument("--bundle", type=Path, required=True, help="bundle gamma directory")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--output", type=Path, required=True)
    p.add_argument("--k", type=int)
    p.add_argument("--lam", type=float)
    p.set_defaults(func=_cmd_reconstruct)

    p = sub.add_parser("eval", help="evaluate a bundle over the configured sweep points")
    _add_config_arg(p)
    p.add_argument("--bundle", type=Path, help="bundle directory (trains one when omitted)")
    p.add_argument("--seed", type=int)
    p.add_argument("--output-dir", type=Path, dest="output_dir")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("sweep", help="run the full sweep cross product, resumable")
    _add_config_arg(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--output-dir", type=Path, dest="output_dir")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("show-config", help="print the resolved configuration")
    _add_config_arg(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--output-dir", type=Path, dest="output_dir")
    p.set_defaults(func=_cmd_show_config)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except storage.FormatError as exc:
        print(f"file format error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"missing file: {exc}", file=sys.stderr)
        return 2
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
