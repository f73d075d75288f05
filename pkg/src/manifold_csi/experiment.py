"""Experiment orchestration: config files, training runs, evaluation sweeps.

A run directory contains ``bundles/<hash>/gamma-*/`` codec bundles with their
objective traces and training embeddings, plus ``results/<hash>.csv`` record
files merged into ``results.csv`` by sweeps. Every output is reproducible
from (config, seed); file writes go through atomic renames.
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
import os
import shutil
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import storage
from .channel import (
    ChannelConfig,
    add_estimation_noise,
    build_dataset,
    complex_unstack,
    generate_slot,
    real_stack,
)
from .codec import CodecBundle, compress, reconstruct
from .landmarks import (
    TrainConfig,
    embed_training_set,
    fit_low_dim_dictionary,
    fit_reconstruction_dictionaries,
    train_landmarks,
)
from .metrics import EvalReport, cosine_similarity, nmse, spectral_efficiency
from .quantizer import decode_frame, encode_frame, fit_quantizer

__all__ = [
    "ConfigError",
    "EvalConfig",
    "SweepConfig",
    "ExperimentConfig",
    "ResultRecord",
    "RESULT_FIELDS",
    "TEST_SEED_OFFSET",
    "OUTPUT_ROOT_ENV",
    "bundle_hash",
    "config_hash",
    "run_train",
    "run_eval",
    "run_sweep",
]

TEST_SEED_OFFSET = 7919  # keeps evaluation data disjoint from training data
SE_SEED_OFFSET = 104729
OUTPUT_ROOT_ENV = "MANIFOLD_CSI_OUT"

RESULT_SCHEMA_VERSION = 1
RESULT_FIELDS = [
    "config_hash",
    "gamma",
    "k",
    "M",
    "N",
    "bits",
    "snr_db",
    "nmse_db",
    "cosine",
    "se",
]


class ConfigError(ValueError):
    """Invalid experiment configuration or config file."""


@dataclass
class EvalConfig:
    test_slots: int = 25
    gammas: tuple = (Fraction(1, 16), Fraction(1, 8))
    bits: tuple = (None, 12)
    snr_db: tuple = (math.inf,)
    se_users: int = 0
    se_snr_db: float = 10.0
    inference_k: int | None = None
    inference_lam: float | None = None


@dataclass
class SweepConfig:
    k_neighbors: tuple = ()
    m_landmarks: tuple = ()
    train_slots: tuple = ()
    workers: int = 1


@dataclass
class ExperimentConfig:
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    train_slots: int = 125
    output_dir: str = "runs"
    seed: int = 0

    def validate(self) -> None:
        n_samples = self.channel.n_tx * self.train_slots
        try:
            self.train.validate(n_features=2 * self.channel.n_freq, n_samples=n_samples)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.train_slots < 1:
            raise ConfigError("train_slots must be >= 1")
        if self.eval.test_slots < 1:
            raise ConfigError("eval.test_slots must be >= 1")
        if not self.eval.gammas or not self.eval.bits or not self.eval.snr_db:
            raise ConfigError("eval.gammas, eval.bits and eval.snr_db must be nonempty")
        for gamma in self.eval.gammas:
            d = gamma * 2 * self.channel.n_freq
            if d.denominator != 1 or d < 1:
                raise ConfigError(f"gamma {gamma} does not map to a positive integer dimension")
            if int(d) >= 2 * self.channel.n_freq:
                raise ConfigError(f"gamma {gamma} does not compress")
        if self.eval.se_users > self.channel.n_tx:
            raise ConfigError("eval.se_users must not exceed channel.n_tx")
        if self.sweep.workers < 1:
            raise ConfigError("sweep.workers must be >= 1")

    def gamma_dim(self, gamma: Fraction) -> int:
        return int(gamma * 2 * self.channel.n_freq)

    def resolved_output_dir(self) -> Path:
        return Path(os.environ.get(OUTPUT_ROOT_ENV, self.output_dir))

    def seeded(self) -> "ExperimentConfig":
        """Copy with the master seed pushed into the channel and trainer."""
        return replace(
            self,
            channel=replace(self.channel, rng_seed=self.seed),
            train=replace(self.train, rng_seed=self.seed),
        )


# --- config file format: "section.key = value" lines, '#' comments ----------


def _format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, Fraction):
        return f"{value.numerator}/{value.denominator}"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ", ".join(_format_value(v) for v in value)
    return str(value)


def config_to_text(config: ExperimentConfig) -> str:
    lines = []
    for name in ("train_slots", "output_dir", "seed"):
        lines.append(f"{name} = {_format_value(getattr(config, name))}")
    for section in ("channel", "train", "eval", "sweep"):
        sub = getattr(config, section)
        for f in fields(sub):
            lines.append(f"{section}.{f.name} = {_format_value(getattr(sub, f.name))}")
    return "\n".join(sorted(lines)) + "\n"


def _parse_scalar(text: str, kind):
    text = text.strip()
    if kind is int:
        return int(text)
    if kind is float:
        return math.inf if text in ("inf", "+inf") else float(text)
    if kind is str:
        return text
    raise ConfigError(f"unsupported scalar kind {kind}")


def _parse_list(text: str, kind) -> tuple:
    items = [t.strip() for t in text.split(",") if t.strip()]
    return tuple(_parse_scalar(t, kind) for t in items)


def _parse_optional_int(text: str):
    return None if text.strip() == "none" else int(text)


_EVAL_PARSERS = {
    "test_slots": int,
    "gammas": lambda t: tuple(Fraction(x) for x in t.replace(" ", "").split(",") if x),
    "bits": lambda t: tuple(_parse_optional_int(x) for x in t.split(",") if x.strip()),
    "snr_db": lambda t: _parse_list(t, float),
    "se_users": int,
    "se_snr_db": float,
    "inference_k": _parse_optional_int,
    "inference_lam": lambda t: None if t.strip() == "none" else float(t),
}

_SWEEP_PARSERS = {
    "k_neighbors": lambda t: _parse_list(t, int),
    "m_landmarks": lambda t: _parse_list(t, int),
    "train_slots": lambda t: _parse_list(t, int),
    "workers": int,
}


def config_from_text(text: str) -> ExperimentConfig:
    config = ExperimentConfig()
    channel_kw, train_kw = {}, {}
    eval_cfg, sweep_cfg = EvalConfig(), SweepConfig()
    top = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = key.strip(), value.strip()
        try:
            if key.startswith("channel."):
                name = key[len("channel.") :]
                kind = ChannelConfig.__dataclass_fields__[name].type
                channel_kw[name] = _parse_scalar(value, int if kind == "int" else float)
            elif key.startswith("train."):
                name = key[len("train.") :]
                kind = TrainConfig.__dataclass_fields__[name].type
                train_kw[name] = _parse_scalar(value, {"int": int, "float": float, "str": str}[kind])
            elif key.startswith("eval."):
                name = key[len("eval.") :]
                setattr(eval_cfg, name, _EVAL_PARSERS[name](value))
            elif key.startswith("sweep."):
                name = key[len("sweep.") :]
                setattr(sweep_cfg, name, _SWEEP_PARSERS[name](value))
            elif key == "train_slots":
                top["train_slots"] = int(value)
            elif key == "seed":
                top["seed"] = int(value)
            elif key == "output_dir":
                top["output_dir"] = value
            else:
                raise KeyError(key)
        except KeyError:
            raise ConfigError(f"line {lineno}: unknown key {key!r}") from None
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from None
    try:
        config = replace(
            config,
            channel=ChannelConfig(**channel_kw),
            train=TrainConfig(**train_kw),
            eval=eval_cfg,
            sweep=sweep_cfg,
            **top,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    config.validate()
    return config


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return config_from_text(text)


def config_hash(config: ExperimentConfig) -> str:
    """Hash of the canonical (sorted) serialization, so field order is irrelevant.

    The output directory and the sweep section do not participate: they control
    where results land and how points are scheduled, not what is computed.
    """
    canonical = "\n".join(
        line
        for line in config_to_text(config).splitlines()
        if not line.startswith(("output_dir", "sweep."))
    )
    return hashlib.sha256(canonical.encode()).hexdigest()[:12]


@dataclass
class ResultRecord:
    """One evaluation point: the metric report plus the hyperparameter echo.

    The bundle hash and timestamp are diagnostics and stay out of the CSV
    schema; everything else is reproducible from (config, seed).
    """

    config_hash: str
    gamma: Fraction
    k: int
    m_landmarks: int
    n_samples: int
    bits: int | None
    snr_db: float
    report: EvalReport
    bundle_hash: str = ""
    timestamp: float = 0.0

    @property
    def nmse_db(self) -> float:
        return self.report.nmse_db

    @property
    def cosine(self) -> float:
        return self.report.cosine

    @property
    def se(self) -> float | None:
        return self.report.se_bps_hz

    def row(self) -> list:
        return [
            self.config_hash,
            _format_value(self.gamma),
            self.k,
            self.m_landmarks,
            self.n_samples,
            "" if self.bits is None else self.bits,
            _format_value(self.snr_db),
            _format_value(self.nmse_db),
            _format_value(self.cosine),
            "" if self.se is None else _format_value(self.se),
        ]


def bundle_hash(directory) -> str:
    """Content hash over a bundle's manifest and matrix files."""
    directory = Path(directory)
    digest = hashlib.sha256()
    for path in sorted(directory.rglob("*")):
        if path.is_file() and path.suffix in (".mlcf", ".txt"):
            digest.update(path.relative_to(directory).as_posix().encode())
            digest.update(path.read_bytes())
    return digest.hexdigest()[:12]


def _write_records_csv(path: Path, records: list) -> None:
    buf = io.StringIO()
    buf.write(f"# manifold-csi results schema v{RESULT_SCHEMA_VERSION}\n")
    writer = csv.writer(buf)
    writer.writerow(RESULT_FIELDS)
    for rec in records:
        writer.writerow(rec.row())
    storage.atomic_write_text(path, buf.getvalue())


def _gamma_dirname(gamma: Fraction) -> str:
    return f"gamma-{gamma.numerator}of{gamma.denominator}"


def run_train(config: ExperimentConfig) -> Path:
    """Generate the training set and learn one codec bundle per gamma.

    Returns the bundle directory. Re-running with an existing complete
    directory is a no-op; a failed run leaves nothing behind.
    """
    config.validate()
    config = config.seeded()
    out = config.resolved_output_dir()
    bundle_dir = out / "bundles" / config_hash(config)
    done_marker = bundle_dir / "COMPLETE"
    if done_marker.exists():
        return bundle_dir

    tmp_dir = bundle_dir.with_name(bundle_dir.name + ".tmp")
    if tmp_dir.exists():
        shutil.rmtree(tmp_dir)
    tmp_dir.mkdir(parents=True)
    try:
        dataset = build_dataset(config.channel, config.train_slots)
        dictionary, weights, trace = train_landmarks(dataset, config.train)
        for gamma in config.eval.gammas:
            d = config.gamma_dim(gamma)
            gamma_cfg = replace(config.train, intrinsic_dim=d)
            y = embed_training_set(
                dataset, d, method=gamma_cfg.embed_method, k_neighbors=gamma_cfg.k_neighbors
            )
            dl_dr = fit_low_dim_dictionary(y, weights, gamma_cfg.ridge_eps)
            dl_rc, dh_rc, trace_rc = fit_reconstruction_dictionaries(
                dataset, y, gamma_cfg, return_trace=True
            )
            bundle = CodecBundle(
                dh_dr=dictionary, dl_dr=dl_dr, dl_rc=dl_rc, dh_rc=dh_rc, config=gamma_cfg
            )
            gdir = tmp_dir / _gamma_dirname(gamma)
            bundle.save(gdir)
            storage.write_matrix(gdir / "y_train.mlcf", y)
            trace.write_csv(gdir / "trace.csv")
            trace_rc.write_csv(gdir / "trace_rc.csv")
        storage.atomic_write_text(tmp_dir / "config.txt", config_to_text(config))
        storage.atomic_write_text(tmp_dir / "COMPLETE", "ok\n")
        if bundle_dir.exists():
            shutil.rmtree(bundle_dir)
        os.replace(tmp_dir, bundle_dir)
    except BaseException:
        shutil.rmtree(tmp_dir, ignore_errors=True)
        raise
    return bundle_dir


def _feedback_roundtrip(embedding: np.ndarray, bits, quantizers) -> np.ndarray:
    if bits is None:
        return embedding
    model = quantizers[bits]
    return decode_frame(encode_frame(embedding, model), model)


def _eval_se(
    config: ExperimentConfig, bundle: CodecBundle, bits, quantizers, snr_est_db: float
) -> float:
    """Zero-forcing sum rate with reconstructed CSI for a deterministic draw of
    single-antenna users; each user's per-subcarrier row comes from its own
    codec round trip."""
    users_true, users_recon = [], []
    for u in range(config.eval.se_users):
        user_channel = replace(config.channel, rng_seed=config.seed + SE_SEED_OFFSET + 31 * u)
        true_csi, recon_csi = _codec_roundtrip_real(
            config, bundle, user_channel, bits, quantizers, snr_est_db, u
        )
        users_true.append(complex_unstack(true_csi))
        users_recon.append(complex_unstack(recon_csi))
    h_true = np.stack(users_true, axis=1)  # (n_freq, U, n_tx)
    h_hat = np.stack(users_recon, axis=1)
    return spectral_efficiency(h_true, h_hat, config.eval.se_snr_db)


def _true_csi(channel_cfg: ChannelConfig, slot: int = 0) -> np.ndarray:
    return real_stack(generate_slot(channel_cfg, slot))


def _codec_roundtrip_real(
    config, bundle, channel_cfg, bits, quantizers, snr_est_db, noise_tag
) -> tuple:
    true_csi = _true_csi(channel_cfg)
    observed = add_estimation_noise(
        true_csi, snr_est_db, rng=channel_cfg.rng_seed + 7 * noise_tag + 1
    )
    embedding, _ = compress(
        observed, bundle, k=config.eval.inference_k, lam=config.eval.inference_lam
    )
    embedding = _feedback_roundtrip(embedding, bits, quantizers)
    return true_csi, reconstruct(
        embedding, bundle, k=config.eval.inference_k, lam=config.eval.inference_lam
    )


def run_eval(bundle_dir, config: ExperimentConfig) -> list:
    """Evaluate every (gamma, bits, snr) sweep point of a trained bundle
    directory on a fresh test set; returns the records and writes their CSV."""
    config.validate()
    config = config.seeded()
    bundle_dir = Path(bundle_dir)
    if not bundle_dir.exists():
        raise ConfigError(f"bundle directory {bundle_dir} does not exist")
    chash = config_hash(config)
    test_channel = replace(config.channel, rng_seed=config.seed + TEST_SEED_OFFSET)
    n_train = config.channel.n_tx * config.train_slots
    true_slots = [_true_csi(test_channel, s) for s in range(config.eval.test_slots)]

    records = []
    for gamma in config.eval.gammas:
        gdir = bundle_dir / _gamma_dirname(gamma)
        if not gdir.exists():
            raise ConfigError(f"bundle {bundle_dir} has no {gdir.name} (trained with other gammas?)")
        bundle = CodecBundle.load(gdir)
        if bundle.n_features != 2 * config.channel.n_freq:
            raise ConfigError("bundle dimensions do not match the channel config")
        gamma_hash = bundle_hash(gdir)
        y_train = storage.read_matrix(gdir / "y_train.mlcf")
        quantizers = {
            b: fit_quantizer(y_train, b) for b in config.eval.bits if b is not None
        }
        for bits in config.eval.bits:
            for snr_db in config.eval.snr_db:
                recon_slots = []
                for s, true_csi in enumerate(true_slots):
                    observed = add_estimation_noise(
                        true_csi, snr_db, rng=test_channel.rng_seed + 1000003 * s
                    )
                    embedding, _ = compress(
                        observed, bundle, k=config.eval.inference_k, lam=config.eval.inference_lam
                    )
                    embedding = _feedback_roundtrip(embedding, bits, quantizers)
                    recon_slots.append(
                        reconstruct(
                            embedding,
                            bundle,
                            k=config.eval.inference_k,
                            lam=config.eval.inference_lam,
                        )
                    )
                truth = np.stack(true_slots)
                recon = np.stack(recon_slots)
                se = None
                if config.eval.se_users > 0:
                    se = _eval_se(config, bundle, bits, quantizers, snr_db)
                report = EvalReport(
                    nmse_db=nmse(truth, recon),
                    cosine=cosine_similarity(
                        np.stack([complex_unstack(t) for t in true_slots]),
                        np.stack([complex_unstack(r) for r in recon_slots]),
                    ),
                    se_bps_hz=se,
                    sample_count=len(true_slots),
                )
                records.append(
                    ResultRecord(
                        config_hash=chash,
                        gamma=gamma,
                        k=bundle.config.k_neighbors,
                        m_landmarks=bundle.config.m_landmarks,
                        n_samples=n_train,
                        bits=bits,
                        snr_db=snr_db,
                        report=report,
                        bundle_hash=gamma_hash,
                        timestamp=time.time(),
                    )
                )
    out = config.resolved_output_dir() / "results"
    out.mkdir(parents=True, exist_ok=True)
    _write_records_csv(out / f"{chash}.csv", records)
    return records


def _sweep_points(config: ExperimentConfig) -> list:
    ks = config.sweep.k_neighbors or (config.train.k_neighbors,)
    ms = config.sweep.m_landmarks or (config.train.m_landmarks,)
    slots = config.sweep.train_slots or (config.train_slots,)
    points = []
    for k in ks:
        for m in ms:
            for n_slots in slots:
                points.append(
                    replace(
                        config,
                        train=replace(config.train, k_neighbors=k, m_landmarks=m),
                        train_slots=n_slots,
                    )
                )
    return points


def _run_point(point: ExperimentConfig) -> list:
    out = point.resolved_output_dir()
    result_file = out / "results" / f"{config_hash(point.seeded())}.csv"
    if result_file.exists():
        return _read_records_csv(result_file)
    bundle_dir = run_train(point)
    return run_eval(bundle_dir, point)


def _read_records_csv(path: Path) -> list:
    records = []
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    for row in rows[1:]:
        report = EvalReport(
            nmse_db=float(row[7]),
            cosine=float(row[8]),
            se_bps_hz=None if row[9] == "" else float(row[9]),
            sample_count=0,
        )
        records.append(
            ResultRecord(
                config_hash=row[0],
                gamma=Fraction(row[1]),
                k=int(row[2]),
                m_landmarks=int(row[3]),
                n_samples=int(row[4]),
                bits=None if row[5] == "" else int(row[5]),
                snr_db=float(row[6]),
                report=report,
            )
        )
    return records


def run_sweep(config: ExperimentConfig) -> Path:
    """Train and evaluate the cross product of sweep axes.

    Completed points (existing result CSVs) are skipped, so an interrupted
    sweep resumes where it stopped. Returns the merged results table.
    """
    config.validate()
    points = _sweep_points(config)
    workers = min(config.sweep.workers, len(points))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_point, points))
    else:
        results = [_run_point(p) for p in points]
    merged = [rec for point_records in results for rec in point_records]
    out = config.resolved_output_dir()
    out.mkdir(parents=True, exist_ok=True)
    table = out / "results.csv"
    _write_records_csv(table, merged)
    _emit_plot_script(out / "plot_results.gp", table)
    return table


def _emit_plot_script(path: Path, table: Path) -> None:
    script = f"""# gnuplot script: reconstruction error against feedback SNR
set datafile separator ','
set datafile commentschars '#'
set key autotitle columnhead
set xlabel 'estimation SNR (dB)'
set ylabel 'NMSE (dB)'
set grid
plot '{table.name}' using 7:8 with points pt 7 title 'NMSE'
"""
    storage.atomic_write_text(path, script)
