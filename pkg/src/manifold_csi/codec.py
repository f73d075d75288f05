"""Incremental CSI compression and reconstruction with trained landmark pairs.

Compression expresses each incoming column as sum-to-one weights over its k
nearest high-dimensional landmarks and maps those weights through the matched
low-dimensional landmarks. Reconstruction runs the mirror image: weights over
the low-dimensional reconstruction landmarks, mapped through their
high-dimensional anchors. Only matrix-vector work is involved, no iterations.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from . import storage
from .landmarks import (
    LocalWeights,
    TrainConfig,
    _solve_weights_batch,
    embed_training_set,
    fit_low_dim_dictionary,
    fit_reconstruction_dictionaries,
    train_landmarks,
)
from .validation import as_real_matrix, require

__all__ = [
    "CodecBundle",
    "CodecStats",
    "LandmarkCodec",
    "compression_ratio",
    "solve_incremental_weights",
    "compress",
    "reconstruct",
    "fit_codec_bundle",
]

_BUNDLE_FILES = ("dh_dr", "dl_dr", "dl_rc", "dh_rc")


def compression_ratio(d: int, n_freq: int) -> Fraction:
    """Feedback scalars per raw real-stacked scalar: d / (2 * n_freq), reduced."""
    require(d >= 1, "d must be >= 1")
    require(n_freq >= 1, "n_freq must be >= 1")
    return Fraction(d, 2 * n_freq)


@dataclass
class CodecBundle:
    """Matched compression and reconstruction dictionary pairs."""

    dh_dr: np.ndarray  # (2*n_freq, M) high-dim compression landmarks
    dl_dr: np.ndarray  # (d, M) their low-dim counterparts
    dl_rc: np.ndarray  # (d, M) low-dim reconstruction landmarks
    dh_rc: np.ndarray  # (2*n_freq, M) their high-dim anchors
    config: TrainConfig

    def __post_init__(self):
        m = self.m_landmarks
        require(
            all(getattr(self, name).shape[1] == m for name in _BUNDLE_FILES),
            "all four dictionaries must share the landmark count",
        )
        require(self.dl_dr.shape[0] == self.dl_rc.shape[0], "low-dim dictionaries disagree on d")
        require(
            self.dh_dr.shape[0] == self.dh_rc.shape[0],
            "high-dim dictionaries disagree on the ambient dimension",
        )

    @property
    def m_landmarks(self) -> int:
        return self.dh_dr.shape[1]

    @property
    def n_features(self) -> int:
        return self.dh_dr.shape[0]

    @property
    def d(self) -> int:
        return self.dl_dr.shape[0]

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for name in _BUNDLE_FILES:
            storage.write_matrix(directory / f"{name}.mlcf", getattr(self, name))
        cfg = self.config
        manifest = "\n".join(
            [
                "version = 1",
                f"m = {cfg.m_landmarks}",
                f"k = {cfg.k_neighbors}",
                f"d = {self.d}",
                f"lambda = {cfg.lam!r}",
                f"mu = {cfg.mu!r}",
                f"seed = {cfg.rng_seed}",
                f"max_iters = {cfg.max_iters}",
                f"rel_tol = {cfg.rel_tol!r}",
                f"ridge_eps = {cfg.ridge_eps!r}",
                f"embed_method = {cfg.embed_method}",
            ]
        )
        storage.atomic_write_text(directory / "manifest.txt", manifest + "\n")

    @classmethod
    def load(cls, directory) -> "CodecBundle":
        directory = Path(directory)
        fields = {}
        for line in (directory / "manifest.txt").read_text().splitlines():
            line = line.split("#", 1)[0].strip()
            if line:
                key, _, value = line.partition("=")
                fields[key.strip()] = value.strip()
        if fields.get("version") != "1":
            raise storage.FormatError(f"unsupported bundle version {fields.get('version')!r}")
        config = TrainConfig(
            m_landmarks=int(fields["m"]),
            k_neighbors=int(fields["k"]),
            intrinsic_dim=int(fields["d"]),
            lam=float(fields["lambda"]),
            mu=float(fields["mu"]),
            max_iters=int(fields.get("max_iters", 50)),
            rel_tol=float(fields.get("rel_tol", 1e-6)),
            ridge_eps=float(fields.get("ridge_eps", 1e-10)),
            embed_method=fields.get("embed_method", "pca"),
            rng_seed=int(fields["seed"]),
        )
        mats = {name: storage.read_matrix(directory / f"{name}.mlcf") for name in _BUNDLE_FILES}
        return cls(config=config, **mats)


@dataclass
class CodecStats:
    """Per-column diagnostics of one compress or reconstruct call. These stay
    local; nothing here crosses the feedback link."""

    neighbor_indices: np.ndarray  # (k, n_columns)
    approx_errors: np.ndarray  # (n_columns,)
    elapsed_s: float
    distance_scans: int  # number of full landmark-distance scans performed
    solve_size: int  # dimension of each per-column linear solve


def solve_incremental_weights(
    v, dictionary, k: int, lam: float, ridge_eps: float = 1e-10
) -> np.ndarray:
    """Sum-to-one weights of a query over its k nearest dictionary columns,
    scattered into a dense landmark-length vector.

    This is the training weight subproblem with the row-sparsity term absent,
    plus the usual relative diagonal loading.
    """
    dictionary = as_real_matrix(dictionary, "dictionary")
    weights = _incremental_weights(
        np.asarray(v, dtype=np.float64).reshape(-1, 1), dictionary, k, lam, ridge_eps
    )
    return weights.to_dense()[:, 0]


def _incremental_weights(
    columns: np.ndarray, dictionary: np.ndarray, k: int, lam: float, ridge_eps: float
) -> LocalWeights:
    return _solve_weights_batch(columns, dictionary, k, lam, 0.0, None, ridge_eps)


def _resolve(bundle: CodecBundle, k: int | None, lam: float | None) -> tuple:
    k = bundle.config.k_neighbors if k is None else int(k)
    lam = bundle.config.lam if lam is None else float(lam)
    require(1 <= k <= bundle.m_landmarks, "k must be within the landmark count")
    return k, lam


def compress(
    csi, bundle: CodecBundle, k: int | None = None, lam: float | None = None
) -> tuple:
    """Map real-stacked CSI (2*n_freq, n_tx) to its (d, n_tx) embedding.

    ``k`` and ``lam`` default to the training values; both may be overridden
    at inference time.
    """
    csi = as_real_matrix(csi, "csi", n_rows=bundle.n_features)
    k, lam = _resolve(bundle, k, lam)
    start = time.perf_counter()
    weights = _incremental_weights(csi, bundle.dh_dr, k, lam, bundle.config.ridge_eps)
    embedding = weights.combine(bundle.dl_dr)
    residual = csi - weights.combine(bundle.dh_dr)
    stats = CodecStats(
        neighbor_indices=weights.indices,
        approx_errors=np.linalg.norm(residual, axis=0),
        elapsed_s=time.perf_counter() - start,
        distance_scans=csi.shape[1],
        solve_size=k,
    )
    return embedding, stats


def reconstruct(
    embedding, bundle: CodecBundle, k: int | None = None, lam: float | None = None
) -> np.ndarray:
    """Map a (d, n_tx) embedding back to real-stacked CSI (2*n_freq, n_tx)."""
    embedding = as_real_matrix(embedding, "embedding", n_rows=bundle.d)
    k, lam = _resolve(bundle, k, lam)
    weights = _incremental_weights(embedding, bundle.dl_rc, k, lam, bundle.config.ridge_eps)
    return weights.combine(bundle.dh_rc)


def fit_codec_bundle(X, config: TrainConfig, return_traces: bool = False):
    """Full training pipeline on a (2*n_freq, N) dataset.

    Learns the compression landmarks, embeds the training set, matches the
    low-dimensional dictionary, then learns the reconstruction pair on the
    embedded data.
    """
    X = as_real_matrix(X, "X")
    config.validate(n_features=X.shape[0], n_samples=X.shape[1])
    dh_dr, weights, trace_dr = train_landmarks(X, config)
    y = embed_training_set(
        X, config.intrinsic_dim, method=config.embed_method, k_neighbors=config.k_neighbors
    )
    dl_dr = fit_low_dim_dictionary(y, weights, config.ridge_eps)
    dl_rc, dh_rc, trace_rc = fit_reconstruction_dictionaries(X, y, config, return_trace=True)
    bundle = CodecBundle(dh_dr=dh_dr, dl_dr=dl_dr, dl_rc=dl_rc, dh_rc=dh_rc, config=config)
    if return_traces:
        return bundle, trace_dr, trace_rc
    return bundle


class LandmarkCodec(BaseEstimator, TransformerMixin):
    """Estimator wrapper around the landmark codec.

    Follows the scikit-learn layout: samples are rows, so ``fit`` expects
    (n_samples, 2*n_freq), ``transform`` returns (n_samples, d) embeddings and
    ``inverse_transform`` maps embeddings back to (n_samples, 2*n_freq).
    """

    def __init__(
        self,
        m_landmarks: int = 400,
        k_neighbors: int = 70,
        intrinsic_dim: int = 6,
        lam: float = 1e-3,
        mu: float = 1e-3,
        max_iters: int = 50,
        rel_tol: float = 1e-6,
        ridge_eps: float = 1e-10,
        embed_method: str = "pca",
        random_state: int = 0,
    ):
        self.m_landmarks = m_landmarks
        self.k_neighbors = k_neighbors
        self.intrinsic_dim = intrinsic_dim
        self.lam = lam
        self.mu = mu
        self.max_iters = max_iters
        self.rel_tol = rel_tol
        self.ridge_eps = ridge_eps
        self.embed_method = embed_method
        self.random_state = random_state

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            m_landmarks=self.m_landmarks,
            k_neighbors=self.k_neighbors,
            intrinsic_dim=self.intrinsic_dim,
            lam=self.lam,
            mu=self.mu,
            max_iters=self.max_iters,
            rel_tol=self.rel_tol,
            ridge_eps=self.ridge_eps,
            embed_method=self.embed_method,
            rng_seed=self.random_state,
        )

    def fit(self, X, y=None):
        X = as_real_matrix(X, "X")
        self.bundle_, self.trace_, self.trace_rc_ = fit_codec_bundle(
            X.T, self._train_config(), return_traces=True
        )
        return self

    def _check_fitted(self) -> CodecBundle:
        if not hasattr(self, "bundle_"):
            raise NotFittedError("LandmarkCodec must be fitted before use")
        return self.bundle_

    def transform(self, X) -> np.ndarray:
        bundle = self._check_fitted()
        embedding, _ = compress(as_real_matrix(X, "X").T, bundle)
        return embedding.T

    def inverse_transform(self, Y) -> np.ndarray:
        bundle = self._check_fitted()
        return reconstruct(as_real_matrix(Y, "Y").T, bundle).T
