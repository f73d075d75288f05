"""Reconstruction-quality metrics and a zero-forcing spectral-efficiency probe."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .validation import require

__all__ = [
    "NEG_INF_DB",
    "EvalReport",
    "nmse",
    "cosine_similarity",
    "spectral_efficiency",
]

# Sentinel for a perfect reconstruction (zero error ratio has no finite dB value).
NEG_INF_DB = float("-inf")


@dataclass
class EvalReport:
    nmse_db: float
    cosine: float
    se_bps_hz: float | None
    sample_count: int


def _as_sample_stack(arr, name: str) -> np.ndarray:
    """Coerce a matrix, a list of matrices, or an (n, rows, cols) array to 3-D."""
    arr = np.asarray(arr)
    if arr.ndim == 2:
        arr = arr[None, ...]
    require(arr.ndim == 3, f"{name} must be one matrix or a stack of matrices")
    return arr


def nmse(h_true, h_hat) -> float:
    """Mean per-sample normalized squared error, in dB.

    Zero-norm reference samples are excluded with a warning; a zero mean ratio
    returns the -inf sentinel.
    """
    t = _as_sample_stack(h_true, "h_true")
    h = _as_sample_stack(h_hat, "h_hat")
    require(t.shape == h.shape, "shape mismatch between reference and estimate")
    err = np.sum(np.abs(h - t) ** 2, axis=(1, 2))
    ref = np.sum(np.abs(t) ** 2, axis=(1, 2))
    keep = ref > 0
    if not np.all(keep):
        warnings.warn(f"excluding {int(np.sum(~keep))} zero-norm reference samples", stacklevel=2)
    require(bool(np.any(keep)), "no nonzero reference samples")
    ratio = float(np.mean(err[keep] / ref[keep]))
    if ratio == 0.0:
        return NEG_INF_DB
    return 10.0 * math.log10(ratio)


def cosine_similarity(h_true, h_hat) -> float:
    """Mean per-subcarrier normalized inner-product magnitude.

    Inputs are complex channel matrices (subcarriers by antennas) or stacks of
    them. Subcarrier rows where either side is zero are skipped with a warning.
    """
    t = _as_sample_stack(np.asarray(h_true, dtype=np.complex128), "h_true")
    h = _as_sample_stack(np.asarray(h_hat, dtype=np.complex128), "h_hat")
    require(t.shape == h.shape, "shape mismatch between reference and estimate")
    inner = np.abs(np.sum(h * t.conj(), axis=2))
    norms = np.linalg.norm(t, axis=2) * np.linalg.norm(h, axis=2)
    keep = norms > 0
    if not np.all(keep):
        warnings.warn(f"skipping {int(np.sum(~keep))} zero-norm subcarrier rows", stacklevel=2)
    require(bool(np.any(keep)), "no nonzero subcarrier rows")
    return float(np.mean(inner[keep] / norms[keep]))


def _zf_precoder(h_hat: np.ndarray) -> np.ndarray:
    """Zero-forcing precoder from an estimated (U, n_tx) channel: pseudo-inverse
    with unit-norm columns."""
    u = h_hat.shape[0]
    if np.linalg.matrix_rank(h_hat) < u:
        raise np.linalg.LinAlgError("estimated channel is rank-deficient; cannot zero-force")
    w = np.linalg.pinv(h_hat)  # (n_tx, U)
    return w / np.linalg.norm(w, axis=0, keepdims=True)


def spectral_efficiency(h_true, h_hat, snr_db: float) -> float:
    """Zero-forcing sum spectral efficiency in bit/s/Hz.

    Inputs are per-subcarrier user channels shaped (n_subcarriers, U, n_tx)
    (a single (U, n_tx) matrix is promoted). The precoder is built from the
    estimate with equal power split across users; the SINR is evaluated on the
    true channel and averaged over subcarriers.
    """
    t = _as_sample_stack(np.asarray(h_true, dtype=np.complex128), "h_true")
    h = _as_sample_stack(np.asarray(h_hat, dtype=np.complex128), "h_hat")
    require(t.shape == h.shape, "shape mismatch between reference and estimate")
    n_sub, n_users, n_tx = t.shape
    require(n_users <= n_tx, "need at most as many users as transmit antennas")
    snr = 10.0 ** (snr_db / 10.0)
    per_user_power = snr / n_users

    se = 0.0
    for f in range(n_sub):
        w = _zf_precoder(h[f])
        gains = np.abs(t[f] @ w) ** 2  # (U, U): user u received power from beam v
        signal = per_user_power * np.diag(gains)
        interference = per_user_power * (gains.sum(axis=1) - np.diag(gains))
        sinr = signal / (1.0 + interference)
        se += float(np.sum(np.log2(1.0 + sinr)))
    return se / n_sub
