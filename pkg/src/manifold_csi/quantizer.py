"""Uniform scalar quantization of embeddings for bit-limited feedback.

Ranges are learned per embedding dimension from training data and widened by
a small margin; codes reconstruct to cell centers. The packed feedback frame
(bits, dimensions, columns, then MSB-first packed codes) is the bit-exact
over-the-air format of the benchmark harness.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .validation import as_real_matrix, require

__all__ = [
    "QuantizerModel",
    "UniformQuantizer",
    "fit_quantizer",
    "quantize",
    "dequantize",
    "pack_codes",
    "unpack_codes",
    "encode_frame",
    "decode_frame",
]

MAX_BITS = 16
_DEGENERATE_SPAN = 1e-12
_FRAME_HEADER = struct.Struct("<BHH")


@dataclass
class QuantizerModel:
    """Per-dimension uniform quantizer: B bits over [lo, hi)."""

    bits: int
    lo: np.ndarray  # (d,)
    hi: np.ndarray  # (d,)

    def __post_init__(self):
        require(1 <= self.bits <= MAX_BITS, f"bits must be in 1..{MAX_BITS}")
        self.lo = np.asarray(self.lo, dtype=np.float64).ravel()
        self.hi = np.asarray(self.hi, dtype=np.float64).ravel()
        require(self.lo.shape == self.hi.shape, "lo and hi must have the same length")
        require(bool(np.all(self.hi > self.lo)), "hi must exceed lo per dimension")

    @property
    def n_dims(self) -> int:
        return self.lo.shape[0]

    @property
    def levels(self) -> int:
        return 1 << self.bits

    @property
    def step(self) -> np.ndarray:
        return (self.hi - self.lo) / self.levels


def fit_quantizer(y_train, bits: int, margin: float = 0.01) -> QuantizerModel:
    """Learn per-dimension ranges from (d, N) training embeddings.

    Each range is the observed min/max widened symmetrically by ``margin``
    of the span, which reduces clipping on unseen data. Degenerate dimensions
    get a tiny span so the step stays positive.
    """
    y_train = as_real_matrix(y_train, "y_train")
    require(y_train.shape[1] >= 2, "need at least two training columns")
    lo = y_train.min(axis=1)
    hi = y_train.max(axis=1)
    span = hi - lo
    lo = lo - 0.5 * margin * span
    hi = hi + 0.5 * margin * span
    degenerate = hi <= lo
    hi[degenerate] = lo[degenerate] + _DEGENERATE_SPAN
    return QuantizerModel(bits=bits, lo=lo, hi=hi)


def quantize(y, model: QuantizerModel) -> np.ndarray:
    """Integer codes in [0, 2^B - 1], clamped at the range edges."""
    y = as_real_matrix(y, "y", n_rows=model.n_dims)
    raw = np.floor((y - model.lo[:, None]) / model.step[:, None])
    return np.clip(raw, 0, model.levels - 1).astype(np.uint16)


def dequantize(codes, model: QuantizerModel) -> np.ndarray:
    """Cell-center reconstruction: lo + (code + 1/2) * step."""
    codes = np.asarray(codes)
    require(codes.ndim == 2 and codes.shape[0] == model.n_dims, "codes shape mismatch")
    return model.lo[:, None] + (codes.astype(np.float64) + 0.5) * model.step[:, None]


def pack_codes(codes, bits: int) -> bytes:
    """MSB-first bit packing of codes in column-major scalar order, with the
    final byte zero-padded."""
    require(1 <= bits <= MAX_BITS, f"bits must be in 1..{MAX_BITS}")
    flat = np.asarray(codes, dtype=np.uint32).ravel(order="F")
    require(bool(np.all(flat < (1 << bits))), "codes exceed the bit width")
    shifts = np.arange(bits - 1, -1, -1, dtype=np.uint32)
    bit_rows = ((flat[:, None] >> shifts[None, :]) & 1).astype(np.uint8)
    return np.packbits(bit_rows.ravel()).tobytes()


def unpack_codes(data: bytes, bits: int, shape: tuple) -> np.ndarray:
    """Invert :func:`pack_codes` for a known (d, n) shape."""
    require(1 <= bits <= MAX_BITS, f"bits must be in 1..{MAX_BITS}")
    d, n = shape
    count = d * n
    needed = (count * bits + 7) // 8
    if len(data) < needed:
        raise ValueError(f"packed stream too short: {len(data)} bytes, need {needed}")
    raw = np.unpackbits(np.frombuffer(data, dtype=np.uint8, count=needed))
    bit_rows = raw[: count * bits].reshape(count, bits).astype(np.uint32)
    weights = 1 << np.arange(bits - 1, -1, -1, dtype=np.uint32)
    flat = (bit_rows * weights).sum(axis=1, dtype=np.uint32)
    return flat.astype(np.uint16).reshape((d, n), order="F")


def encode_frame(y, model: QuantizerModel) -> bytes:
    """Feedback frame: u8 bits, u16 d, u16 n_columns, then packed codes."""
    codes = quantize(y, model)
    d, n = codes.shape
    require(d < 1 << 16 and n < 1 << 16, "frame dimensions exceed u16")
    return _FRAME_HEADER.pack(model.bits, d, n) + pack_codes(codes, model.bits)


def decode_frame(data: bytes, model: QuantizerModel) -> np.ndarray:
    if len(data) < _FRAME_HEADER.size:
        raise ValueError("frame too short for its header")
    bits, d, n = _FRAME_HEADER.unpack_from(data)
    require(bits == model.bits, f"frame uses {bits} bits, quantizer expects {model.bits}")
    require(d == model.n_dims, f"frame carries {d} dimensions, quantizer expects {model.n_dims}")
    codes = unpack_codes(data[_FRAME_HEADER.size :], bits, (d, n))
    return dequantize(codes, model)


class UniformQuantizer(BaseEstimator, TransformerMixin):
    """Estimator wrapper; rows are samples, columns are embedding dimensions."""

    def __init__(self, bits: int = 12, margin: float = 0.01):
        self.bits = bits
        self.margin = margin

    def fit(self, X, y=None):
        X = as_real_matrix(X, "X")
        self.model_ = fit_quantizer(X.T, self.bits, self.margin)
        return self

    def _check_fitted(self) -> QuantizerModel:
        if not hasattr(self, "model_"):
            raise NotFittedError("UniformQuantizer must be fitted before use")
        return self.model_

    def transform(self, X) -> np.ndarray:
        return quantize(as_real_matrix(X, "X").T, self._check_fitted()).T

    def inverse_transform(self, codes) -> np.ndarray:
        return dequantize(np.asarray(codes).T, self._check_fitted()).T
