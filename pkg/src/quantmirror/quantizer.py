"""Adaptive uniform quantizer with saturation and a fixed-rate level codec.

A coordinate with mid-value ``z`` and interval size ``d`` is mapped to one
of ``K + 2`` levels: the two saturation values ``z - d`` / ``z + d`` and the
``K`` interior levels ``z + (2j - K) d / K`` for ``j = 0 .. K-1``.  Inside the
interval the quantizer rounds down to the left edge of its sub-interval.

Level indices on the wire::

    0          lower saturation (x - z < -d)
    1 .. K     interior level j = index - 1
    K + 1      upper saturation (x - z >= d)

Messages are packed little-endian with ``ceil(log2(K + 2))`` bits per
coordinate, coordinate 0 occupying the least significant bits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class CorruptMessageError(ValueError):
    """Raised when a message carries a level index outside ``0 .. K+1``."""


def bits_per_coordinate(k):
    return math.ceil(math.log2(k + 2))


def payload_bits(n, k):
    """Size in bits of one encoded ``n``-vector."""
    return n * bits_per_coordinate(k)


def _check_params(d, k):
    if k < 1 or int(k) != k:
        raise ValueError("K must be a positive integer")
    if np.any(np.asarray(d) < 0):
        raise ValueError("interval size d must be nonnegative")


def level_indices(z, d, k, x):
    """Wire indices of ``x`` under ``(z, d, K)``; broadcasts over arrays."""
    _check_params(d, k)
    z = np.asarray(z, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    s = x - z
    with np.errstate(divide="ignore", invalid="ignore"):
        j = np.floor((s + d) * k / (2.0 * d))
    j = np.clip(np.nan_to_num(j, nan=0.0, posinf=k - 1, neginf=0.0), 0, k - 1)
    # settle rounding at bin edges against the level values themselves
    j = np.where((z + (2.0 * j - k) * d / k > x) & (j > 0), j - 1, j)
    j = np.where((z + (2.0 * (j + 1) - k) * d / k <= x) & (j < k - 1), j + 1, j)
    idx = (j + 1).astype(np.int64)
    idx = np.where(s < -d, 0, idx)
    idx = np.where(s >= d, k + 1, idx)
    return idx


def level_values(z, d, k, idx):
    """Reconstruction values for wire indices (inverse of ``level_indices``)."""
    z = np.asarray(z, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    idx = np.asarray(idx)
    interior = z + (2.0 * (idx - 1) - k) * d / k
    return np.where(idx == 0, z - d, np.where(idx == k + 1, z + d, interior))


def quantize_scalar(z, d, k, x):
    """Scalar quantizer Q(z, d, x) with ``K`` interior levels."""
    return float(level_values(z, d, k, level_indices(z, d, k, x)))


def quantize(z, d, k, x):
    """Coordinate-wise quantizer on arrays of any (broadcastable) shape."""
    return level_values(z, d, k, level_indices(z, d, k, x))


@dataclass(frozen=True)
class QuantizerSpec:
    """Parameters shared by the sender and receiver of one message.

    Attributes
    ----------
    k : int
        Number of interior levels, at least 2 so that the per-coordinate
        error inside the interval never exceeds ``d``.
    z : ndarray
        Mid-value vector.
    d : ndarray
        Interval-size vector, nonnegative.
    """

    k: int
    z: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 2:
            raise ValueError("QuantizerSpec requires K >= 2")
        z = np.asarray(self.z, dtype=np.float64).reshape(-1)
        d = np.broadcast_to(np.asarray(self.d, dtype=np.float64), z.shape).copy()
        if np.any(d < 0):
            raise ValueError("interval size d must be nonnegative")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "d", d)

    @property
    def n(self):
        return self.z.size

    @property
    def payload_bits(self):
        return payload_bits(self.n, self.k)


def quantize_vector(spec, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != spec.z.shape:
        raise ValueError(f"dimension mismatch: expected {spec.z.shape}, got {x.shape}")
    return quantize(spec.z, spec.d, spec.k, x)


@dataclass(frozen=True)
class QuantizedMessage:
    indices: np.ndarray
    k: int

    @property
    def n(self):
        return self.indices.size

    @property
    def payload_bits(self):
        return payload_bits(self.n, self.k)

    def to_bytes(self):
        width = bits_per_coordinate(self.k)
        packed = 0
        for pos, idx in enumerate(self.indices.tolist()):
            packed |= int(idx) << (pos * width)
        return packed.to_bytes((self.payload_bits + 7) // 8, "little")

    @classmethod
    def from_bytes(cls, data, n, k):
        width = bits_per_coordinate(k)
        if len(data) != (n * width + 7) // 8:
            raise CorruptMessageError("payload length does not match (n, K)")
        packed = int.from_bytes(data, "little")
        if packed >> (n * width):
            raise CorruptMessageError("nonzero padding bits")
        mask = (1 << width) - 1
        idx = np.array([(packed >> (pos * width)) & mask for pos in range(n)], dtype=np.int64)
        return cls(idx, k)


def pack_indices(indices, k):
    """Pack a batch of index rows (m, n) into (m, bytes) with the message layout."""
    idx = np.asarray(indices, dtype=np.int64)
    width = bits_per_coordinate(k)
    bits = ((idx[..., None] >> np.arange(width)) & 1).astype(np.uint8).reshape(idx.shape[0], -1)
    return np.packbits(bits, axis=1, bitorder="little")


def unpack_indices(payload, n, k):
    """Inverse of :func:`pack_indices`; rejects nonzero padding bits."""
    payload = np.asarray(payload, dtype=np.uint8)
    width = bits_per_coordinate(k)
    if payload.shape[1] != (n * width + 7) // 8:
        raise CorruptMessageError("payload length does not match (n, K)")
    bits = np.unpackbits(payload, axis=1, bitorder="little")
    if bits[:, n * width :].any():
        raise CorruptMessageError("nonzero padding bits")
    weights = 1 << np.arange(width, dtype=np.int64)
    return bits[:, : n * width].reshape(len(payload), n, width).astype(np.int64) @ weights


def encode(spec, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != spec.z.shape:
        raise ValueError(f"dimension mismatch: expected {spec.z.shape}, got {x.shape}")
    return QuantizedMessage(level_indices(spec.z, spec.d, spec.k, x), spec.k)


def decode(spec, msg):
    idx = np.asarray(msg.indices)
    if msg.k != spec.k or idx.shape != spec.z.shape:
        raise CorruptMessageError("message does not match the quantizer spec")
    if np.any(idx < 0) or np.any(idx > spec.k + 1):
        raise CorruptMessageError("level index out of range")
    return level_values(spec.z, spec.d, spec.k, idx)


def adaptive_interval(g_bound, sigma_phi, alpha_t, beta_t, n):
    """Interval vector ``G * alpha * beta / sigma * ones(n)``."""
    if g_bound <= 0 or sigma_phi <= 0 or alpha_t <= 0 or beta_t <= 0:
        raise ValueError("G, sigma_phi, alpha(t) and beta(t) must be positive")
    return np.full(n, g_bound * alpha_t * beta_t / sigma_phi)


def quantization_error_bound(g_bound, n, sigma_phi, alpha_t, beta_t):
    """E(t) = G n alpha(t) beta(t) / sigma_phi."""
    return g_bound * n * alpha_t * beta_t / sigma_phi
