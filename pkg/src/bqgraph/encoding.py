"""Binary and 2-bit scalar encodings plus their integer distances.

Bit vectors are packed into little-endian ``uint64`` words: bit ``i`` of a
vector lives in word ``i // 64`` at position ``i % 64``. Pad bits past
``dim`` are always zero, so whole-word XOR/popcount needs no masking.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels

# SQ2 bucket range half-width, in per-vector standard deviations
SQ2_CLIP = 2.0


class EncodingError(ValueError):
    """Raised for empty, non-finite or mismatched encoder input."""


def n_words(dim: int) -> int:
    return (dim + 63) // 64


def pack_bits(bits: np.ndarray) -> np.ndarray:
    """Pack a boolean array of shape ``(..., D)`` into ``(..., ceil(D/64))`` uint64 words."""
    bits = np.asarray(bits, dtype=bool)
    dim = bits.shape[-1]
    W = n_words(dim)
    padded = np.zeros(bits.shape[:-1] + (W * 64,), dtype=bool)
    padded[..., :dim] = bits
    packed = np.packbits(padded, axis=-1, bitorder="little")
    return np.ascontiguousarray(packed).view("<u8").astype(np.uint64, copy=False)


def unpack_bits(words: np.ndarray, dim: int) -> np.ndarray:
    words = np.ascontiguousarray(words, dtype="<u8")
    raw = np.unpackbits(words.view(np.uint8), axis=-1, bitorder="little")
    return raw[..., :dim].astype(bool)


def _as_matrix(vectors) -> np.ndarray:
    X = np.asarray(vectors, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] == 0:
        raise EncodingError("expected non-empty vectors")
    if not np.all(np.isfinite(X)):
        raise EncodingError("vectors contain NaN or Inf")
    return X


def _check_dims(a, b):
    if a.dim != b.dim:
        raise EncodingError(f"dimension mismatch: {a.dim} != {b.dim}")


@dataclass(frozen=True, eq=False)
class SignBits:
    bits: np.ndarray
    dim: int

    def __eq__(self, other):
        return (
            isinstance(other, SignBits)
            and self.dim == other.dim
            and np.array_equal(self.bits, other.bits)
        )


@dataclass(frozen=True, eq=False)
class BQSignature:
    """Sign bits, strength bits and the per-vector mean-magnitude threshold."""

    pos_bits: np.ndarray
    strong_bits: np.ndarray
    tau: float
    dim: int

    def words(self) -> np.ndarray:
        """The ``[pos | strong]`` row used by the kernels and the index file."""
        return np.concatenate([self.pos_bits, self.strong_bits])

    def __eq__(self, other):
        return (
            isinstance(other, BQSignature)
            and self.dim == other.dim
            and self.tau == other.tau
            and np.array_equal(self.pos_bits, other.pos_bits)
            and np.array_equal(self.strong_bits, other.strong_bits)
        )


@dataclass(frozen=True, eq=False)
class SQ2Code:
    codes: np.ndarray
    dim: int

    def __eq__(self, other):
        return (
            isinstance(other, SQ2Code)
            and self.dim == other.dim
            and np.array_equal(self.codes, other.codes)
        )


@dataclass(frozen=True)
class EncodingDiagnostics:
    p_s: float
    nu2: float
    sample_size: int


def compute_threshold(vector) -> float:
    """Mean absolute coordinate value."""
    x = np.asarray(vector, dtype=np.float64).ravel()
    if x.size == 0:
        raise EncodingError("empty vector")
    return float(np.mean(np.abs(x)))


# -- batch encoders; the single-vector API wraps these ----------------------


def encode_sm2_batch(vectors) -> tuple[np.ndarray, np.ndarray]:
    """Encode many vectors at once.

    Returns:
        ``(sigs, taus)`` where ``sigs`` has shape ``(n, 2W)`` holding pos words
        then strong words for each row.
    """
    X = _as_matrix(vectors)
    A = np.abs(X)
    taus = A.mean(axis=1)
    pos = pack_bits(X > 0)
    strong = pack_bits(A > taus[:, None])
    return np.ascontiguousarray(np.concatenate([pos, strong], axis=1)), taus


def encode_sign1_batch(vectors) -> np.ndarray:
    return pack_bits(_as_matrix(vectors) > 0)


def encode_sq2_batch(vectors) -> np.ndarray:
    """Four equal-width buckets over a clipped per-vector range.

    The range is ``[max(min, mu - 2 sd), min(max, mu + 2 sd)]`` from the
    vector's own coordinates; values outside it clamp to codes 0 and 3. A
    plain min/max range puts nearly all coordinates of a high-dimensional
    vector into the two middle buckets, while a ``+-2 sd`` range gives bucket
    widths close to the optimal uniform 4-level step for Gaussian-like data.
    """
    X = _as_matrix(vectors)
    mu = X.mean(axis=1, keepdims=True)
    sd = X.std(axis=1, keepdims=True)
    lo = np.maximum(X.min(axis=1, keepdims=True), mu - SQ2_CLIP * sd)
    width = np.minimum(X.max(axis=1, keepdims=True), mu + SQ2_CLIP * sd) - lo
    codes = np.zeros(X.shape, dtype=np.uint8)
    live = width[:, 0] > 0
    if np.any(live):
        scaled = (X[live] - lo[live]) / width[live] * 4.0
        codes[live] = np.clip(np.floor(scaled), 0, 3).astype(np.uint8)
    return codes


def encode_sm2(vector) -> BQSignature:
    x = _as_matrix(vector)
    if x.shape[0] != 1:
        raise EncodingError("encode_sm2 takes a single vector")
    sigs, taus = encode_sm2_batch(x)
    W = n_words(x.shape[1])
    return BQSignature(sigs[0, :W].copy(), sigs[0, W:].copy(), float(taus[0]), x.shape[1])


def encode_sign1(vector) -> SignBits:
    x = _as_matrix(vector)
    if x.shape[0] != 1:
        raise EncodingError("encode_sign1 takes a single vector")
    return SignBits(encode_sign1_batch(x)[0], x.shape[1])


def encode_sq2(vector) -> SQ2Code:
    x = _as_matrix(vector)
    if x.shape[0] != 1:
        raise EncodingError("encode_sq2 takes a single vector")
    return SQ2Code(encode_sq2_batch(x)[0], x.shape[1])


# -- distances --------------------------------------------------------------


def sm2_distance(a: BQSignature, b: BQSignature) -> int:
    """Symmetric sign-magnitude penalty: 0 on sign agreement, else 4/2/1 by strength."""
    _check_dims(a, b)
    W = n_words(a.dim)
    A = a.words()[None, :]
    B = b.words()[None, :]
    return int(_kernels.sm2_rows(A, 0, B, 0, W))


def hamming_distance(a: SignBits, b: SignBits) -> int:
    _check_dims(a, b)
    return int(_kernels.hamming_rows(a.bits[None, :], 0, b.bits[None, :], 0, n_words(a.dim)))


def sq2_distance(a: SQ2Code, b: SQ2Code) -> int:
    _check_dims(a, b)
    return int(_kernels.sq2_rows(a.codes[None, :], 0, b.codes[None, :], 0, a.dim))


def strong_bit_rate(vectors) -> EncodingDiagnostics:
    """Fraction of coordinates whose magnitude strictly exceeds the vector's threshold."""
    X = np.asarray(vectors, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
        raise EncodingError("empty sample")
    X = _as_matrix(X)
    A = np.abs(X)
    strong = np.count_nonzero(A > A.mean(axis=1, keepdims=True))
    p_s = strong / X.size
    return EncodingDiagnostics(p_s=float(p_s), nu2=float((1.0 + 3.0 * p_s) ** 2), sample_size=X.shape[0])
