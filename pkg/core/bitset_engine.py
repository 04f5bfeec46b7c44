"""
Bitset Engine
=============

Word-packed binary vectors/matrices and AND+popcount synaptic integration.

Features:
- pack/unpack between {0,1}^d and B = ceil(d / w) machine words (w = 32 or 64)
- Canonical zero padding past the logical length
- masked_popcount_dot: m' s = sum_b popcount(M_b & S_b)
- signed_integrate: excitatory minus inhibitory counts per postsynaptic row
- Dense integer / float32 reference paths used as oracles and in the benchmark

Bit i of a vector lives in bit (i mod w) of word floor(i / w). Matrices are
packed one row per postsynaptic neuron so each row is a contiguous stream.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np
from numba import njit

from .bernoulli_dist import ShapeMismatchError

logger = logging.getLogger(__name__)

DEFAULT_WORD_BITS = 64
WORD_DTYPES = {32: np.uint32, 64: np.uint64}

_M1 = np.uint64(0x5555555555555555)
_M2 = np.uint64(0x3333333333333333)
_M4 = np.uint64(0x0F0F0F0F0F0F0F0F)
_H01 = np.uint64(0x0101010101010101)


# ---------- Kernels ----------

@njit(cache=True, nogil=True)
def popcount64(x):
    """SWAR popcount of one 64-bit word."""
    x = np.uint64(x)
    x = x - ((x >> np.uint64(1)) & _M1)
    x = (x & _M2) + ((x >> np.uint64(2)) & _M2)
    x = (x + (x >> np.uint64(4))) & _M4
    return np.int64((x * _H01) >> np.uint64(56))


@njit(cache=True, nogil=True)
def _and_popcount(row, spikes):
    total = 0
    for b in range(row.shape[0]):
        total += popcount64(row[b] & spikes[b])
    return total


@njit(cache=True, nogil=True)
def popcount_matvec(rows, spikes, out):
    """out[j] = sum_b popcount(rows[j, b] & spikes[b])."""
    for j in range(rows.shape[0]):
        out[j] = _and_popcount(rows[j], spikes)


@njit(cache=True, nogil=True)
def signed_popcount_matvec(exc_rows, inh_rows, spikes, out):
    """out[j] = popcount(exc_j & s) - popcount(inh_j & s)."""
    for j in range(exc_rows.shape[0]):
        out[j] = _and_popcount(exc_rows[j], spikes) - _and_popcount(inh_rows[j], spikes)


@njit(cache=True, nogil=True)
def pack_spikes(spikes, word_bits, out):
    """Pack a {0,1} uint8 vector into `out` words on the fly."""
    for b in range(out.shape[0]):
        out[b] = 0
    for i in range(spikes.shape[0]):
        if spikes[i]:
            b = i // word_bits
            out[b] = out[b] | (np.uint64(1) << np.uint64(i - b * word_bits))


# ---------- Types ----------

@dataclass(frozen=True)
class PackedBitVector:
    """B words holding a logical bit vector of length `length`."""
    words: np.ndarray
    length: int
    word_bits: int = DEFAULT_WORD_BITS

    @property
    def n_words(self) -> int:
        return int(self.words.size)

    def popcount(self) -> int:
        return int(sum(popcount64(w) for w in self.words))


@dataclass(frozen=True)
class PackedBitMatrix:
    """Row-major packed matrix: one PackedBitVector-compatible row per postsynaptic neuron."""
    row_words: np.ndarray
    length: int
    word_bits: int = DEFAULT_WORD_BITS

    @property
    def rows(self) -> int:
        return int(self.row_words.shape[0])

    @property
    def n_words(self) -> int:
        return int(self.row_words.shape[1])

    def row(self, j: int) -> PackedBitVector:
        return PackedBitVector(self.row_words[j], self.length, self.word_bits)


# ---------- Packing ----------

def n_words_for(length: int, word_bits: int = DEFAULT_WORD_BITS) -> int:
    """B = ceil(length / w)."""
    return -(-length // word_bits)


def _word_dtype(word_bits: int):
    if word_bits not in WORD_DTYPES:
        raise ValueError(f"word_bits must be one of {sorted(WORD_DTYPES)}, got {word_bits}")
    return WORD_DTYPES[word_bits]


def _pack_rows(bits2d: np.ndarray, word_bits: int) -> np.ndarray:
    dtype = _word_dtype(word_bits)
    rows, length = bits2d.shape
    n_words = n_words_for(length, word_bits)
    padded = np.zeros((rows, n_words * word_bits), dtype=np.uint8)
    padded[:, :length] = bits2d != 0
    as_bytes = np.packbits(padded, axis=1, bitorder="little")
    le = np.dtype(dtype).newbyteorder("<")
    words = np.ascontiguousarray(as_bytes).view(le).astype(dtype)
    return words.reshape(rows, n_words)


def pack(bits: np.ndarray, word_bits: int = DEFAULT_WORD_BITS) -> PackedBitVector:
    """Pack a {0,1} vector; padding bits past len are zero."""
    b = np.asarray(bits).reshape(-1)
    if b.size and not np.all((b == 0) | (b == 1)):
        raise ValueError("pack expects a vector of 0/1 values")
    words = _pack_rows(b.reshape(1, -1), word_bits)[0]
    return PackedBitVector(words=words, length=int(b.size), word_bits=word_bits)


def unpack(vec: PackedBitVector) -> np.ndarray:
    """Inverse of pack: a uint8 {0,1} vector of length vec.length."""
    le = vec.words.astype(vec.words.dtype.newbyteorder("<"))
    as_bytes = le.view(np.uint8)
    return np.unpackbits(as_bytes, bitorder="little")[: vec.length].astype(np.uint8)


def pack_matrix(mask: np.ndarray, word_bits: int = DEFAULT_WORD_BITS) -> PackedBitMatrix:
    """Pack a (rows, d_in) {0,1} matrix row by row."""
    m = np.asarray(mask)
    if m.ndim != 2:
        raise ValueError(f"pack_matrix expects a 2-D mask, got shape {m.shape}")
    if m.size and not np.all((m == 0) | (m == 1)):
        raise ValueError("pack_matrix expects 0/1 values")
    return PackedBitMatrix(row_words=_pack_rows(m, word_bits), length=int(m.shape[1]),
                           word_bits=word_bits)


def unpack_matrix(mat: PackedBitMatrix) -> np.ndarray:
    if mat.rows == 0:
        return np.zeros((0, mat.length), dtype=np.uint8)
    return np.stack([unpack(mat.row(j)) for j in range(mat.rows)])


# ---------- Integration ----------

def masked_popcount_dot(mask_row: PackedBitVector, spikes: PackedBitVector) -> int:
    """Binary dot product m' s via AND + popcount."""
    if mask_row.length != spikes.length or mask_row.word_bits != spikes.word_bits:
        raise ShapeMismatchError(
            f"length mismatch: mask has {mask_row.length} bits, spikes {spikes.length}"
        )
    return int(_and_popcount(mask_row.words.astype(np.uint64), spikes.words.astype(np.uint64)))


def signed_integrate(
    exc_matrix: PackedBitMatrix,
    inh_matrix: PackedBitMatrix,
    spikes: PackedBitVector,
) -> np.ndarray:
    """Per-row excitatory minus inhibitory spike count (int64)."""
    for name, mat in (("excitatory", exc_matrix), ("inhibitory", inh_matrix)):
        if mat.length != spikes.length or mat.word_bits != spikes.word_bits:
            raise ShapeMismatchError(
                f"length mismatch: {name} matrix has {mat.length} bits, spikes {spikes.length}"
            )
    if exc_matrix.rows != inh_matrix.rows:
        raise ShapeMismatchError(
            f"excitatory matrix has {exc_matrix.rows} rows, inhibitory {inh_matrix.rows}"
        )
    out = np.zeros(exc_matrix.rows, dtype=np.int64)
    signed_popcount_matvec(
        exc_matrix.row_words.astype(np.uint64),
        inh_matrix.row_words.astype(np.uint64),
        spikes.words.astype(np.uint64),
        out,
    )
    return out


def dense_dot(mask: np.ndarray, spikes: np.ndarray) -> int:
    """Dense integer oracle for masked_popcount_dot."""
    return int(np.dot(np.asarray(mask, dtype=np.int64), np.asarray(spikes, dtype=np.int64)))


def dense_signed_matvec(exc: np.ndarray, inh: np.ndarray, spikes: np.ndarray) -> np.ndarray:
    """Dense integer oracle for signed_integrate."""
    s = np.asarray(spikes, dtype=np.int64)
    return np.asarray(exc, dtype=np.int64) @ s - np.asarray(inh, dtype=np.int64) @ s


# ---------- Benchmark ----------

@dataclass(frozen=True)
class BenchResult:
    d_in: int
    rows: int
    bitset_ns: float
    dense_ns: float

    @property
    def ratio(self) -> float:
        return self.dense_ns / self.bitset_ns if self.bitset_ns > 0 else float("inf")

    def csv_row(self) -> str:
        return f"{self.d_in},{self.rows},{self.bitset_ns:.1f},{self.dense_ns:.1f},{self.ratio:.3f}"


BENCH_CSV_HEADER = "d,rows,bitset_ns,dense_ns,ratio"


def _median_ns(fn, reps: int) -> float:
    fn()  # warm-up (JIT, caches)
    samples = np.empty(reps, dtype=np.float64)
    for r in range(reps):
        t0 = time.perf_counter_ns()
        fn()
        samples[r] = time.perf_counter_ns() - t0
    return float(np.median(samples))


def bench_kernel(d_in: int, rows: int, reps: int = 200, seed: int = 0,
                 word_bits: int = DEFAULT_WORD_BITS) -> BenchResult:
    """
    Median time per matvec: AND+popcount over packed words vs float32 dense.

    Both paths see the same logical mask and spike vector; their results are
    compared before any timing is taken.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    rng = np.random.default_rng(seed)
    mask = (rng.random((rows, d_in)) < 0.5).astype(np.uint8)
    spikes = (rng.random(d_in) < 0.2).astype(np.uint8)

    packed = pack_matrix(mask, word_bits).row_words.astype(np.uint64)
    spike_words = pack(spikes, word_bits).words.astype(np.uint64)
    counts = np.zeros(rows, dtype=np.int64)

    dense_w = mask.astype(np.float32)
    dense_s = spikes.astype(np.float32)

    popcount_matvec(packed, spike_words, counts)
    reference = dense_w @ dense_s
    if not np.array_equal(counts, reference.astype(np.int64)):
        raise RuntimeError(f"bitset and dense matvec disagree at d_in={d_in}, rows={rows}")

    bitset_ns = _median_ns(lambda: popcount_matvec(packed, spike_words, counts), reps)
    dense_ns = _median_ns(lambda: dense_w @ dense_s, reps)
    result = BenchResult(d_in=d_in, rows=rows, bitset_ns=bitset_ns, dense_ns=dense_ns)
    logger.debug("bench d_in=%d rows=%d ratio=%.2f", d_in, rows, result.ratio)
    return result
