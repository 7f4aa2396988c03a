"""GF(2^8) arithmetic and a systematic (N,K) MDS Reed-Solomon codec.

The field uses the reduction polynomial x^8+x^4+x^3+x^2+1 (0x11D). Encoding
is systematic over a Cauchy generator: the first K chunks are the K equal
stripes of the zero-padded value, the remaining N-K are parity rows. Every
KxK row submatrix of the generator is invertible, so any K chunks decode.

K=1 is exact replication (all-ones generator) and K=N is pure striping.
Decoding is erasure-only: a corrupted supplied chunk yields a wrong value,
never a silent correction.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

POLY = 0x11D
FIELD = 256

# exp/log tables for the multiplicative group generated by 0x02.
_EXP = [0] * 512
_LOG = [0] * FIELD
_x = 1
for _i in range(255):
    _EXP[_i] = _x
    _LOG[_x] = _i
    _x <<= 1
    if _x & 0x100:
        _x ^= POLY
for _i in range(255, 512):
    _EXP[_i] = _EXP[_i - 255]

# full 256x256 product table; makes vectorized encode/decode a table gather.
_MUL = np.zeros((FIELD, FIELD), dtype=np.uint8)
for _a in range(1, FIELD):
    for _b in range(1, FIELD):
        _MUL[_a, _b] = _EXP[_LOG[_a] + _LOG[_b]]


def gf_mul(a: int, b: int) -> int:
    if a == 0 or b == 0:
        return 0
    return _EXP[_LOG[a] + _LOG[b]]


def gf_inv(a: int) -> int:
    if a == 0:
        raise ZeroDivisionError("0 has no inverse in GF(256)")
    return _EXP[255 - _LOG[a]]


def gf_add(a: int, b: int) -> int:
    return a ^ b


@dataclass(frozen=True)
class Chunk:
    index: int
    data: bytes


@functools.lru_cache(maxsize=None)
def generator_matrix(n: int, k: int) -> tuple[tuple[int, ...], ...]:
    """Systematic generator: identity on top, Cauchy parity rows below.

    Cauchy cell (r, c) = 1/(x_r + y_c) with x_r = k + r, y_c = c; the x and y
    sets are disjoint so every entry exists, and every square submatrix of a
    Cauchy matrix is nonsingular, which gives the MDS property.
    """
    if not 1 <= k <= n <= 255:
        raise ValueError("need 1 <= k <= n <= 255")
    if k == 1:
        return tuple((1,) for _ in range(n))
    rows = [tuple(1 if c == r else 0 for c in range(k)) for r in range(k)]
    for r in range(n - k):
        rows.append(tuple(gf_inv((k + r) ^ c) for c in range(k)))
    return tuple(rows)


def rs_encode(value: bytes, n: int, k: int) -> list[Chunk]:
    """Split `value` into K stripes (zero-padded) and emit N coded chunks."""
    if not value:
        raise ValueError("cannot encode an empty value")
    if not 1 <= k <= n <= 255:
        raise ValueError("need 1 <= k <= n <= 255")
    stride = -(-len(value) // k)
    padded = np.frombuffer(value.ljust(k * stride, b"\x00"), dtype=np.uint8)
    stripes = padded.reshape(k, stride)
    gen = generator_matrix(n, k)
    chunks = []
    for r in range(n):
        acc = np.zeros(stride, dtype=np.uint8)
        for c, coeff in enumerate(gen[r]):
            if coeff == 0:
                continue
            acc ^= _MUL[coeff][stripes[c]]
        chunks.append(Chunk(r, acc.tobytes()))
    return chunks


def _invert(matrix: list[list[int]]) -> list[list[int]]:
    k = len(matrix)
    aug = [row[:] + [1 if i == j else 0 for j in range(k)] for i, row in enumerate(matrix)]
    for col in range(k):
        pivot = next((r for r in range(col, k) if aug[r][col]), None)
        if pivot is None:
            raise ValueError("singular matrix (impossible for Cauchy rows)")
        aug[col], aug[pivot] = aug[pivot], aug[col]
        inv = gf_inv(aug[col][col])
        aug[col] = [gf_mul(inv, x) for x in aug[col]]
        for r in range(k):
            if r != col and aug[r][col]:
                factor = aug[r][col]
                aug[r] = [x ^ gf_mul(factor, y) for x, y in zip(aug[r], aug[col])]
    return [row[k:] for row in aug]


@functools.lru_cache(maxsize=4096)
def _decode_matrix(n: int, k: int, indices: tuple[int, ...]) -> tuple[tuple[int, ...], ...]:
    gen = generator_matrix(n, k)
    sub = [list(gen[i]) for i in indices]
    return tuple(tuple(row) for row in _invert(sub))


def rs_decode(chunks, n: int, k: int, orig_len: int) -> bytes:
    """Reconstruct the value from any >= K distinct chunks."""
    by_index = {}
    for ch in chunks:
        by_index.setdefault(ch.index, ch)
    if len(by_index) < k:
        raise ValueError(f"need {k} distinct chunks, got {len(by_index)}")
    picked = sorted(by_index)[:k]
    lengths = {len(by_index[i].data) for i in picked}
    if len(lengths) != 1:
        raise ValueError("inconsistent chunk lengths")
    stride = lengths.pop()
    inv = _decode_matrix(n, k, tuple(picked))
    rows = [np.frombuffer(by_index[i].data, dtype=np.uint8) for i in picked]
    out = np.empty(k * stride, dtype=np.uint8)
    for r in range(k):
        acc = np.zeros(stride, dtype=np.uint8)
        for c, coeff in enumerate(inv[r]):
            if coeff == 0:
                continue
            acc ^= _MUL[coeff][rows[c]]
        out[r * stride:(r + 1) * stride] = acc
    return out.tobytes()[:orig_len]
