"""GF(2^m) arithmetic for m in {1, 2, 4, 8} via log/antilog tables.

Elements are stored as uint8.  Matrix routines work on stacks of matrices so
that many batches can be processed in one numpy call.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from .errors import UnsupportedSimulationField
from .rank import is_infinite

# primitive polynomials, bit i = coefficient of x^i
_PRIMITIVE = {1: 0b11, 2: 0b111, 4: 0b10011, 8: 0x11D}


class GF2m:
    def __init__(self, q: int):
        m = q.bit_length() - 1
        if q != 1 << m or m not in _PRIMITIVE:
            raise UnsupportedSimulationField(f"simulation supports q in {{2, 4, 16, 256}}, got {q}")
        self.q = q
        self.m = m
        exp = np.zeros(2 * q, dtype=np.int64)
        log = np.zeros(q, dtype=np.int64)
        x = 1
        for k in range(q - 1):
            exp[k] = x
            log[x] = k
            x <<= 1
            if x & q:
                x ^= _PRIMITIVE[m]
        exp[q - 1: 2 * (q - 1)] = exp[: q - 1]
        self.exp, self.log = exp, log
        a = np.arange(q)
        mul = exp[(log[a][:, None] + log[a][None, :]) % (q - 1)]
        mul[0, :] = 0
        mul[:, 0] = 0
        self.mul_table = mul.astype(np.uint8)
        inv = np.zeros(q, dtype=np.uint8)
        inv[1:] = exp[(q - 1 - log[1:]) % (q - 1)]
        self.inv_table = inv

    def mul(self, a, b):
        return self.mul_table[a, b]

    def inv(self, a):
        a = np.asarray(a)
        if np.any(a == 0):
            raise ZeroDivisionError("zero has no inverse")
        return self.inv_table[a]

    def random(self, rng: np.random.Generator, shape) -> np.ndarray:
        return rng.integers(0, self.q, size=shape, dtype=np.uint8)

    def matmul(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        """Batched product: (..., n, k) x (..., k, p) -> (..., n, p)."""
        prods = self.mul_table[A[..., :, :, None], B[..., None, :, :]]
        return np.bitwise_xor.reduce(prods, axis=-2) if A.shape[-1] else np.zeros(
            A.shape[:-1] + B.shape[-1:], dtype=np.uint8)

    def rank(self, A: np.ndarray) -> np.ndarray:
        """Ranks of a stack of matrices (..., rows, cols) by Gaussian elimination."""
        A = np.array(A, dtype=np.uint8, copy=True)
        lead = A.shape[:-2]
        if A.shape[-1] == 0 or A.shape[-2] == 0:
            return np.zeros(lead, dtype=np.int64)
        A = A.reshape((-1,) + A.shape[-2:])
        n, rows, cols = A.shape
        rank = np.zeros(n, dtype=np.int64)
        row_idx = np.arange(rows)
        for c in range(cols):
            cand = (A[:, :, c] != 0) & (row_idx[None, :] >= rank[:, None])
            has = np.flatnonzero(cand.any(axis=1))
            if has.size == 0:
                continue
            piv = np.argmax(cand[has], axis=1)
            rr = rank[has]
            top = A[has, rr].copy()
            A[has, rr] = A[has, piv]
            A[has, piv] = top
            pivot_row = A[has, rr]
            scale = self.inv_table[pivot_row[:, c]]
            factor = self.mul_table[A[has, :, c], scale[:, None]]
            factor[row_idx[None, :] <= rr[:, None]] = 0
            A[has] ^= self.mul_table[factor[:, :, None], pivot_row[:, None, :]]
            rank[has] += 1
            if np.all(rank >= rows):
                break
        return rank.reshape(lead)


@lru_cache(maxsize=None)
def field(q) -> GF2m:
    if is_infinite(q):
        raise UnsupportedSimulationField("an infinite field has no matrix arithmetic")
    return GF2m(int(q))
