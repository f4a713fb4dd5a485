"""Rank probabilities of random matrices over a finite field.

Field sizes are plain integers (prime powers); ``INF`` stands for the
large-field limit, where a random matrix has full rank with probability one.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from .errors import InvalidField

INF = math.inf


def is_infinite(q) -> bool:
    return isinstance(q, float) and math.isinf(q)


def _is_prime_power(q: int) -> bool:
    p = next(d for d in range(2, q + 1) if q % d == 0)
    while q % p == 0:
        q //= p
    return q == 1


def field_size(q):
    """Validate and normalise a field size: an int prime power or ``INF``.

    Accepts the string ``"inf"`` as well.
    """
    if isinstance(q, str):
        if q.strip().lower() in ("inf", "infinite", "infinity"):
            return INF
        try:
            q = int(q)
        except ValueError:
            raise InvalidField(f"field size {q!r} is not an integer or 'inf'") from None
    if is_infinite(q):
        return INF
    if isinstance(q, float) and q.is_integer():
        q = int(q)
    if not isinstance(q, (int, np.integer)) or isinstance(q, bool) or q < 2:
        raise InvalidField(f"field size {q!r} must be an integer >= 2 or 'inf'")
    q = int(q)
    if not _is_prime_power(q):
        raise InvalidField(f"field size {q} is not a prime power")
    return q


def _qpow(q, e: int) -> float:
    """q**e as a float; large negative exponents underflow to 0."""
    return float(q) ** e


def zeta(j: int, m: int, q) -> float:
    """prod_{k=0}^{j-1} (1 - q^(k-m)): a random m x j matrix has full column rank j.

    Equivalently, j random vectors of length m are linearly independent.
    """
    if j < 0:
        raise ValueError("j must be non-negative")
    if is_infinite(q):
        return 1.0 if j <= m else 0.0
    if j > m:
        return 0.0
    out = 1.0
    for k in range(j - 1, -1, -1):
        out *= 1.0 - _qpow(q, k - m)
    return out


def zeta_transfer(j: int, i: int, r: int, q) -> float:
    """Pr(a rank-r batch has rank j after i received random combinations).

    For an infinite field this is the Kronecker delta at min(i, r).
    """
    if j < 0 or j > min(i, r):
        return 0.0
    if is_infinite(q):
        return 1.0 if j == min(i, r) else 0.0
    num = zeta(j, i, q) * zeta(j, r, q)
    if num == 0.0:
        return 0.0
    return num / zeta(j, j, q) * _qpow(q, -(i - j) * (r - j))


@lru_cache(maxsize=None)
def transfer_matrix(r: int, n_max: int, q) -> np.ndarray:
    """Array ``Z[i, j] = zeta_transfer(j, i, r, q)`` for i <= n_max, j <= r."""
    Z = np.zeros((n_max + 1, r + 1))
    for i in range(n_max + 1):
        for j in range(min(i, r) + 1):
            Z[i, j] = zeta_transfer(j, i, r, q)
    Z.setflags(write=False)
    return Z


def random_matrix_rank_dist(r: int, t: int, q) -> np.ndarray:
    """Rank distribution of a uniformly random r x t matrix, indexed 0..min(r, t).

    Built column by column: a new random column leaves the rank at i with
    probability q^(i-r) and raises it otherwise.
    """
    if r < 0 or t < 0:
        raise ValueError("matrix dimensions must be non-negative")
    if is_infinite(q):
        out = np.zeros(min(r, t) + 1)
        out[-1] = 1.0
        return out
    dist = np.zeros(min(r, t) + 1)
    dist[0] = 1.0
    for cols in range(t):
        nxt = np.zeros_like(dist)
        for i in range(min(r, cols) + 1):
            stay = _qpow(q, i - r)
            nxt[i] += dist[i] * stay
            if i < r:
                nxt[i + 1] += dist[i] * (1.0 - stay)
        dist = nxt
    return dist


def expected_random_rank(r: int, t: int, q) -> float:
    dist = random_matrix_rank_dist(r, t, q)
    return float(np.arange(len(dist)) @ dist)


def delta_expected_rank_random(r: int, t: int, q) -> float:
    """E[rk R_{r,t+1}] - E[rk R_{r,t}], i.e. Pr(a new column escapes the span)."""
    if is_infinite(q):
        return 1.0 if t < r else 0.0
    dist = random_matrix_rank_dist(r, t, q)
    return float(sum(p * (1.0 - _qpow(q, i - r)) for i, p in enumerate(dist)))
