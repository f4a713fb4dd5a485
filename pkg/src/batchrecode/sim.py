"""Monte Carlo RLNC over GF(2^m): recode, lose packets, measure ranks hop by hop.

Batches live in a ``BatchStack``: coefficient matrices of shape (N, M, K)
whose columns are the packets a node holds (lost packets are zero columns,
which do not change the span).  A random combination of the columns is
uniform over their span, so this is all a recoder needs.  With an infinite
field only ranks are tracked and a hop maps rank r to min(r, received).

Work is split into fixed blocks of batches; each block draws from its own
generator seeded by (seed, hop, block), so results do not depend on how
blocks are scheduled.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from . import loss as _loss
from .expected_rank import check_distribution
from .gf import field as gf_field
from .rank import field_size, is_infinite

BLOCK = 1024


@dataclass
class Batch:
    """One batch: columns of ``coeff`` are held coefficient vectors."""

    coeff: Optional[np.ndarray]
    rank: int

    @classmethod
    def source(cls, M: int, q) -> "Batch":
        q = field_size(q)
        coeff = None if is_infinite(q) else np.eye(M, dtype=np.uint8)
        return cls(coeff, M)


def recode(batch: Batch, count: int, q, seed) -> list:
    """``count`` random combinations of the batch's columns.

    With an infinite field no vectors exist; ``count`` placeholders (None)
    are returned and only the rank is meaningful.
    """
    if count < 0:
        raise ValueError("count must be non-negative")
    q = field_size(q)
    if is_infinite(q):
        return [None] * count
    gf = gf_field(q)
    rng = np.random.default_rng(seed)
    C = np.asarray(batch.coeff, dtype=np.uint8)
    R = gf.random(rng, (C.shape[1], count))
    out = gf.matmul(C, R)
    return [out[:, k].copy() for k in range(count)]


@dataclass
class BatchStack:
    M: int
    q: object
    ranks: np.ndarray
    coeff: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.ranks)

    def __getitem__(self, i) -> Batch:
        return Batch(None if self.coeff is None else self.coeff[i], int(self.ranks[i]))

    @classmethod
    def from_ranks(cls, ranks: Sequence[int], M: int, q) -> "BatchStack":
        """Batches whose spans are the first r unit vectors."""
        q = field_size(q)
        ranks = np.asarray(ranks, dtype=np.int64)
        if np.any(ranks < 0) or np.any(ranks > M):
            raise ValueError("ranks must lie in 0..M")
        if is_infinite(q):
            return cls(M, q, ranks.copy())
        coeff = np.zeros((len(ranks), M, M), dtype=np.uint8)
        idx = np.arange(M)
        coeff[:, idx, idx] = (idx[None, :] < ranks[:, None])
        return cls(M, q, ranks.copy(), coeff)

    @classmethod
    def source(cls, n: int, M: int, q) -> "BatchStack":
        return cls.from_ranks(np.full(n, M), M, q)

    @classmethod
    def from_distribution(cls, h, n: int, M: int, q) -> "BatchStack":
        """Exactly round(n h_r) batches of rank r (largest remainders absorb rounding)."""
        h = check_distribution(h, M)
        raw = h * n
        counts = np.floor(raw).astype(np.int64)
        short = n - counts.sum()
        counts[np.argsort(-(raw - counts), kind="stable")[:short]] += 1
        return cls.from_ranks(np.repeat(np.arange(M + 1), counts), M, q)


@dataclass(frozen=True)
class Baseline:
    t: float

    def __post_init__(self):
        if self.t < 0:
            raise ValueError("baseline recoding number must be non-negative")


@dataclass(frozen=True)
class Adaptive:
    policy: tuple

    def __post_init__(self):
        p = tuple(float(x) for x in self.policy)
        if any(x < 0 for x in p):
            raise ValueError("recoding numbers must be non-negative")
        object.__setattr__(self, "policy", p)


@dataclass(frozen=True)
class HopSpec:
    channel: object
    mode: Union[Baseline, Adaptive]

    def recoding_numbers(self, M: int) -> np.ndarray:
        if isinstance(self.mode, Baseline):
            return np.full(M + 1, float(self.mode.t))
        t = np.asarray(self.mode.policy, dtype=float)
        if t.shape != (M + 1,):
            raise ValueError(f"adaptive policy needs {M + 1} entries")
        return t


@dataclass
class HopStats:
    dist: np.ndarray
    mean_rank: float
    std_err: float
    packets_per_batch: float

    @classmethod
    def of(cls, ranks: np.ndarray, M: int, packets: float = 0.0) -> "HopStats":
        n = len(ranks)
        dist = np.bincount(ranks, minlength=M + 1) / n
        se = float(ranks.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return cls(dist, float(ranks.mean()), se, packets / n)


@dataclass
class ExperimentResult:
    M: int
    hops: list = field(default_factory=list)

    def dist_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["hop", "rank", "prob"])
        for k, s in enumerate(self.hops):
            for r, p in enumerate(s.dist):
                w.writerow([k, r, f"{p:.17g}"])
        return buf.getvalue()

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["hop", "mean_rank", "std_err", "packets_per_batch"])
        for k, s in enumerate(self.hops):
            w.writerow([k, f"{s.mean_rank:.17g}", f"{s.std_err:.17g}", f"{s.packets_per_batch:.17g}"])
        return buf.getvalue()


def _draw_counts(t: np.ndarray, ranks: np.ndarray, rng) -> np.ndarray:
    tr = t[ranks]
    lo = np.floor(tr)
    return (lo + (rng.random(len(ranks)) < tr - lo)).astype(np.int64)


def simulate_hop(batches: BatchStack, hop: HopSpec, q=None, seed: int = 0,
                 hop_index: int = 0) -> tuple:
    """Send every batch across one lossy link; return (next batches, stats).

    Stats describe the *received* ranks; packets_per_batch counts what the
    sender transmitted.
    """
    q = batches.q if q is None else field_size(q)
    M = batches.M
    if np.any(batches.ranks > M):
        raise ValueError("batch ranks exceed M")
    t = hop.recoding_numbers(M)
    gf = None if is_infinite(q) else gf_field(q)
    new_ranks = np.empty(len(batches), dtype=np.int64)
    blocks = []
    sent = 0
    for b, s in enumerate(range(0, len(batches), BLOCK)):
        e = min(len(batches), s + BLOCK)
        rng = np.random.default_rng(np.random.SeedSequence([seed, hop_index, b]))
        ranks = batches.ranks[s:e]
        counts = _draw_counts(t, ranks, rng)
        sent += int(counts.sum())
        width = int(counts.max()) if len(counts) else 0
        pattern = _loss.sample_patterns(hop.channel, width, e - s, rng)
        keep = pattern.astype(bool) & (np.arange(width)[None, :] < counts[:, None])
        if gf is None:
            new_ranks[s:e] = np.minimum(ranks, keep.sum(axis=1))
            continue
        C = batches.coeff[s:e]
        R = gf.random(rng, (e - s, C.shape[2], width))
        R *= keep[:, None, :]
        out = gf.matmul(C, R)
        new_ranks[s:e] = gf.rank(out)
        blocks.append(out)
    if gf is None:
        nxt = BatchStack(M, q, new_ranks)
    else:
        width = max((blk.shape[2] for blk in blocks), default=0)
        coeff = np.zeros((len(batches), M, width), dtype=np.uint8)
        pos = 0
        for blk in blocks:
            coeff[pos: pos + len(blk), :, : blk.shape[2]] = blk
            pos += len(blk)
        nxt = BatchStack(M, q, new_ranks, coeff)
    return nxt, HopStats.of(new_ranks, M, sent)


def run_experiment(path: Sequence[HopSpec], M: int, q, num_batches: int, seed: int,
                   source: Optional[BatchStack] = None) -> ExperimentResult:
    """Push ``num_batches`` source batches (rank M unless given) along ``path``."""
    if num_batches < 1:
        raise ValueError("num_batches must be at least 1")
    q = field_size(q)
    batches = BatchStack.source(num_batches, M, q) if source is None else source
    result = ExperimentResult(M, [HopStats.of(batches.ranks, M)])
    for k, hop in enumerate(path):
        batches, stats = simulate_hop(batches, hop, q, seed, hop_index=k)
        result.hops.append(stats)
    return result

