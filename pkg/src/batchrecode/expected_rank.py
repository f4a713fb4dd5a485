"""Expected next-hop rank E_r(t) of a rank-r batch sent as t recoded packets.

E_r(t) sums, over the number i of packets that survive the channel, the
probability of i receptions times the expected rank of i random combinations
of r independent vectors.  Tables cover r = 0..M and t = 0..t_max; values at
real t are linear interpolations, i.e. a fractional recoding number is
realised by randomising between the two neighbouring integers.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from . import loss as _loss
from .errors import HorizonExceeded, InvalidDistribution, TableBudgetExceeded
from .gf import field as gf_field
from .rank import field_size, is_infinite, transfer_matrix

DEFAULT_WORK_BUDGET = 2 * 10**9
NOISE = 1e-12


@dataclass(frozen=True, eq=False)
class ExpectedRankTable:
    M: int
    q: object
    t_max: int
    E: np.ndarray
    channel_tag: str = ""
    delta_table: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        E = np.array(self.E, dtype=float)
        if E.shape != (self.M + 1, self.t_max + 1):
            raise ValueError(f"E has shape {E.shape}, expected {(self.M + 1, self.t_max + 1)}")
        E.setflags(write=False)
        D = np.diff(E, axis=1)
        D.setflags(write=False)
        object.__setattr__(self, "E", E)
        object.__setattr__(self, "delta_table", D)

    def eval(self, r: int, t: float) -> float:
        """E_r(t) for real t in [0, t_max], linearly interpolated."""
        if t < 0:
            raise ValueError("t must be non-negative")
        if t > self.t_max:
            raise HorizonExceeded(f"t={t} beyond table horizon {self.t_max}")
        lo = int(math.floor(t))
        frac = t - lo
        if frac == 0.0:
            return float(self.E[r, lo])
        return float(frac * self.E[r, lo + 1] + (1.0 - frac) * self.E[r, lo])

    def delta(self, r: int, t: int) -> float:
        """Slope E_r(t+1) - E_r(t); +inf at t = -1 by convention."""
        if t == -1:
            return math.inf
        if t < -1:
            raise ValueError("t must be >= -1")
        if t > self.t_max - 1:
            raise HorizonExceeded(f"slope at t={t} needs E beyond horizon {self.t_max}")
        return float(self.delta_table[r, t])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["r", "t", "E", "delta"])
        for r in range(self.M + 1):
            for t in range(self.t_max + 1):
                d = f"{self.delta_table[r, t]:.17g}" if t < self.t_max else ""
                w.writerow([r, t, f"{self.E[r, t]:.17g}", d])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, q, channel_tag: str = "") -> "ExpectedRankTable":
        rows = list(csv.DictReader(io.StringIO(text)))
        M = max(int(row["r"]) for row in rows)
        t_max = max(int(row["t"]) for row in rows)
        E = np.zeros((M + 1, t_max + 1))
        for row in rows:
            E[int(row["r"]), int(row["t"])] = float(row["E"])
        return cls(M, field_size(q), t_max, E, channel_tag)


def channel_tag(model) -> str:
    return repr(model)


def default_horizon(M: int, h: Optional[Sequence[float]] = None, t_avg: float = 0.0) -> int:
    """max(M + ceil(t_avg / min positive h_r), 4M), counting ranks r >= 1 only."""
    base = 4 * M
    if h is None:
        return max(base, 1)
    pos = [x for x in list(h)[1:] if x > 0]
    if not pos or t_avg <= 0:
        return max(base, 1)
    return max(M + int(math.ceil(t_avg / min(pos) - 1e-12)), base, 1)


def build_table(model, q, M: int, t_max: int,
                work_budget: int = DEFAULT_WORK_BUDGET) -> ExpectedRankTable:
    """Exact table of E_r(t) for r <= M, t <= t_max."""
    q = field_size(q)
    if M < 1 or t_max < 1:
        raise ValueError("M and t_max must be at least 1")
    n_states = _loss._chain(model).n
    work = (n_states**2 + M + 1) * (t_max + 1) ** 2
    if work > work_budget:
        raise TableBudgetExceeded(f"table needs ~{work:.3g} operations, budget {work_budget:.3g}")
    return _build_cached(model, q, M, t_max)


@lru_cache(maxsize=64)
def _build_cached(model, q, M, t_max):
    P = _loss.receive_count_table(model, t_max)
    E = np.zeros((M + 1, t_max + 1))
    for r in range(1, M + 1):
        # g[i] = expected rank of i random combinations of r independent vectors
        g = transfer_matrix(r, t_max, q) @ np.arange(r + 1)
        E[r] = P @ g
    E[:, 0] = 0.0
    return ExpectedRankTable(M, q, t_max, E, channel_tag(model))


def monte_carlo_er(model, q, r: int, t: int, trials: int, seed) -> tuple:
    """Sample mean and standard error of rk(R_{r,t} diag(Z_1..Z_t)).

    R is uniform over GF(q)^{r x t}; an infinite field is simulated as
    rank = min(r, number received).
    """
    q = field_size(q)
    rng = np.random.default_rng(seed)
    patterns = _loss.sample_patterns(model, t, trials, rng)
    if is_infinite(q):
        ranks = np.minimum(patterns.sum(axis=1), r).astype(float)
    else:
        gf = gf_field(q)
        ranks = np.empty(trials)
        chunk = max(1, 2_000_000 // max(1, r * t))
        for s in range(0, trials, chunk):
            e = min(trials, s + chunk)
            R = gf.random(rng, (e - s, r, t))
            R *= patterns[s:e, None, :]
            ranks[s:e] = gf.rank(R)
    mean = float(ranks.mean())
    se = float(ranks.std(ddof=1) / math.sqrt(trials)) if trials > 1 else math.inf
    return mean, se


@dataclass
class ConcavityReport:
    violations: list
    max_violation: float
    monotonicity_violations: list

    @property
    def ok(self) -> bool:
        return not self.violations and not self.monotonicity_violations


def verify_concavity(table: ExpectedRankTable, tol: float = NOISE) -> ConcavityReport:
    """List (r, t) with Delta_{r,t} > Delta_{r,t-1} + tol, and monotonicity breaks."""
    D = table.delta_table
    excess = D[:, 1:] - D[:, :-1]
    bad = np.argwhere(excess > tol)
    violations = [(int(r), int(t) + 1) for r, t in bad]
    worst = float(excess.max()) if excess.size else 0.0
    mono = [(int(r), int(t)) for r, t in np.argwhere(D < -tol)]
    return ConcavityReport(violations, max(worst, 0.0), mono)


def check_distribution(h, M: Optional[int] = None, name: str = "h") -> np.ndarray:
    h = np.asarray(h, dtype=float)
    if h.ndim != 1 or (M is not None and len(h) != M + 1):
        raise InvalidDistribution(f"{name} must be a vector of length {M + 1 if M is not None else 'M+1'}")
    if np.any(h < 0) or np.any(np.isnan(h)):
        raise InvalidDistribution(f"{name} has negative entries")
    if abs(h.sum() - 1.0) > 1e-12:
        raise InvalidDistribution(f"{name} sums to {h.sum():.17g}, not 1")
    return h


def propagate_rank_dist(model, q, M: int, h, policy) -> np.ndarray:
    """Next-hop rank distribution when rank-r batches get t_r recoded packets.

    Fractional t_r split between floor and floor + 1 as in the interpolation.
    """
    from .optimizer import policy_to_conditional_dist

    q = field_size(q)
    h = check_distribution(h, M)
    t = np.asarray(policy, dtype=float)
    alphas = policy_to_conditional_dist(t)
    n_max = max(max(a) for a in alphas)
    P = _loss.receive_count_table(model, max(n_max, 1))
    out = np.zeros(M + 1)
    for r in range(M + 1):
        if h[r] == 0:
            continue
        if r == 0:
            out[0] += h[0]
            continue
        Z = transfer_matrix(r, max(n_max, 1), q)
        for n, a in alphas[r].items():
            out[: r + 1] += h[r] * a * (P[n, : n + 1] @ Z[: n + 1])
    return out
