"""Recoding-number allocation: maximise sum_r h_r E_r(t_r) s.t. sum_r h_r t_r = t_avg.

The table of slopes Delta_{r,t} is viewed as a grid of cells; column r holds
the non-increasing slopes of E_r.  A policy occupies the lowest ceil(t_r)
cells of every column.  A *preferred* policy occupies the globally largest
cells, has at most one fractional t_r and puts it on a smallest occupied
cell.  Such a policy stays sensible when h is slightly wrong, including
for ranks with h_r = 0.

Ties between slopes closer than ``TIE`` are broken towards the larger rank.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DegenerateChannel, HorizonExceeded, OracleBudgetExceeded
from .expected_rank import ExpectedRankTable, check_distribution

TIE = 1e-12
INT_TOL = 1e-9
FEAS_TOL = 1e-10
_U_EPS = 1e-14


def _is_int(x: float) -> bool:
    return abs(x - round(x)) <= INT_TOL


def _snap(t) -> np.ndarray:
    t = np.array(t, dtype=float)
    near = np.abs(t - np.round(t)) <= 1e-12
    t[near] = np.round(t[near])
    return t


def _floor(x: float) -> int:
    return int(math.floor(x))


def _top(x: float) -> int:
    """Index of the highest occupied cell, ceil(x - 1); -1 when x = 0."""
    return int(math.ceil(x - 1))


@dataclass
class OptimizationOutcome:
    policy: np.ndarray
    objective: float
    lambda_interval: tuple
    feasible: bool
    ads: bool
    preferred: bool
    iterations: int

    def to_dict(self) -> dict:
        return {
            "t": [float(x) for x in self.policy],
            "objective": float(self.objective),
            "lambda_lo": float(self.lambda_interval[0]),
            "lambda_hi": float(self.lambda_interval[1]),
            "flags": {"feasible": self.feasible, "ads": self.ads, "preferred": self.preferred},
            "iterations": int(self.iterations),
        }


@dataclass
class Certificate:
    feasible: bool
    ads: bool
    preferred: bool
    diagnosis: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"feasible": self.feasible, "ads": self.ads,
                "preferred": self.preferred, "diagnosis": list(self.diagnosis)}


@dataclass
class CellMultiset:
    """Occupied cells (r, t, Delta_{r,t}) of a policy plus each rank's next slope."""

    cells: list
    frontier: dict

    def values(self) -> np.ndarray:
        return np.array([c[2] for c in self.cells])


def cell_multiset(table: ExpectedRankTable, policy) -> CellMultiset:
    t = _snap(policy)
    cells, frontier = [], {}
    for r, tr in enumerate(t):
        k = int(round(tr)) if _is_int(tr) else int(math.ceil(tr))
        cells.extend((r, c, float(table.delta_table[r, c])) for c in range(min(k, table.t_max)))
        fl = _floor(tr + 1e-12)
        frontier[r] = float(table.delta_table[r, fl]) if fl < table.t_max else None
    return CellMultiset(cells, frontier)


def objective(table: ExpectedRankTable, h, policy) -> float:
    """Average next-hop expected rank sum_r h_r E_r(t_r)."""
    h = np.asarray(h, dtype=float)
    return float(sum(h[r] * table.eval(r, float(tr)) for r, tr in enumerate(policy) if h[r] != 0))


def policy_to_conditional_dist(policy) -> list:
    """Per-rank distribution of the number of packets sent, e.g. 2.25 -> {2: .75, 3: .25}."""
    out = []
    for tr in np.asarray(policy, dtype=float):
        lo = _floor(tr)
        frac = float(tr) - lo
        out.append({lo: 1.0} if frac == 0.0 else {lo: 1.0 - frac, lo + 1: frac})
    return out


def multiplier_interval(table: ExpectedRankTable, h, policy) -> tuple:
    """Values of lambda for which every t_r with h_r > 0 maximises E_r(t) - lambda t."""
    lo, hi = 0.0, math.inf
    for r in range(1, table.M + 1):
        if h[r] == 0:
            continue
        tr = float(policy[r])
        fl = _floor(tr + 1e-12)
        front = float(table.delta_table[r, fl]) if fl < table.t_max else 0.0
        if _is_int(tr):
            upper = table.delta(r, int(round(tr)) - 1)
            lower = front
        else:
            lower = upper = front
        lo, hi = max(lo, lower), min(hi, upper)
    return lo, hi


def certify(table: ExpectedRankTable, h, policy, t_avg: Optional[float] = None) -> Certificate:
    """Check feasibility, the at-most-one-fractional property and preferredness."""
    h = check_distribution(h, table.M)
    t = _snap(policy)
    diag = []
    if t.shape != (table.M + 1,):
        return Certificate(False, False, False, [f"policy length {len(t)} != M+1"])
    if np.any(t < 0) or np.any(t > table.t_max):
        return Certificate(False, False, False, ["policy outside [0, t_max]"])
    feasible = True
    if t_avg is not None:
        used = float(h @ t)
        feasible = bool(abs(used - t_avg) <= FEAS_TOL)
        if not feasible:
            diag.append(f"resource used {used:.17g} != t_avg {t_avg:.17g}")
    fractional = [r for r in range(table.M + 1) if not _is_int(t[r])]
    ads = len(fractional) <= 1
    if not ads:
        diag.append(f"fractional recoding numbers at ranks {fractional}")
    D = table.delta_table
    counts = [int(round(x)) if _is_int(x) else int(math.ceil(x)) for x in t]
    sel = [D[r, :k] for r, k in enumerate(counts) if k > 0]
    unsel = [D[r, k:] for r, k in enumerate(counts) if k < table.t_max]
    sel_min = min((float(a.min()) for a in sel), default=math.inf)
    unsel_max = max((float(a.max()) for a in unsel), default=-math.inf)
    top_ok = bool(sel_min >= unsel_max - TIE)
    if not top_ok:
        r_bad = next(r for r, k in enumerate(counts)
                     if k < table.t_max and D[r, k:].max() > sel_min + TIE)
        diag.append(f"unoccupied slope {unsel_max:.6g} at rank {r_bad} exceeds occupied {sel_min:.6g}")
    frac_ok = True
    if ads and fractional:
        f = fractional[0]
        frac_ok = bool(D[f, counts[f] - 1] <= sel_min + TIE)
        if not frac_ok:
            diag.append(f"fractional rank {f} is not on a smallest occupied cell")
    preferred = feasible and ads and top_ok and frac_ok
    return Certificate(feasible, ads, preferred, diag)


def _outcome(table, h, t, t_avg, iterations) -> OptimizationOutcome:
    cert = certify(table, h, t, t_avg)
    return OptimizationOutcome(
        policy=t, objective=objective(table, h, t),
        lambda_interval=multiplier_interval(table, h, t),
        feasible=cert.feasible, ads=cert.ads, preferred=cert.preferred,
        iterations=iterations,
    )


def _pop_best(heap):
    """Pop the max-slope entry, preferring the larger rank among near-ties."""
    best = heapq.heappop(heap)
    tied = []
    while heap and -heap[0][0] >= -best[0] - TIE:
        tied.append(heapq.heappop(heap))
    for item in tied:
        if item[2] > best[2]:
            best, item = item, best
        heapq.heappush(heap, item)
    return best


def _check_degenerate(table):
    if table.M >= 1 and float(table.delta_table[1:].max()) <= TIE:
        raise DegenerateChannel("every slope is zero; the channel delivers nothing")


def _greedy(table, h, t, u):
    """Repeatedly extend the rank whose next slope is steepest."""
    t = t.copy()
    iterations = 0
    if u <= _U_EPS:
        return t, iterations
    _check_degenerate(table)
    heap = []
    for r in range(1, table.M + 1):
        fl = _floor(t[r])
        if fl < table.t_max:
            heap.append((-float(table.delta_table[r, fl]), -r, r))
    heapq.heapify(heap)
    cap = (table.M + 1) * (table.t_max + 1) + table.M + 1
    while u > _U_EPS:
        if not heap:
            raise HorizonExceeded("resource cannot be spent within the table horizon")
        if iterations > cap:
            raise RuntimeError("greedy allocation did not terminate")
        neg, _, r = _pop_best(heap)
        level = -neg
        iterations += 1
        fl = _floor(t[r])
        need = h[r] * (1.0 - (t[r] - fl))
        if need <= u:
            u -= need
            t[r] = fl + 1
            if fl + 1 < table.t_max:
                heapq.heappush(heap, (-float(table.delta_table[r, fl + 1]), -r, r))
        else:
            t[r] += u / h[r]
            u = 0.0
    # free cells still at or above the water level belong to the top set as well
    for r in range(1, table.M + 1):
        if h[r] == 0:
            while t[r] < table.t_max and table.delta_table[r, int(t[r])] >= level - TIE:
                t[r] += 1
                iterations += 1
    return t, iterations


def solve_greedy(table: ExpectedRankTable, h, t_avg: float,
                 start: Optional[tuple] = None) -> OptimizationOutcome:
    """Fill from an interior point (default: all zeros) by steepest slope first.

    ``start`` is ``(policy, remaining)`` with sum h_r t_r + remaining = t_avg.
    """
    h = check_distribution(h, table.M)
    if t_avg < 0:
        raise ValueError("t_avg must be non-negative")
    if start is None:
        t, u = np.zeros(table.M + 1), float(t_avg)
    else:
        t, u = _snap(start[0]), float(start[1])
        if t.shape != (table.M + 1,) or np.any(t < 0) or u < 0:
            raise ValueError("start must be a non-negative policy and remaining resource")
    t, iterations = _greedy(table, h, t, u)
    return _outcome(table, h, t, t_avg, iterations)


def _pick(items, sign):
    """Extreme of (value, r) pairs (sign=+1 max, -1 min); near-ties go to larger r."""
    items = list(items)
    if not items:
        return (-sign * math.inf, None)
    best = max(sign * v for v, _ in items)
    r = max(r for v, r in items if sign * v >= best - TIE)
    return sign * best, r


def _argmax_front(table, t):
    return _pick(((float(table.delta_table[r, _floor(t[r])]), r)
                  for r in range(1, table.M + 1) if _floor(t[r]) < table.t_max), +1)


def _argmin_top(table, t, ranks=None):
    ranks = range(table.M + 1) if ranks is None else ranks
    return _pick(((table.delta(r, _top(t[r])), r) for r in ranks), -1)


def tune(table: ExpectedRankTable, h, policy, t_avg: Optional[float] = None) -> OptimizationOutcome:
    """Move resource from the smallest occupied cell to the largest free one.

    Stops when no free cell beats an occupied one, drops the fractional
    parts and hands the freed resource back to the greedy fill.
    """
    h = check_distribution(h, table.M)
    t = _snap(policy)
    if t.shape != (table.M + 1,) or np.any(t < 0):
        raise ValueError("policy must be a non-negative vector of length M+1")
    if np.any(t > table.t_max):
        raise HorizonExceeded("policy exceeds the table horizon")
    if t_avg is None:
        t_avg = float(h @ t)
    iterations = 0
    if t[0] > 0:
        pool = h[0] * t[0]
        t[0] = 0.0
        t, it = _greedy(table, h, t, pool)
        iterations += it
    cap = 4 * (table.M + 1) * (table.t_max + 2) + 100
    while True:
        hi, m = _argmax_front(table, t)
        lo, n = _argmin_top(table, t)
        if m is None or not hi > lo + TIE:
            break
        iterations += 1
        if iterations > cap:
            raise RuntimeError("tuning did not terminate")
        if h[m] == 0:
            t[m] = _floor(t[m]) + 1
            continue
        if h[n] == 0:
            t[n] = _top(t[n])
            continue
        fl_n = _floor(t[n])
        releasable = h[n] * (t[n] - fl_n + (1.0 if t[n] == fl_n else 0.0))
        fillable = h[m] * (1.0 - (t[m] - _floor(t[m])))
        s = min(releasable, fillable)
        t[n] = _top(t[n]) if releasable <= fillable else t[n] - s / h[n]
        t[m] = _floor(t[m]) + 1 if fillable <= releasable else t[m] + s / h[m]
        t = _snap(t)
    floors = np.floor(t)
    u = float(h @ (t - floors))
    t, it = _greedy(table, h, floors, u)
    return _outcome(table, h, t, t_avg, iterations + it)


def t_r_interval(table: ExpectedRankTable, r: int, lam: float) -> tuple:
    """Maximisers of E_r(t) - lam * t over t >= 0, as a closed interval."""
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    D = table.delta_table[r]
    above = D > lam + TIE
    at_least = D >= lam - TIE
    lo = int(np.argmin(above)) if not above.all() else len(D)
    hi = int(np.argmin(at_least)) if not at_least.all() else len(D)
    return (lo, max(lo, hi))


def solve_dual(table: ExpectedRankTable, h, t_avg: float, tol: float = 1e-12) -> OptimizationOutcome:
    """Bisect on the multiplier, then rebuild a preferred primal point.

    Every rank starts at the left end of its maximiser interval, which
    occupies exactly the cells steeper than lambda; the greedy fill spends
    what is left.
    """
    h = check_distribution(h, table.M)
    if t_avg < 0:
        raise ValueError("t_avg must be non-negative")
    ranks = range(1, table.M + 1)

    def resource(lam, end):
        return sum(h[r] * t_r_interval(table, r, lam)[end] for r in ranks)

    lam_lo = 0.0
    lam_hi = max(float(table.delta_table[r, 0]) for r in ranks)
    if t_avg > 0:
        _check_degenerate(table)
    if resource(0.0, 1) < t_avg - FEAS_TOL:
        raise HorizonExceeded("t_avg exceeds what the table horizon can absorb")
    iterations = 0
    lam = lam_hi
    while lam_hi - lam_lo > tol:
        iterations += 1
        mid = 0.5 * (lam_lo + lam_hi)
        if resource(mid, 0) > t_avg:
            lam_lo = mid
        elif resource(mid, 1) < t_avg:
            lam_hi = mid
        else:
            lam = mid
            break
    else:
        lam = lam_hi
    t = np.zeros(table.M + 1)
    for r in ranks:
        t[r] = t_r_interval(table, r, lam)[0]
    u = t_avg - float(h @ t)
    t, it = _greedy(table, h, t, max(u, 0.0))
    return _outcome(table, h, t, t_avg, iterations + it)


def brute_force_reference(table: ExpectedRankTable, h, t_avg: float,
                          budget: int = 20_000_000) -> float:
    """Best objective over all policies with at most one fractional entry.

    Integer vectors are enumerated exhaustively; the leftover resource is put
    on each rank in turn.  Only vectors whose leftover is below max h_r are
    kept, since any other one reaches the same points through a larger
    integer vector.
    """
    h = check_distribution(h, table.M)
    if table.M > 5:
        raise ValueError("brute force is limited to M <= 5")
    ranks = [r for r in range(1, table.M + 1) if h[r] > 0]
    if t_avg <= 0 or not ranks:
        return 0.0
    ranks.sort(key=lambda r: -h[r])
    hr = np.array([h[r] for r in ranks])
    h_max = float(hr.max())
    E = table.E
    t_max = table.t_max
    eps = 1e-12

    vecs = np.zeros((1, 0), dtype=np.int64)
    used = np.zeros(1)
    for k, r in enumerate(ranks[:-1]):
        counts = np.minimum(t_max, np.floor((t_avg - used) / h[r] + eps)).astype(np.int64) + 1
        counts = np.maximum(counts, 0)
        total = int(counts.sum())
        if total > budget:
            raise OracleBudgetExceeded(f"enumeration needs {total} vectors")
        rep = np.repeat(np.arange(len(vecs)), counts)
        offs = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
        vecs = np.column_stack([vecs[rep], offs])
        used = used[rep] + h[r] * offs
    r_last = ranks[-1]
    start = np.maximum(0, np.ceil((t_avg - h_max - used) / h[r_last] - eps)).astype(np.int64)
    width = int(math.ceil(h_max / h[r_last])) + 2
    if len(vecs) * width > budget:
        raise OracleBudgetExceeded(f"enumeration needs {len(vecs) * width} vectors")
    cand = start[:, None] + np.arange(width)[None, :]
    tot = used[:, None] + h[r_last] * cand
    ok = (cand <= t_max) & (tot <= t_avg + eps)
    rows, cols = np.nonzero(ok)
    if rows.size == 0:
        raise HorizonExceeded("t_avg cannot be spent within the table horizon")
    full = np.column_stack([vecs[rows], cand[rows, cols]])
    u = t_avg - tot[rows, cols]
    base = sum(hr[k] * E[r, full[:, k]] for k, r in enumerate(ranks))
    best = np.where(u <= eps, base, -np.inf)
    for k, r in enumerate(ranks):
        tr = full[:, k] + np.maximum(u, 0.0) / hr[k]
        fit = (u > eps) & (tr <= t_max + eps)
        tr = np.minimum(tr, t_max)
        lo = np.minimum(np.floor(tr).astype(np.int64), t_max - 1)
        frac = tr - lo
        val = base + hr[k] * ((1 - frac) * E[r, lo] + frac * E[r, lo + 1] - E[r, full[:, k]])
        best = np.maximum(best, np.where(fit, val, -np.inf))
    result = float(best.max())
    if not np.isfinite(result):
        raise HorizonExceeded("t_avg cannot be spent within the table horizon")
    return result


def retune(table: ExpectedRankTable, h_new, t_avg_new: float, old_policy) -> OptimizationOutcome:
    """Adapt an old policy to a new rank distribution and/or budget.

    Over budget: give back the smallest occupied cells first.  Under budget:
    greedy fill.  Then tune to a preferred point.
    """
    h = check_distribution(h_new, table.M)
    t = _snap(old_policy)
    if t.shape != (table.M + 1,) or np.any(t < 0):
        raise ValueError("old policy must be non-negative with length M+1")
    if np.any(t > table.t_max):
        raise HorizonExceeded("old policy exceeds the table horizon")
    t[0] = 0.0
    used = float(h @ t)
    while used > t_avg_new + FEAS_TOL:
        held = [r for r in range(1, table.M + 1) if h[r] > 0 and t[r] > 0]
        _, n = _argmin_top(table, t, held)
        cell = h[n] * (t[n] - _top(t[n]))
        excess = used - t_avg_new
        if cell <= excess:
            t[n] = _top(t[n])
            used -= cell
        else:
            t[n] -= excess / h[n]
            used = t_avg_new
    t = _snap(t)
    used = float(h @ t)
    iterations = 0
    if used < t_avg_new - FEAS_TOL:
        t, iterations = _greedy(table, h, t, t_avg_new - used)
    out = tune(table, h, t, t_avg_new)
    out.iterations += iterations
    return out
