"""One test per acceptance criterion; conftest prints a PASS/FAIL line for each."""
import itertools
import json
import time

import numpy as np
import pytest

from batchrecode.cli import main
from batchrecode.expected_rank import (
    build_table, default_horizon, monte_carlo_er, propagate_rank_dist, verify_concavity,
)
from batchrecode.loss import Bernoulli, DeterministicPrefix, GilbertElliott, joint_event_prob
from batchrecode.optimizer import brute_force_reference, certify, retune, solve_dual, solve_greedy, tune
from batchrecode.sim import Adaptive, Baseline, BatchStack, HopSpec, simulate_hop

from conftest import GOLDEN_H, GOLDEN_T

H2 = (0.0625, 0.2, 0.425, 0.3125, 0.0)
FIELDS = [2, 4, 16, 256, "inf"]
CHANNELS = [Bernoulli(0.0), Bernoulli(0.1), Bernoulli(0.5),
            GilbertElliott(0.1, 0.3, 0.0, 1.0), GilbertElliott(0.05, 0.2, 0.01, 0.8)]


def report(name, ok, detail=""):
    print(f"[{'PASS' if ok else 'FAIL'}] {name} {detail}".rstrip())


def grid_tables():
    for q, ch in itertools.product(FIELDS, CHANNELS):
        yield q, ch, build_table(ch, q, 8, 32)


def random_instances(n=50, seed=2024):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        M = int(rng.integers(1, 5))
        h = rng.dirichlet(np.ones(M + 1))
        h[h < 0.03] = 0.0
        if h[1:].sum() == 0:
            h[M] = 1.0
        h /= h.sum()
        t_avg = float(rng.uniform(0, 12))
        q = ["inf", 2][rng.integers(2)]
        ch = [Bernoulli(float(rng.uniform(0.05, 0.5))), GilbertElliott(0.1, 0.3, 0.0, 1.0)][rng.integers(2)]
        out.append((build_table(ch, q, M, default_horizon(M, h, t_avg)), h, t_avg, q))
    return out


def test_criterion_01_golden_example():
    start = time.perf_counter()
    table = build_table(Bernoulli(0.2), "inf", 4, default_horizon(4, GOLDEN_H, 4.0))
    rng = np.random.default_rng(0)
    raw = rng.uniform(0, 1, 5)
    raw[0] = 0.0
    feasible = raw * 4.0 / np.dot(GOLDEN_H, raw)
    outs = [solve_greedy(table, GOLDEN_H, 4.0), solve_dual(table, GOLDEN_H, 4.0),
            tune(table, GOLDEN_H, feasible)]
    elapsed = time.perf_counter() - start
    ok = all(np.max(np.abs(o.policy - GOLDEN_T)) <= 1e-9 and o.preferred
             and certify(table, GOLDEN_H, o.policy, 4.0).preferred for o in outs)
    report("golden example", ok and elapsed < 1, f"({elapsed:.3f}s)")
    assert ok, [o.policy for o in outs]
    assert elapsed < 1


def test_criterion_02_error_toleration():
    start = time.perf_counter()
    table = build_table(Bernoulli(0.2), "inf", 4, default_horizon(4, GOLDEN_H, 4.0))
    out = retune(table, H2, 4.0, GOLDEN_T)
    best = brute_force_reference(table, H2, 4.0)
    elapsed = time.perf_counter() - start
    ok = (np.allclose(out.policy[[0, 2, 3, 4]], [0, 4, 6, 7], atol=1e-9) and out.preferred
          and abs(out.objective - best) <= 1e-9)
    report("error toleration", ok and elapsed < 1, f"t={out.policy.tolist()} ({elapsed:.3f}s)")
    assert ok and elapsed < 1


def test_criterion_03_concavity_suite():
    bad_concave, bad_strict, checked = [], [], 0
    for q, ch, table in grid_tables():
        rep = verify_concavity(table, tol=1e-12)
        if not rep.ok:
            bad_concave.append((q, ch, rep.violations[:3], rep.monotonicity_violations[:3]))
        if q == "inf":
            continue
        D = table.delta_table
        for c in range(1, table.t_max):
            if joint_event_prob(ch, [(1, 1), (c + 1, 1)]) == 0:
                continue
            for r in range(1, table.M + 1):
                checked += 1
                if not D[r, c - 1] - D[r, c] > 1e-9:
                    bad_strict.append((q, repr(ch), r, c))
    ok = not bad_concave and not bad_strict
    report("concavity suite", ok,
           f"concavity/monotonicity failures={len(bad_concave)}, "
           f"strict-gap failures={len(bad_strict)}/{checked}")
    assert not bad_concave, bad_concave
    assert not bad_strict, f"{len(bad_strict)} cells with gap <= 1e-9, e.g. {bad_strict[:5]}"


def test_criterion_04_nonstationary_counterexample():
    p = 0.2
    good = build_table(DeterministicPrefix((1,), Bernoulli(p)), "inf", 8, 32)
    bad = build_table(DeterministicPrefix((0,), Bernoulli(p)), "inf", 8, 32)
    slopes_ok = all(abs(good.E[r, 2] - good.E[r, 1] - (1 - p)) <= 1e-12 for r in range(2, 9))
    # a rank-1 batch is already full after the guaranteed first packet
    rank1_ok = abs(good.E[1, 2] - good.E[1, 1]) <= 1e-12
    good_rep, bad_rep = verify_concavity(good), verify_concavity(bad)
    bad_at_1 = all((r, 1) in bad_rep.violations for r in range(1, 9))
    ok = slopes_ok and rank1_ok and good_rep.ok and bad_at_1
    report("non-stationary counterexample", ok)
    assert ok


def test_criterion_05_cross_rank_slopes():
    rank_order, linear = [], []
    for q, ch, table in grid_tables():
        D = table.delta_table
        viol = np.argwhere(D[1:] < D[:-1] - 1e-12)
        rank_order.extend((q, repr(ch), int(r), int(t)) for r, t in viol)
        if q == "inf":
            ref = D[1, 0]
            for r in range(1, table.M + 1):
                dev = np.abs(D[r, :r] - ref).max()
                if dev > 1e-12:
                    linear.append((repr(ch), r, dev))
    ok = not rank_order and not linear
    report("cross-rank slopes", ok, f"rank_order={len(rank_order)} linear/ratio={len(linear)}")
    assert ok, (rank_order[:5], linear[:5])


@pytest.fixture(scope="module")
def instances():
    return random_instances()


def test_criterion_06_oracle_equivalence(instances):
    start = time.perf_counter()
    failures = []
    for k, (table, h, t_avg, q) in enumerate(instances):
        out = solve_greedy(table, h, t_avg)
        ref = brute_force_reference(table, h, t_avg)
        if abs(out.objective - ref) > 1e-9 or not out.ads or not out.preferred:
            failures.append((k, out.objective, ref, out.ads, out.preferred))
    elapsed = time.perf_counter() - start
    report("oracle equivalence", not failures and elapsed < 30, f"({elapsed:.2f}s)")
    assert not failures, failures
    assert elapsed < 30


def test_criterion_07_monte_carlo():
    cells, hits = 0, 0
    for q, ch in itertools.product([2, 16], [Bernoulli(0.2), GilbertElliott(0.1, 0.3, 0.0, 1.0)]):
        table = build_table(ch, q, 4, 8)
        for r, t in itertools.product(range(1, 5), range(1, 9)):
            mean, se = monte_carlo_er(ch, q, r, t, 100_000, seed=(q, r, t, cells))
            cells += 1
            hits += abs(mean - table.E[r, t]) <= 3 * se
    ok = hits >= 0.95 * cells
    report("monte carlo vs analytic", ok, f"{hits}/{cells} cells within 3 SE")
    assert ok


def test_criterion_08_simulator_dominance():
    n = 100_000
    model = Bernoulli(0.2)
    src = BatchStack.from_distribution(GOLDEN_H, n, 4, "inf")
    ad = simulate_hop(src, HopSpec(model, Adaptive(GOLDEN_T)), seed=8, hop_index=0)[1]
    base = simulate_hop(src, HopSpec(model, Baseline(4)), seed=8, hop_index=1)[1]
    pooled = float(np.hypot(ad.std_err, base.std_err))
    ranks = np.arange(5)
    pred_ad = propagate_rank_dist(model, "inf", 4, GOLDEN_H, GOLDEN_T) @ ranks
    pred_base = propagate_rank_dist(model, "inf", 4, GOLDEN_H, [4] * 5) @ ranks
    ok = (ad.mean_rank - base.mean_rank > 2 * pooled
          and abs(ad.mean_rank - pred_ad) <= 3 * ad.std_err
          and abs(base.mean_rank - pred_base) <= 3 * base.std_err)
    report("simulator dominance", ok,
           f"adaptive={ad.mean_rank:.4f} baseline={base.mean_rank:.4f} pooled_se={pooled:.4f}")
    assert ok


def test_criterion_09_monotonicity(instances):
    failures, checked_mono, checked_rhr = [], 0, 0
    for k, (table, h, t_avg, q) in enumerate(instances):
        t = solve_greedy(table, h, t_avg).policy
        S = [r for r in range(1, table.M + 1) if h[r] > 0]
        reach = min(table.t_max, int(np.ceil(t.max())) + 1)
        D = table.delta_table[:, :reach]
        if np.all(D[1:] > D[:-1] + 1e-9):
            checked_mono += 1
            for m, n in itertools.combinations(S, 2):
                if t[m] > 0 and t[n] < t[m] - 1e-9:
                    failures.append(("monotone", k, m, n, t.tolist()))
        if q == "inf" and t_avg >= float(np.dot(h, np.arange(len(h)))):
            checked_rhr += 1
            failures.extend(("t_r >= r", k, r, t.tolist()) for r in S if t[r] < r - 1e-9)
    report("monotonicity", not failures,
           f"(monotone checks={checked_mono}, t_r>=r checks={checked_rhr})")
    assert not failures, failures


def test_criterion_10_determinism(tmp_path):
    cfg = {"channel": {"type": "ge", "p_gb": 0.1, "p_bg": 0.3}, "q": 16, "M": 4, "t_avg": 4,
           "h": list(GOLDEN_H), "seed": 99, "policy": list(GOLDEN_T),
           "experiment": {"num_batches": 3000, "hops": [{"mode": "adaptive"}, {"mode": "baseline", "t": 4}]},
           "sweep": {"param": "p_gb", "values": [0.05, 0.1], "num_batches": 1000}}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    mismatched = []
    for cmd in ("ert", "solve", "tune", "dual", "certify", "propagate", "simulate", "sweep"):
        outputs = []
        for run in range(2):
            out = tmp_path / f"{cmd}{run}.csv"
            assert main([cmd, "--config", str(path), "--out", str(out), "--seed", "5"]) == 0
            text = out.read_bytes()
            summary = out.with_name(out.stem + "_summary.csv")
            outputs.append(text + (summary.read_bytes() if summary.exists() else b""))
        if outputs[0] != outputs[1]:
            mismatched.append(cmd)
    report("determinism", not mismatched, f"mismatched={mismatched}")
    assert not mismatched
