"""Pushing real coded packets through a lossy hop.

The simulator multiplies coefficient vectors over GF(256), drops packets
according to the channel, and measures ranks at the next node.  The
analytic prediction should sit within a few standard errors.
"""
import numpy as np

from batchrecode import Bernoulli, build_table, propagate_rank_dist, solve_greedy
from batchrecode.sim import Adaptive, Baseline, BatchStack, HopSpec, simulate_hop

h = [0.0625, 0.25, 0.375, 0.25, 0.0625]
q, channel, n = 256, Bernoulli(0.2), 50_000
policy = solve_greedy(build_table(channel, q, 4, 32), h, 4.0).policy
src = BatchStack.from_distribution(h, n, 4, q)

for label, mode, t in (("adaptive", Adaptive(tuple(policy)), policy), ("baseline", Baseline(4), [4] * 5)):
    _, stats = simulate_hop(src, HopSpec(channel, mode), seed=3)
    predicted = propagate_rank_dist(channel, q, 4, h, t) @ np.arange(5)
    print(f"{label:8s} simulated {stats.mean_rank:.4f} +/- {stats.std_err:.4f}, "
          f"predicted {predicted:.4f}, packets/batch {stats.packets_per_batch:.3f}")
