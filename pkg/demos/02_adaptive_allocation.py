"""Choosing how many packets each batch gets.

Batches arrive with ranks 0..4 in the proportions h.  On average we may send
four packets per batch.  Giving everyone four is the baseline; the optimizer
instead spends packets where the expected rank grows fastest.
"""
from batchrecode import Bernoulli, build_table, certify, objective, solve_dual, solve_greedy

h = [0.0625, 0.25, 0.375, 0.25, 0.0625]
table = build_table(Bernoulli(0.2), "inf", M=4, t_max=32)

best = solve_greedy(table, h, t_avg=4.0)
print("recoding numbers t_r:", best.policy.tolist())
print(f"expected next-hop rank: adaptive {best.objective:.4f}, "
      f"baseline {objective(table, h, [4] * 5):.4f}")

# t_1 = 2.25 means: a rank-1 batch gets 2 packets, or 3 with probability 1/4.
print("water level (multiplier interval):", best.lambda_interval)

dual = solve_dual(table, h, 4.0)
print("dual solver agrees:", dual.policy.tolist() == best.policy.tolist())
print("certificate:", certify(table, h, best.policy, 4.0).to_dict())
