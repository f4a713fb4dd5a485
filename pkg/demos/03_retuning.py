"""Rank distributions are measured, so they are never quite right.

A preferred solution is built from the globally steepest slopes, so when the
measured h changes a little, retuning moves only a small part of it.
"""
import numpy as np

from batchrecode import Bernoulli, build_table, retune, solve_greedy

table = build_table(Bernoulli(0.2), "inf", M=4, t_max=32)
h_old = [0.0625, 0.25, 0.375, 0.25, 0.0625]
h_new = [0.0625, 0.2, 0.425, 0.3125, 0.0]

old = solve_greedy(table, h_old, 4.0)
new = retune(table, h_new, 4.0, old.policy)
print("before:", old.policy.tolist())
print("after: ", np.round(new.policy, 6).tolist(), "preferred:", new.preferred)
print("rank 4 vanished from h, yet t_4 keeps its value: the policy still")
print("covers rank-4 batches should they reappear.")

for budget in (3.0, 5.0):
    moved = retune(table, h_old, budget, old.policy)
    print(f"budget {budget}: {np.round(moved.policy, 4).tolist()}")
