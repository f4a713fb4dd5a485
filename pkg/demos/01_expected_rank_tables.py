"""How the expected next-hop rank grows with the number of recoded packets.

Prints E_r(t) for a bursty Gilbert-Elliott link over a binary field and over
a large field, then checks the table's concavity and one cell by Monte Carlo.
"""
import numpy as np

from batchrecode import GilbertElliott, build_table, monte_carlo_er, verify_concavity

channel = GilbertElliott(p_gb=0.1, p_bg=0.3)  # bad state drops everything
M, t_max = 4, 10

for q in (2, "inf"):
    table = build_table(channel, q, M, t_max)
    print(f"\nE_r(t) over q={q}  (rows r=1..{M}, columns t=0..{t_max})")
    with np.printoptions(precision=3, suppress=True, linewidth=120):
        print(table.E[1:])
    rep = verify_concavity(table)
    print("concave and non-decreasing:", rep.ok)

# Sending more packets than the rank still helps, but with diminishing returns.
table = build_table(channel, 2, M, t_max)
print("\nslopes of E_4 over GF(2):", np.round(table.delta_table[4, :8], 4))

mean, se = monte_carlo_er(channel, 2, 4, 6, trials=50_000, seed=1)
print(f"E_4(6): table {table.E[4, 6]:.4f}, simulated {mean:.4f} +/- {se:.4f}")
