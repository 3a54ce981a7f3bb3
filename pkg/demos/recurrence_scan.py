"""
Growth of G(0) as the field is switched off
===========================================

In one and two dimensions the walk is recurrent, and the expected time
spent at the origin diverges as h -> 0. At fixed h the torus side L is
doubled until G(0) stops moving, and the stabilised values are compared
across fields.
"""

from vrjplab.merminwagner import h_scan

for d, Ls in ((1, [16, 32, 64]), (2, [8, 16, 32])):
    res = h_scan(d, Ls, [1.0, 0.3, 0.1], n_traj=20_000, seed=7)
    print(f"d = {d}")
    for h, (g0, se) in res.stabilized.items():
        print(f"  h = {h:<4}  G(0) = {g0:7.3f} +- {se:.3f}  (plateau at L = {res.plateau[h]})")
    for r in res.records:
        print("  ", r.name, r.verdict)
