"""
How the optimal trace ratio changes with the target dimension
=============================================================

For a random pencil (W diagonal, B of rank 10) the optimal ratio is
computed for k = 1..8. It never increases with k. The numerator
tr(V^T B V) usually grows but is not forced to; the scan counts the
pencils where it drops.
"""
import numpy as np

from robust_tr import conjecture_scan, rho_profile
from robust_tr.cli import random_pencil

rng = np.random.default_rng(7)
s = random_pencil(rng, p=20, rank=10)

print(" k      rho     tr(VtBV)   tr(VtWV)      gap")
for e in rho_profile(s, 8):
    print(f"{e.k:2d} {e.rho:9.4f} {e.tr_b:10.4f} {e.tr_w:10.4f} {e.gap:9.3g}")

drops = 0
for _ in range(200):
    rep = conjecture_scan(random_pencil(rng, p=20, rank=10), 8)
    drops += not rep.ok
print(f"\npencils with a drop in tr(V^T B V): {drops} of 200")
