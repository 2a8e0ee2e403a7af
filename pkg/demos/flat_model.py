"""
Counting conformal Killing forms on flat space
==============================================

On the flat model every conformal Killing k-form comes from a constant
(k+1)-form-tractor, so there are binom(n+2, k+1) independent ones.  Here we
generate them, confirm they solve the equation and that they are independent.
"""

from math import comb

import numpy as np

from ckforms import prolongation as PR
from ckforms.forms import alt
from ckforms.metrics import conf_flat, flat

n = 4
pts = np.random.default_rng(1).uniform(-0.5, 0.5, (8, n))

for k in range(1, n):
    basis = PR.flat_solution_basis(n, k)
    worst = max(PR.cke_residual(s, flat(n), pts[:3]).max_norm for s in basis)
    # stack values at eight points: full rank means the family is independent
    vals = np.array([np.concatenate([s.jet(p, 0).value.ravel() for p in pts]) for s in basis])
    rank = np.linalg.matrix_rank(vals, tol=1e-9)
    print(f"k={k}: {len(basis)} solutions (expected {comb(n + 2, k + 1)}), rank {rank}, worst residual {worst:.1e}")

# a conformal rescaling of flat space carries the same solutions, reweighted
ups = "0.3*x1 - 0.2*x2*x3"
basis = PR.flat_solution_basis(n, 2, ups)
print("conformally flat, k=2:", max(PR.cke_residual(s, conf_flat(n, ups), pts[:3]).max_norm for s in basis))

# any constant tractor generates a solution
F0 = alt(np.random.default_rng(2).normal(size=(n + 2,) * 3))
s = PR.flat_solution_generator(F0)
print("generated 2-form residual", PR.cke_residual(s, flat(n), pts[:3]).max_norm)
