"""Subset distributions, their down-up walks and the spin-system dictionary.

Run with ``python3 demos/02_down_up_walks.py``.
"""
# %%
import numpy as np

from glauberlab.exact import gibbs_table, glauber_operator, spectral_gap
from glauberlab.hamiltonian import random_hamiltonian
from glauberlab.subsets import (continuity_verify, corner_permutation, down_up_walk, homogenize,
                                oppenheim_verify, random_ergodic_subset_distribution,
                                si_local_identity_check)

rng = np.random.default_rng(1)

# %% [markdown]
# A random distribution on 3-subsets of a 6-set.  The local identity ties the
# second eigenvalue of the one-level walk to the correlation matrix.

# %%
mu = random_ergodic_subset_distribution(6, 3, rng, links=True)
print(si_local_identity_check(mu))

# %% [markdown]
# Both trickle-down style verifiers report the quantities they compare.

# %%
for name, check in (("oppenheim", oppenheim_verify), ("continuity", continuity_verify)):
    rep = check(mu)
    print(name, "pass" if rep["pass"] else "FAIL")

# %% [markdown]
# Writing each spin configuration as the set {(i, sigma_i)} turns a Gibbs
# measure on n spins into a distribution on n-subsets of a 2n-set.  Its
# n -> n-1 down-up walk is exactly the heat-bath chain.

# %%
table = gibbs_table(random_hamiltonian(4, 2, rng))
op = glauber_operator(table, sparse=False)
hom = homogenize(table)
walk = down_up_walk(hom)
perm = corner_permutation(hom, 4)
print("max |walk - glauber| =", np.max(np.abs(walk.dense()[np.ix_(perm, perm)] - op.dense())))
print("gaps:", spectral_gap(op), spectral_gap(walk))
