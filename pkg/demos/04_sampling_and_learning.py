"""Sample an Ising model with Glauber dynamics, then learn it back.

Run with ``python3 demos/04_sampling_and_learning.py``.
"""
# %%
import numpy as np

from glauberlab.learn import cycle_params, exact_kl, fit_pl
from glauberlab.sampler import default_burn_in, run_chains, tv_to_exact

truth = cycle_params(6, 0.3, 0.1)
table = truth.table()
h = truth.hamiltonian()

# %% [markdown]
# Chains are reproducible from (seed, chain, step) alone.

# %%
res = run_chains(h, 200, default_burn_in(6) + 500, seed=7)
x = res.flat()
print(f"{x.shape[0]} samples, TV to the exact law {tv_to_exact(x, table):.4f}")

# %% [markdown]
# Pseudolikelihood over symmetric couplings with row-l1 and field bounds.

# %%
fit = fit_pl(x, R=2.0)
np.set_printoptions(precision=3, suppress=True)
print("estimated J:\n", fit.params.J)
print("estimated h:", fit.params.h)
print(f"KL(truth || fit) = {exact_kl(table, fit.params):.2e}, iterations {fit.iterations}")
