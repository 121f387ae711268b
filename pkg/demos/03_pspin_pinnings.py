"""Mixed p-spin disorder, pinned Hessians and an adversarial pinning.

Run with ``python3 demos/03_pspin_pinnings.py``.
"""
# %%
import numpy as np

from glauberlab.pspin import (PSpinSpec, adversarial_entry, energy_samples,
                              energy_variance_formula, norm_sum_statistic, temperature_norms)

# %% [markdown]
# The disorder is a pure function of (seed, p, index tuple), so energies can be
# drawn for many independent instances without materializing any of them.

# %%
sigma = np.ones(16)
e = energy_samples(16, {2: 0.5, 3: 0.5}, sigma, np.arange(5000))
print(f"Var H: sampled {e.var():.4f}, closed form {energy_variance_formula(16, {2: 0.5, 3: 0.5}):.4f}")
print("temperature norms:", temperature_norms({2: 0.5, 3: 0.5}))

# %% [markdown]
# Pinning every other site to the sign of its 3-spin coupling with sites 0 and 1
# leaves an order-one entry in the pinned Hessian, however large N is.

# %%
for N in (8, 16, 32):
    r = adversarial_entry(N, 1.0, seed=3)
    print(f"N={N:2d}: entry {r['entry']:.3f}  predicted {r['mean']:.3f} +- {r['sd']:.3f}")

# %% [markdown]
# The norm-sum statistic along random site orderings, as the 2-spin
# temperature rises.

# %%
for b in (0.05, 0.1, 0.2, 0.4):
    stat = norm_sum_statistic(PSpinSpec(10, {2: b}, seed=5), permutations=5, seed=1)
    print(f"beta2={b:.2f}: mean {stat['mean']:.3f}  max {stat['max']:.3f}")
