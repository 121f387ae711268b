"""Spectral gaps and the correlation matrix on small spin systems.

Run with ``python3 demos/01_gaps_and_correlations.py``.
"""
# %%
import numpy as np

from glauberlab.exact import correlation_matrix_spin, gibbs_table, glauber_operator, spectral_gap
from glauberlab.hamiltonian import SpinHamiltonian, random_hamiltonian, smoothness_beta

# %% [markdown]
# With no interactions every site is resampled from its own law, so the
# heat-bath chain relaxes at rate exactly 1/n and the correlation matrix is the
# identity.

# %%
for n in (2, 4, 8):
    op = glauber_operator(gibbs_table(SpinHamiltonian(n, {})))
    print(f"n={n}: gap={spectral_gap(op):.6f}  1/n={1 / n:.6f}")

# %% [markdown]
# Turn on a random cubic interaction and watch the gap shrink while the top
# eigenvalue of the correlation matrix grows.  The product n * gap * eta never
# exceeds one.

# %%
rng = np.random.default_rng(0)
base = random_hamiltonian(6, 3, rng)
print(f"{'scale':>6} {'beta':>7} {'gap':>9} {'eta':>7} {'n*gap*eta':>10}")
for scale in (0.05, 0.2, 0.5, 1.0):
    h = SpinHamiltonian(6, {s: scale * c for s, c in base.terms.items()})
    table = gibbs_table(h)
    gap = spectral_gap(glauber_operator(table))
    eta = correlation_matrix_spin(table).lambda_max
    beta = smoothness_beta(h).beta
    print(f"{scale:6.2f} {beta:7.3f} {gap:9.5f} {eta:7.3f} {6 * gap * eta:10.5f}")
