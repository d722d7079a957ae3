# %% [markdown]
# # Norms of free waves
#
# Solutions of the Airy equation u_t + u_xxx = 0 are the reference objects of
# the dispersive estimates.  This demo draws a few band-limited free waves and
# evaluates the mixed space-time norms, the Strichartz-type ratios, the
# frequency-localized X^{s,b} profile and the bilinear smoothing functional.
#
# Run with ``python3 demos/free_wave_norms.py``.

# %%
import numpy as np

from gkdvlab.norms import (BilinearEnsembleSpec, EnsembleSpec, band_limited_noise, bilinear_sampler,
                           free_trace, ratio_table, sobolev_norm, spacetime_norm,
                           strichartz_constant_sampler, xsb_norm, xsb_shells)
from gkdvlab.spectral import Grid

# %% [markdown]
# ## One free wave
# The energy norm L^inf_t L^2_x equals the L^2 norm of the data because the
# Airy flow is unitary.  The Strichartz pairs are smaller on this window.

# %%
grid = Grid(100.0, 256)
rng = np.random.default_rng(1)
u0 = band_limited_noise(grid, (0.5, 4.0), rng)
tr = free_trace(u0, np.linspace(0.0, 1.0, 65))
print(f"{'||u0||_L2':22s}{u0.l2():.6f}")
for q, r in ((np.inf, 2.0), (6.0, 6.0), (5.0, 10.0), (4.0, np.inf)):
    label = f"L^{q:g}_t L^{r:g}_x"
    print(f"{label:22s}{spacetime_norm(tr, q, r):.6f}")
print(f"{'Hdot^(-1/6)':22s}{sobolev_norm(u0, -1.0 / 6.0):.6f}")

# %% [markdown]
# ## Modulation shells
# The time-Fourier transform of the profile e^{t d_xxx} u concentrates near the
# curve tau = xi^3.  Mass per dyadic shell of |tau - xi^3| therefore falls off
# quickly, down to the leakage floor of the tapered transform.

# %%
prof = xsb_shells(tr)
for k, m in zip(prof.ks, prof.mass):
    print(f"shell {k:3d}   {m:.3e}")
for b in (0.0, 0.25, 0.5):
    print(f"X^(0,{b}) norm   {xsb_norm(tr, b, profile=prof):.6f}")

# %% [markdown]
# ## Ensembles
# The L^inf_t L^2_x ratio is one for every sample.  The bilinear functional,
# normalized by the product of the data norms, stays within a narrow band.

# %%
table = ratio_table(strichartz_constant_sampler(EnsembleSpec(n_samples=20, seed=0)))
for name, vals in sorted(table.items()):
    print(f"{name:14s} min {vals.min():.4f}  median {np.median(vals):.4f}  max {vals.max():.4f}")
bil = np.array([s.ratio for s in bilinear_sampler(BilinearEnsembleSpec(n_pairs=30))])
print(f"bilinear ratio  min/median {bil.min() / np.median(bil):.3f}  max/median {bil.max() / np.median(bil):.3f}")
