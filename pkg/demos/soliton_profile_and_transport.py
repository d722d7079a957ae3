# %% [markdown]
# # The ground state and its transport
#
# The equation is u_t + u_xxx + (u^4)_x = 0.  Its travelling wave of speed one is
# Q(x) = ((5/2) sech^2(3x/2))^(1/3), which solves Q'' + Q^4 = Q.  This demo checks
# the profile on a grid, then evolves it for ten time units to see how well
# the solver transports it.
#
# Run with ``python3 demos/soliton_profile_and_transport.py``.

# %%
import numpy as np

from gkdvlab.soliton import SolitonParams, scaled_soliton, soliton_identities
from gkdvlab.solver import SolverConfig, evolve, relative_drift
from gkdvlab.spectral import Grid

# %% [markdown]
# ## Profile identities
# The ODE residual is measured with spectral derivatives.  The integral ratios
# follow from multiplying the ODE by Q and by xQ' and integrating.

# %%
rep = soliton_identities(Grid(60.0, 4096))
for key in ("ode_residual", "first_integral_residual", "derivative_ratio", "quintic_ratio", "energy_ratio"):
    print(f"{key:26s} {rep[key]: .3e}")
print(f"expected ratios            3/7 = {3 / 7:.6f}, 10/7 = {10 / 7:.6f}, E/M = {-1 / 14:.6f}")

# %% [markdown]
# ## Transport
# Q moves to the right with unit speed.  After t = 10 the computed profile is
# compared with the exact translate.  Mass and energy drifts come from the
# run's own history.

# %%
grid = Grid(100.0, 1024)
u0 = scaled_soliton(grid, SolitonParams())
tr = evolve(u0, SolverConfig(dt=1e-3, t_end=10.0, snapshot_stride=1000))
exact = scaled_soliton(grid, SolitonParams(1.0, 10.0), tail_tol=np.inf)
hist = tr.meta["history"]
print(f"relative L2 error at t=10  {(tr[len(tr) - 1] - exact).l2() / exact.l2():.3e}")
print(f"relative mass drift        {relative_drift(hist['mass']):.3e}")
print(f"relative energy drift      {relative_drift(hist['energy']):.3e}")

# %% [markdown]
# ## Order of accuracy
# Halving the step should cut the error by about 2^4 = 16.

# %%
errs = []
for dt in (2e-3, 1e-3, 5e-4):
    t = evolve(u0, SolverConfig(dt=dt, t_end=1.0, snapshot_stride=int(round(1.0 / dt))))
    ref = scaled_soliton(grid, SolitonParams(1.0, 1.0), tail_tol=np.inf)
    errs.append((t[len(t) - 1] - ref).l2() / ref.l2())
for dt, e in zip((2e-3, 1e-3, 5e-4), errs):
    print(f"dt = {dt:.0e}   error {e:.3e}")
print("ratios", np.round(np.array(errs[:-1]) / np.array(errs[1:]), 2))
