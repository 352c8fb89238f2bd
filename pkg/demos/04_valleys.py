"""Valleys of a small double-well RBM: exact barrier, escape rates and the Arrhenius fit."""
# %%
import numpy as np

from valleyscope.gibbs import WarmingSchedule, simulated_warming
from valleyscope.rbm import RbmParams
from valleyscope.valleys import exact_barrier, landscape, measure_activation, width_parameter

# rank-one couplings make two mirror valleys; a little disorder breaks the tie
rng = np.random.default_rng(0)
J = 0.06
xi, eta = rng.choice([-1, 1], 6), rng.choice([-1, 1], 6)
params = RbmParams(J * np.outer(eta, xi) + 0.01 * rng.standard_normal((6, 6)),
                   0.01 * rng.standard_normal(6), 0.01 * rng.standard_normal(6))

# %%
land = landscape(params)
print(len(land.minima), "local minima among", land.energies.size, "states")
gs = land.minima[np.argmin(land.energies[land.minima])]
valley = land.state(gs)
barrier = exact_barrier(params, valley, land)
print("valley", valley.key(), "energy", land.energies[gs], "exact barrier", barrier)

# %% [markdown]
# Escape rates are counted in attempted Metropolis moves; ln(rate) against 1/T
# is close to a straight line with slope -E_act at low temperature.

# %%
temps = [J * 36 / k for k in (16, 14, 12, 10)]
fit, results = measure_activation(params, valley, temps, trials=50, max_jumps=5_000_000, rng=1)
for T, r in results:
    print(f"T={T:.3f}  mean steps {r.mean_steps:10.0f}  censored {r.censored}")
print(f"E_act {fit.e_act:.3f} vs barrier {barrier:.3f}  (R^2 {fit.r_squared:.3f})")

# %%
trace = simulated_warming(params, valley, WarmingSchedule.default(), rng=2)
print("width parameter", width_parameter(params, valley, fit.e_act, [trace], rng=3))
