"""Simulated annealing on an embedded RBM, locally and through the mock HTTP service."""
# %%
import itertools

import numpy as np

from valleyscope.annealer import AnnealSchedule, dedupe, mock_service, remote_solve, solve_sa
from valleyscope.chimera import build_chimera, decode_many, embed_rbm
from valleyscope.rbm import RbmParams, energy_vh

rng = np.random.default_rng(4)
params = RbmParams(rng.uniform(-0.5, 0.5, (8, 8)), rng.uniform(-0.5, 0.5, 8), rng.uniform(-0.5, 0.5, 8))
problem, emb = embed_rbm(params, build_chimera(2, 2))

# %% [markdown]
# Brute-force ground state over all 2^16 logical states, for reference.

# %%
vs = np.array(list(itertools.product((-1, 1), repeat=8)), dtype=float)
e = energy_vh(params, vs[None, :, :], vs[:, None, :])  # rows: hidden, columns: visible
ih, iv = np.unravel_index(np.argmin(e), e.shape)
print("ground-state energy", e.min())

# %%
sample = solve_sa(problem, 200, AnnealSchedule(0.1, 10.0, 1000), seed=0)
logical = decode_many(emb, sample.spins(), rng=0)
e_reads = energy_vh(params, logical[:, :8].astype(float), logical[:, 8:].astype(float))
print("lowest decoded read", e_reads.min(), " fraction at ground state", np.mean(np.isclose(e_reads, e.min())))
print("distinct physical reads:", len(dedupe(sample)))

# %% [markdown]
# The mock service speaks the same JSON protocol as a remote annealer and
# returns exactly the local result for the same seed.

# %%
with mock_service() as svc:
    remote = remote_solve(svc.url, problem, 50, seed=7)
local = solve_sa(problem, 50, seed=7)
print("remote == local:", np.array_equal(remote.spins(), local.spins()))
