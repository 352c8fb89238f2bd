"""Embedding an 8x8 RBM on a 2x2-cell Chimera lattice and decoding reads back."""
# %%
import numpy as np

from valleyscope.chimera import build_chimera, clamp_units, decode, embed_rbm, embedded_energy
from valleyscope.rbm import RbmParams, SpinState, energy

rng = np.random.default_rng(1)
params = RbmParams(rng.uniform(-0.5, 0.5, (8, 8)), rng.uniform(-0.3, 0.3, 8), rng.uniform(-0.3, 0.3, 8))

# %% [markdown]
# Qubit labels follow q = ((row * N + col) * 2 + side) * c + offset; side 0 qubits
# couple vertically to the next cell, side 1 qubits horizontally.

# %%
g = build_chimera(2, 2)
print(g.num_qubits, "qubits,", len(g.couplers()), "couplers, expected", g.expected_coupler_count())
print("qubit 13 sits at (row, col, side, offset) =", g.coords(13))

# %%
s = 2.0
problem, emb = embed_rbm(params, g, s)
print("visible unit 0 chain:", emb.chains[0], " hidden unit 0 chain:", emb.chains[8])
print("chain couplers:", emb.chain_coupler_count(), " energy offset C =", emb.energy_offset())

# for chain-consistent states the embedded energy is the RBM energy over s, shifted by C
state = SpinState(rng.choice([-1, 1], 8), rng.choice([-1, 1], 8))
q = emb.encode(state)
print(embedded_energy(problem, q) - emb.energy_offset(), float(energy(params, state)) / s)

# %% [markdown]
# A broken chain is resolved by majority vote; an exact tie gets a seeded coin.

# %%
pos = problem.index
q_broken = q.copy()
q_broken[pos[emb.chains[0][0]]] *= -1
decoded, report = decode(emb, q_broken, rng=0)
print("agreement of visible chains:", report.agreement[:8])
print("tie flags:", report.ties[:8])

# %%
clamped = clamp_units(problem, emb, {0: 1, 1: -1})
print("clamped biases on chain 0:", [clamped.h[pos[qb]] for qb in emb.chains[0]])
