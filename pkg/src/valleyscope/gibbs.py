"""Markov chains on an RBM: block Gibbs sweeps, zero-temperature relaxation, simulated warming."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .rbm import RbmParams, SpinState, cond_prob_h, cond_prob_v, energy_vh, spins_to_str


def _spins(p, rng):
    return np.where(rng.random(p.shape) < p, 1, -1).astype(np.int8)


def sample_h(params, v, T, rng):
    return _spins(cond_prob_h(params, v, T), rng)


def sample_v(params, h, T, rng):
    return _spins(cond_prob_v(params, h, T), rng)


def _split_mask(params, mask, shape_v, shape_h):
    if mask is None:
        return None, None
    mask = np.asarray(mask, dtype=bool)
    if mask.shape[-1] != params.n_units:
        raise ValueError(f"mask must cover all {params.n_units} units")
    return np.broadcast_to(mask[..., : params.n_v], shape_v), np.broadcast_to(mask[..., params.n_v :], shape_h)


def gibbs_sweep(params: RbmParams, state: SpinState, T=1.0, rng=None, mask=None) -> SpinState:
    """Resample all h given v, then all v given h. Masked units keep their values."""
    if not T > 0:
        raise ValueError("Gibbs sweeps need T > 0; use relax_t0 for T = 0")
    rng = np.random.default_rng(rng)
    mv, mh = _split_mask(params, mask, state.v.shape, state.h.shape)
    h = sample_h(params, state.v, T, rng)
    if mh is not None:
        h = np.where(mh, state.h, h)
    v = sample_v(params, h, T, rng)
    if mv is not None:
        v = np.where(mv, state.v, v)
    return SpinState(v, h)


def gibbs_chain(params: RbmParams, v0, steps, T=1.0, rng=None, mask=None, h0=None) -> SpinState:
    """`steps` block sweeps starting from v0 with h drawn from P(h | v0).

    v0 may be a batch of visible vectors; the chains then run side by side.
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    rng = np.random.default_rng(rng)
    v0 = np.asarray(v0, dtype=np.int8)
    h = sample_h(params, v0, T, rng)
    if h0 is not None and mask is not None:
        h = np.where(np.asarray(mask, bool)[..., params.n_v :], h0, h)
    state = SpinState(v0, h)
    for _ in range(steps):
        state = gibbs_sweep(params, state, T, rng, mask)
    return state


def _as_joint(params, state):
    s = np.ascontiguousarray(state.joint(), dtype=np.float64)
    if s.shape[-1] != params.n_units:
        raise ValueError("state does not match model size")
    return s


def _mask_array(params, mask):
    if mask is None:
        return np.zeros(params.n_units, dtype=np.bool_)
    mask = np.asarray(mask, dtype=np.bool_)
    if mask.shape != (params.n_units,):
        raise ValueError(f"mask must have shape ({params.n_units},)")
    return mask


def relax_t0(params: RbmParams, state: SpinState, max_sweeps=1000, rng=None, mask=None) -> SpinState:
    """Zero-temperature single-flip relaxation to a local minimum.

    Accepts a single state or a batch (leading axis); each batch member gets its
    own random stream. Masked units never move.
    """
    if max_sweeps < 1:
        raise ValueError("max_sweeps must be >= 1")
    rng = np.random.default_rng(rng)
    s = _as_joint(params, state)
    batch = np.atleast_2d(s).copy()
    seeds = np.array([K.splitmix64(K.draw_seed(rng)) for _ in range(batch.shape[0])], dtype=np.uint64)
    K.rbm_relax_many(params.w, params.b, params.c, batch, _mask_array(params, mask), int(max_sweeps), seeds)
    out = batch if s.ndim == 2 else batch[0]
    return SpinState.from_joint(out.astype(np.int8), params.n_v)


def flip_deltas(params: RbmParams, state: SpinState) -> np.ndarray:
    """Energy change of every single-spin flip, computed from scratch."""
    v = state.v.astype(np.float64)
    h = state.h.astype(np.float64)
    fv = h @ params.w + params.b
    fh = v @ params.w.T + params.c
    return np.concatenate([2.0 * v * fv, 2.0 * h * fh], axis=-1)


def is_local_min(params, state, tol=1e-9, mask=None) -> bool:
    d = flip_deltas(params, state)
    if mask is not None:
        d = d[..., ~np.asarray(mask, bool)]
    return bool(np.all(d >= -tol))


@dataclass
class WarmingSchedule:
    """Temperature ladder of (T, sweeps) rungs. Warming mode requires non-decreasing T."""

    rungs: list
    warming: bool = True

    def __post_init__(self):
        self.rungs = [(float(t), int(n)) for t, n in self.rungs]
        if not self.rungs:
            raise ValueError("empty schedule")
        if any(t < 0 for t, _ in self.rungs) or any(n < 1 for _, n in self.rungs):
            raise ValueError("temperatures must be >= 0 and sweeps >= 1")
        temps = [t for t, _ in self.rungs]
        if self.warming and any(b < a for a, b in zip(temps, temps[1:])):
            raise ValueError("warming schedule must have non-decreasing temperatures")

    @classmethod
    def default(cls, sweeps=200):
        return cls([(round(0.1 * k, 10), sweeps) for k in range(1, 13)])

    @classmethod
    def fixed(cls, T, sweeps):
        return cls([(T, sweeps)], warming=False)


@dataclass
class Trajectory:
    states: np.ndarray  # (n_jumps, n_units) int8
    temperatures: np.ndarray
    jump_steps: np.ndarray  # attempted-move counter at each accepted flip
    n_v: int

    def __len__(self):
        return self.states.shape[0]

    def __iter__(self):
        for k in range(len(self)):
            yield SpinState.from_joint(self.states[k], self.n_v), float(self.temperatures[k]), int(self.jump_steps[k])

    def energies(self, params):
        s = self.states.astype(np.float64)
        return energy_vh(params, s[:, : self.n_v], s[:, self.n_v :])

    def to_csv(self, path, params):
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["jump_index", "T", "energy", "state"])
            for k, e in enumerate(self.energies(params)):
                out.writerow([k, repr(float(self.temperatures[k])), repr(float(e)), spins_to_str(self.states[k])])


def simulated_warming(params: RbmParams, start: SpinState, schedule: WarmingSchedule, rng=None) -> Trajectory:
    """Single-flip Metropolis up the temperature ladder, recording every accepted jump."""
    rng = np.random.default_rng(rng)
    s = _as_joint(params, start)
    temps = np.array([t for t, _ in schedule.rungs], dtype=np.float64)
    sweeps = np.array([n for _, n in schedule.rungs], dtype=np.int64)
    states, ts, steps = K.rbm_warming(params.w, params.b, params.c, s, temps, sweeps, K.stream(K.draw_seed(rng)))
    return Trajectory(states, ts, steps, params.n_v)


def metropolis(params: RbmParams, state: SpinState, T, sweeps, rng=None, mask=None) -> SpinState:
    """Fixed-temperature single-flip Metropolis (T = 0 allowed)."""
    rng = np.random.default_rng(rng)
    s = _as_joint(params, state).copy()
    K.rbm_metropolis(params.w, params.b, params.c, s, float(T), int(sweeps), _mask_array(params, mask),
                     K.stream(K.draw_seed(rng)))
    return SpinState.from_joint(s.astype(np.int8), params.n_v)
