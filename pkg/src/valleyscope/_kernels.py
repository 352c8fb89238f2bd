"""Compiled inner loops: single-flip dynamics on RBMs and generic sparse Ising problems.

Every kernel draws randomness from its own xorshift64* stream, seeded from a
64-bit integer, so results are a pure function of the inputs and the seed.
"""
import numpy as np
from numba import njit

_MASK64 = (1 << 64) - 1
EPS = 1e-12


def splitmix64(seed):
    z = (int(seed) + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) | 1


def stream(seed):
    """uint64[1] generator state for the kernels."""
    return np.array([splitmix64(seed)], dtype=np.uint64)


def draw_seed(rng):
    return int(rng.integers(0, 2**63 - 1))


@njit(cache=True, inline="always")
def _next(st):
    x = st[0]
    x ^= x >> np.uint64(12)
    x ^= x << np.uint64(25)
    x ^= x >> np.uint64(27)
    st[0] = x
    return x * np.uint64(2685821657736338717)


@njit(cache=True, inline="always")
def _uniform(st):
    return np.float64(_next(st) >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True)
def _permute(order, st):
    n = order.shape[0]
    for i in range(n - 1, 0, -1):
        j = int(_uniform(st) * (i + 1))
        if j > i:
            j = i
        tmp = order[i]
        order[i] = order[j]
        order[j] = tmp


@njit(cache=True)
def _accept(dE, T, st):
    if dE <= 0.0:
        return True
    if T <= 0.0:
        return False
    return _uniform(st) < np.exp(-dE / T)


# ---------------------------------------------------------------------------
# RBM joint-state kernels. Joint state s = [v (n_v), h (n_h)], float64 ±1.


@njit(cache=True)
def rbm_fields(w, b, c, s, f):
    n_h, n_v = w.shape
    for j in range(n_v):
        acc = b[j]
        for i in range(n_h):
            acc += w[i, j] * s[n_v + i]
        f[j] = acc
    for i in range(n_h):
        acc = c[i]
        for j in range(n_v):
            acc += w[i, j] * s[j]
        f[n_v + i] = acc


@njit(cache=True)
def rbm_flip(w, s, f, k):
    """Flip spin k of the joint state and update the local fields in place."""
    n_h, n_v = w.shape
    s[k] = -s[k]
    if k < n_v:
        d = 2.0 * s[k]
        for i in range(n_h):
            f[n_v + i] += d * w[i, k]
    else:
        i = k - n_v
        d = 2.0 * s[k]
        for j in range(n_v):
            f[j] += d * w[i, j]


@njit(cache=True)
def rbm_energy(w, b, c, s):
    n_h, n_v = w.shape
    e = 0.0
    for i in range(n_h):
        a = c[i]
        for j in range(n_v):
            a += w[i, j] * s[j]
        e -= a * s[n_v + i]
    for j in range(n_v):
        e -= b[j] * s[j]
    return e


@njit(cache=True)
def _greedy_finish(w, b, c, s, f, mask):
    rbm_fields(w, b, c, s, f)
    n = s.shape[0]
    moved = True
    while moved:
        moved = False
        for k in range(n):
            if mask[k]:
                continue
            if 2.0 * s[k] * f[k] < -EPS:
                rbm_flip(w, s, f, k)
                moved = True


@njit(cache=True)
def rbm_relax(w, b, c, s, mask, max_sweeps, st):
    """Zero-temperature single-flip descent in random sweep order, in place.

    Strictly downhill flips are always taken, level flips with probability 1/2.
    Stops after a sweep without a strictly downhill flip (or max_sweeps), then
    finishes with a deterministic strict descent so the result is always a
    single-flip local minimum on the unmasked coordinates.
    """
    n = s.shape[0]
    f = np.empty(n)
    rbm_fields(w, b, c, s, f)
    order = np.arange(n)
    for _ in range(max_sweeps):
        _permute(order, st)
        strict = 0
        for t in range(n):
            k = order[t]
            if mask[k]:
                continue
            dE = 2.0 * s[k] * f[k]
            if dE < -EPS:
                rbm_flip(w, s, f, k)
                strict += 1
            elif dE <= EPS:
                if _uniform(st) < 0.5:
                    rbm_flip(w, s, f, k)
        if strict == 0:
            break
    _greedy_finish(w, b, c, s, f, mask)


@njit(cache=True)
def rbm_relax_many(w, b, c, S, mask, max_sweeps, seeds):
    for r in range(S.shape[0]):
        st = np.empty(1, dtype=np.uint64)
        st[0] = seeds[r]
        rbm_relax(w, b, c, S[r], mask, max_sweeps, st)


@njit(cache=True)
def rbm_metropolis(w, b, c, s, T, sweeps, mask, st):
    """Plain single-flip Metropolis at temperature T (T=0 allowed), in place."""
    n = s.shape[0]
    f = np.empty(n)
    rbm_fields(w, b, c, s, f)
    order = np.arange(n)
    for _ in range(sweeps):
        _permute(order, st)
        for t in range(n):
            k = order[t]
            if mask[k]:
                continue
            if _accept(2.0 * s[k] * f[k], T, st):
                rbm_flip(w, s, f, k)


@njit(cache=True)
def rbm_warming(w, b, c, s0, temps, sweeps, st):
    """Metropolis over a temperature ladder; record the state after each accepted flip.

    Returns (states, temperature, step index) for every accepted flip, where the
    step index counts attempted single-spin moves from the start.
    """
    n = s0.shape[0]
    s = s0.copy()
    f = np.empty(n)
    rbm_fields(w, b, c, s, f)
    cap = 0
    for r in range(temps.shape[0]):
        cap += sweeps[r] * n
    out = np.empty((cap, n), dtype=np.int8)
    out_t = np.empty(cap)
    out_step = np.empty(cap, dtype=np.int64)
    order = np.arange(n)
    m = 0
    step = 0
    for r in range(temps.shape[0]):
        T = temps[r]
        for _ in range(sweeps[r]):
            _permute(order, st)
            for t in range(n):
                k = order[t]
                step += 1
                if _accept(2.0 * s[k] * f[k], T, st):
                    rbm_flip(w, s, f, k)
                    for q in range(n):
                        out[m, q] = np.int8(s[q])
                    out_t[m] = T
                    out_step[m] = step
                    m += 1
    return out[:m], out_t[:m], out_step[:m]


@njit(cache=True)
def rbm_escape(w, b, c, start, T, trials, max_steps, relax_sweeps, st):
    """Steps until the walker's T=0 relaxation leaves the valley of `start`.

    Membership is tested on a relaxed copy after every accepted flip. Returns
    the per-trial step counts; a count equal to max_steps means censored.
    Also returns the energy of the last in-valley state before each escape.
    """
    n = start.shape[0]
    counts = np.empty(trials, dtype=np.int64)
    last_e = np.full(trials, np.nan)
    nomask = np.zeros(n, dtype=np.bool_)
    order = np.arange(n)
    s = np.empty(n)
    f = np.empty(n)
    probe = np.empty(n)
    for tr in range(trials):
        s[:] = start
        rbm_fields(w, b, c, s, f)
        e = rbm_energy(w, b, c, s)
        step = 0
        escaped = False
        while step < max_steps and not escaped:
            _permute(order, st)
            for t in range(n):
                k = order[t]
                step += 1
                dE = 2.0 * s[k] * f[k]
                if _accept(dE, T, st):
                    prev_e = e
                    rbm_flip(w, s, f, k)
                    e += dE
                    probe[:] = s
                    rbm_relax(w, b, c, probe, nomask, relax_sweeps, st)
                    same = True
                    for q in range(n):
                        if probe[q] != start[q]:
                            same = False
                            break
                    if not same:
                        escaped = True
                        last_e[tr] = prev_e
                        break
                if step >= max_steps:
                    break
        counts[tr] = step if escaped else max_steps
    return counts, last_e


# ---------------------------------------------------------------------------
# Generic sparse Ising, E = -sum J s s - sum h s, adjacency in CSR form.


@njit(cache=True)
def ising_anneal(h, indptr, indices, weights, betas, seeds, out):
    """One annealing read per seed: sequential single-flip Metropolis over the beta ladder."""
    n = h.shape[0]
    for r in range(seeds.shape[0]):
        st = np.empty(1, dtype=np.uint64)
        st[0] = seeds[r]
        s = out[r]
        for q in range(n):
            s[q] = 1 if _uniform(st) < 0.5 else -1
        for t in range(betas.shape[0]):
            beta = betas[t]
            for q in range(n):
                fld = h[q]
                for p in range(indptr[q], indptr[q + 1]):
                    fld += weights[p] * s[indices[p]]
                dE = 2.0 * s[q] * fld
                if dE <= 0.0 or _uniform(st) < np.exp(-beta * dE):
                    s[q] = -s[q]
