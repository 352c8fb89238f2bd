"""Local-valley analysis of RBM energy landscapes.

A valley is identified by the local minimum reached when a state is relaxed at
T = 0 with single-spin flips. Sampled states from different sources are
attributed to valleys, collected in registries and compared; valleys are then
characterized by escape rates under fixed-temperature Metropolis dynamics, an
Arrhenius activation energy and a square-well width proxy.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import _kernels as K
from .gibbs import gibbs_chain, is_local_min, relax_t0
from .rbm import RbmParams, SpinState, all_spins, energy, energy_vh, hidden_activation, spins_to_str, str_to_spins

EXACT_BARRIER_MAX_UNITS = 20


class IncompatibleRegistries(ValueError):
    pass


class InsufficientData(ValueError):
    pass


@dataclass
class ArrheniusFit:
    e_act: float
    ln_prefactor: float
    points: list
    r_squared: float
    low_t_subset: list

    def to_dict(self):
        return {
            "e_act": self.e_act,
            "ln_prefactor": self.ln_prefactor,
            "points": [list(p) for p in self.points],
            "r_squared": self.r_squared,
            "low_t_subset": list(self.low_t_subset),
        }


@dataclass
class ValleyRecord:
    id: SpinState
    min_energy: float
    hits: dict = field(default_factory=dict)
    e_act: float | None = None
    width: float | None = None
    fit: ArrheniusFit | None = None

    @property
    def key(self) -> str:
        return self.id.key()

    def to_dict(self):
        return {
            "state": self.key,
            "energy": self.min_energy,
            "hits": dict(sorted(self.hits.items())),
            "e_act": self.e_act,
            "width": self.width,
        }


@dataclass
class ValleyRegistry:
    fingerprint: str
    n_v: int
    records: dict = field(default_factory=dict)  # key -> ValleyRecord
    sources: dict = field(default_factory=dict)  # tag -> number of attributed states

    def __len__(self):
        return len(self.records)

    def __contains__(self, key):
        return key in self.records

    def keys(self):
        return set(self.records)

    def add(self, params, state: SpinState, tag, count=1):
        key = state.key()
        rec = self.records.get(key)
        if rec is None:
            rec = ValleyRecord(state, float(energy(params, state)))
            self.records[key] = rec
        rec.hits[tag] = rec.hits.get(tag, 0) + count
        self.sources[tag] = self.sources.get(tag, 0) + count
        return rec

    def sorted_records(self):
        return sorted(self.records.values(), key=lambda r: (r.min_energy, r.key))

    def normalized_count(self, n_patterns) -> float:
        """Number of valleys divided by the number of training patterns."""
        return len(self) / n_patterns

    def to_jsonl(self, path):
        with open(path, "w") as fh:
            for rec in self.sorted_records():
                fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")

    @classmethod
    def from_jsonl(cls, path, params: RbmParams):
        reg = cls(params.fingerprint(), params.n_v)
        with open(path) as fh:
            for line in fh:
                doc = json.loads(line)
                s = SpinState.from_joint(str_to_spins(doc["state"]), params.n_v)
                rec = ValleyRecord(s, float(doc["energy"]), dict(doc["hits"]), doc.get("e_act"), doc.get("width"))
                reg.records[rec.key] = rec
                for tag, n in rec.hits.items():
                    reg.sources[tag] = reg.sources.get(tag, 0) + n
        return reg


# ---------------------------------------------------------------------------
# attribution


def attribute(params: RbmParams, v, pre_steps=1, rng=None, max_sweeps=1000, T=1.0) -> SpinState:
    """Valley of a visible vector: `pre_steps` Gibbs sweeps at T, then T=0 relaxation.

    With pre_steps=0 the hidden layer starts at its zero-temperature optimum
    given v. Accepts a batch of visible vectors (returns a batched SpinState).
    """
    rng = np.random.default_rng(rng)
    v = np.asarray(v, dtype=np.int8)
    if pre_steps > 0:
        state = gibbs_chain(params, v, pre_steps, T, rng)
    else:
        h = np.where(hidden_activation(params, v) >= 0, 1, -1).astype(np.int8)
        state = SpinState(v, h)
    return relax_t0(params, state, max_sweeps, rng)


def registry_from_states(params: RbmParams, states, tag, pre_steps=1, rng=None, multiplicities=None,
                         registry: ValleyRegistry | None = None) -> ValleyRegistry:
    """Attribute each visible vector and aggregate hit counts under `tag`."""
    states = np.atleast_2d(np.asarray(states, dtype=np.int8))
    if states.shape[0] == 0 or states.shape[1] == 0:
        raise ValueError("no states to attribute")
    rng = np.random.default_rng(rng)
    reg = registry or ValleyRegistry(params.fingerprint(), params.n_v)
    if reg.fingerprint != params.fingerprint():
        raise IncompatibleRegistries("registry belongs to a different model")
    ends = attribute(params, states, pre_steps, rng)
    mult = np.ones(states.shape[0], dtype=int) if multiplicities is None else np.asarray(multiplicities)
    for k in range(states.shape[0]):
        reg.add(params, SpinState(ends.v[k], ends.h[k]), tag, int(mult[k]))
    return reg


def merge_degenerate(params: RbmParams, registry: ValleyRegistry, tol=1e-12) -> ValleyRegistry:
    """Merge records whose minima are joined by zero-cost single flips through other minima."""
    keys = sorted(registry.records)
    parent = {k: k for k in keys}

    def find(k):
        while parent[k] != k:
            parent[k] = parent[parent[k]]
            k = parent[k]
        return k

    for k in keys:
        rec = registry.records[k]
        s = rec.id.joint()
        for q in range(s.size):
            t = s.copy()
            t[q] = -t[q]
            kk = spins_to_str(t)
            if kk in registry.records and abs(registry.records[kk].min_energy - rec.min_energy) <= tol:
                a, b = find(k), find(kk)
                if a != b:
                    parent[max(a, b)] = min(a, b)
    out = ValleyRegistry(registry.fingerprint, registry.n_v, {}, dict(registry.sources))
    for k in keys:
        root = registry.records[find(k)]
        rec = out.records.setdefault(root.key, ValleyRecord(root.id, root.min_energy))
        for tag, n in registry.records[k].hits.items():
            rec.hits[tag] = rec.hits.get(tag, 0) + n
    return out


# ---------------------------------------------------------------------------
# comparisons


def _compatible(a, b):
    if a.fingerprint != b.fingerprint:
        raise IncompatibleRegistries(f"registries come from different models ({a.fingerprint} vs {b.fingerprint})")


def overlap_stats(reg_a: ValleyRegistry, reg_b: ValleyRegistry) -> dict:
    _compatible(reg_a, reg_b)
    ka, kb = reg_a.keys(), reg_b.keys()
    shared = len(ka & kb)
    return {
        "n_a": len(ka),
        "n_b": len(kb),
        "shared": shared,
        "missed_by_b_fraction": (len(ka) - shared) / len(ka) if ka else 0.0,
        "missed_by_a_fraction": (len(kb) - shared) / len(kb) if kb else 0.0,
    }


def energy_histogram(registry: ValleyRegistry, bins=10, partition: ValleyRegistry | None = None) -> list:
    """Histogram of valley-minimum energies; with `partition`, split each bin into shared/only-this."""
    if bins < 1:
        raise ValueError("bins must be >= 1")
    if len(registry) == 0:
        raise ValueError("empty registry")
    if partition is not None:
        _compatible(registry, partition)
    recs = registry.sorted_records()
    e = np.array([r.min_energy for r in recs])
    lo, hi = float(e.min()), float(e.max())
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    edges = np.linspace(lo, hi, bins + 1)
    idx = np.clip(np.searchsorted(edges, e, side="right") - 1, 0, bins - 1)
    shared = np.array([partition is not None and r.key in partition for r in recs])
    rows = []
    for k in range(bins):
        inb = idx == k
        rows.append({
            "bin_lo": float(edges[k]),
            "bin_hi": float(edges[k + 1]),
            "total": int(inb.sum()),
            "shared": int((inb & shared).sum()),
            "only": int((inb & ~shared).sum()),
        })
    return rows


def value_histogram(values, shared_mask, bins=10) -> list:
    """Same layout as energy_histogram for an arbitrary per-valley quantity (E_act, width)."""
    values = np.asarray(values, dtype=float)
    shared_mask = np.asarray(shared_mask, dtype=bool)
    ok = np.isfinite(values)
    values, shared_mask = values[ok], shared_mask[ok]
    if values.size == 0:
        return []
    lo, hi = float(values.min()), float(values.max())
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    edges = np.linspace(lo, hi, bins + 1)
    idx = np.clip(np.searchsorted(edges, values, side="right") - 1, 0, bins - 1)
    return [
        {
            "bin_lo": float(edges[k]),
            "bin_hi": float(edges[k + 1]),
            "total": int((idx == k).sum()),
            "shared": int(((idx == k) & shared_mask).sum()),
            "only": int(((idx == k) & ~shared_mask).sum()),
        }
        for k in range(bins)
    ]


def write_rows_csv(path, rows, columns=None):
    columns = columns or (list(rows[0]) if rows else [])
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(columns)
        for r in rows:
            out.writerow([_fmt(r[c]) for c in columns])


def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    if x is None:
        return ""
    return x


# ---------------------------------------------------------------------------
# escape dynamics


@dataclass
class EscapeResult:
    rate: float
    censored: int
    trials: int
    mean_steps: float
    last_energies: np.ndarray

    @property
    def all_censored(self) -> bool:
        return self.censored == self.trials


def escape_rate(params: RbmParams, valley_id: SpinState, T, trials=50, max_jumps=100_000, rng=None,
                relax_sweeps=1000) -> EscapeResult:
    """Inverse mean number of Metropolis moves before leaving the valley at temperature T.

    Every attempted single-spin move counts as one step; after each accepted
    move a copy of the state is relaxed at T=0 and the trial ends when it lands
    in a different minimum. Trials reaching `max_jumps` are censored and
    contribute `max_jumps` to the mean.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not is_local_min(params, valley_id):
        raise ValueError("valley_id is not a single-flip local minimum")
    rng = np.random.default_rng(rng)
    start = np.ascontiguousarray(valley_id.joint(), dtype=np.float64)
    counts, last_e = K.rbm_escape(params.w, params.b, params.c, start, float(T), int(trials), int(max_jumps),
                                  int(relax_sweeps), K.stream(K.draw_seed(rng)))
    censored = int(np.sum(counts >= max_jumps))
    mean = float(counts.mean())
    return EscapeResult(1.0 / mean, censored, trials, mean, last_e[np.isfinite(last_e)])


def arrhenius_fit(points, low_t_count=None) -> ArrheniusFit:
    """Least squares of ln(rate) against 1/T over the lowest-temperature usable points."""
    pts = sorted((float(t), float(r)) for t, r in points)
    usable = [k for k, (t, r) in enumerate(pts) if t > 0 and r > 0 and math.isfinite(r)]
    if low_t_count is not None:
        usable = usable[:low_t_count]
    if len(usable) < 3:
        raise InsufficientData(f"need at least 3 usable (T, rate) points, have {len(usable)}")
    x = np.array([1.0 / pts[k][0] for k in usable])
    y = np.array([math.log(pts[k][1]) for k in usable])
    A = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return ArrheniusFit(float(-slope), float(intercept), pts, min(1.0, max(0.0, r2)), usable)


def measure_activation(params, valley_id, temperatures, trials=50, max_jumps=100_000, low_t_count=None, rng=None):
    """Escape rates over a temperature list and the Arrhenius fit of the usable ones.

    Temperatures where every trial was censored are dropped. Returns
    ``(fit or None, [(T, EscapeResult)])``.
    """
    rng = np.random.default_rng(rng)
    results = [(T, escape_rate(params, valley_id, T, trials, max_jumps, rng)) for T in sorted(temperatures)]
    points = [(T, res.rate) for T, res in results if not res.all_censored]
    try:
        fit = arrhenius_fit(points, low_t_count)
    except InsufficientData:
        fit = None
    return fit, results


def width_parameter(params: RbmParams, valley_id: SpinState, e_act, sw_traces, rng=None, relax_sweeps=1000,
                    depth=None) -> float:
    """Distinct in-valley states below min_energy + depth, divided by depth (depth defaults to e_act).

    Passing another `depth`, such as a depth read off the Arrhenius intercept,
    gives the alternative square-well estimate.
    """
    depth = e_act if depth is None else depth
    if not depth > 0:
        raise ValueError("depth must be positive")
    rng = np.random.default_rng(rng)
    e_min = float(energy(params, valley_id))
    n_v = params.n_v
    seen = {valley_id.key()}
    cand = []
    for tr in sw_traces:
        states = tr.states if hasattr(tr, "states") else np.atleast_2d(tr)
        s = states.astype(np.float64)
        e = energy_vh(params, s[:, :n_v], s[:, n_v:])
        for k in np.nonzero(e < e_min + depth)[0]:
            key = spins_to_str(states[k])
            if key not in seen:
                seen.add(key)
                cand.append(states[k])
    count = 1  # the minimum itself
    if cand:
        ends = relax_t0(params, SpinState.from_joint(np.array(cand), n_v), relax_sweeps, rng)
        target = valley_id.joint()
        count += int(np.sum(np.all(ends.joint() == target, axis=1)))
    return count / depth


# ---------------------------------------------------------------------------
# exhaustive landscape


@dataclass
class Landscape:
    """Every joint state of a small model; index bit k set <=> spin k is +1."""

    energies: np.ndarray
    minima: np.ndarray  # indices of single-flip local minima
    labels: np.ndarray  # steepest-descent minimum index per state
    n_v: int
    n_units: int

    def state(self, idx) -> SpinState:
        return SpinState.from_joint(index_to_spins(idx, self.n_units).astype(np.int8), self.n_v)


def spins_to_index(s) -> int:
    s = np.asarray(s).reshape(-1)
    return int(np.sum((s > 0).astype(np.int64) << np.arange(s.size)))


def index_to_spins(idx, n):
    return np.where((int(idx) >> np.arange(n)) & 1, 1, -1)


def landscape(params: RbmParams, max_units=EXACT_BARRIER_MAX_UNITS) -> Landscape:
    n = params.n_units
    if n > max_units:
        raise ValueError(f"exhaustive landscape limited to {max_units} units, got {n}")
    s = all_spins(n)
    e = energy_vh(params, s[:, : params.n_v], s[:, params.n_v :])
    idx = np.arange(2**n)
    nb = idx[:, None] ^ (1 << np.arange(n))[None, :]
    ne = e[nb]
    best = np.argmin(ne, axis=1)
    best_e = ne[idx, best]
    down = best_e < e
    nxt = np.where(down, nb[idx, best], idx)
    for _ in range(2**n):
        nn = nxt[nxt]
        if np.array_equal(nn, nxt):
            break
        nxt = nn
    minima = np.nonzero(np.all(ne >= e[:, None], axis=1))[0]
    return Landscape(e, minima, nxt, params.n_v, n)


@njit(cache=True)
def _find(parent, x):
    r = x
    while parent[r] != r:
        r = parent[r]
    while parent[x] != r:
        nx = parent[x]
        parent[x] = r
        x = nx
    return r


@njit(cache=True)
def _threshold_merge(energies, labels, order, n, target):
    m = energies.shape[0]
    parent = np.full(m, -1, dtype=np.int64)
    lab = labels.copy()
    mixed = np.zeros(m, dtype=np.bool_)
    for t in range(m):
        x = order[t]
        parent[x] = x
        for k in range(n):
            y = x ^ (1 << k)
            if parent[y] < 0:
                continue
            rx = _find(parent, x)
            ry = _find(parent, y)
            if rx != ry:
                mixed[rx] = mixed[rx] or mixed[ry] or lab[rx] != lab[ry]
                parent[ry] = rx
        if parent[target] >= 0 and mixed[_find(parent, target)]:
            return energies[x]
    return np.inf


def exact_barrier(params: RbmParams, valley_id: SpinState, land: Landscape | None = None) -> float:
    """Lowest energy above the minimum at which its threshold component touches another valley.

    States are added in order of increasing energy and merged with activated
    single-flip neighbours; valleys are labelled by steepest descent. Returns
    +inf when no other valley exists.
    """
    if params.n_units > EXACT_BARRIER_MAX_UNITS:
        raise ValueError(f"exact_barrier limited to n_v + n_h <= {EXACT_BARRIER_MAX_UNITS}")
    land = land or landscape(params)
    target = spins_to_index(valley_id.joint())
    if land.labels[target] != target:
        raise ValueError("valley_id is not a local minimum")
    order = np.argsort(land.energies, kind="stable")
    e_th = _threshold_merge(land.energies, land.labels, order, land.n_units, target)
    return float(e_th - land.energies[target]) if np.isfinite(e_th) else math.inf
