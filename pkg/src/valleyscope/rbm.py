"""Restricted Boltzmann machines in Ising (+/-1) convention.

Energy of a joint configuration::

    E(v, h) = -sum_ij w_ij h_i v_j - sum_j b_j v_j - sum_i c_i h_i

with ``w`` stored hidden-major, shape ``(n_h, n_v)``. The exact routines
enumerate the state space and refuse models above a desk-scale size guard.
"""
from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

EXACT_MAX_UNITS = 24


class ShapeError(ValueError):
    pass


class SizeError(ValueError):
    """Model too large for exhaustive enumeration."""


@dataclass
class RbmParams:
    w: np.ndarray
    b: np.ndarray
    c: np.ndarray
    label_units: tuple = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.w = np.array(self.w, dtype=np.float64, ndmin=2)
        self.b = np.array(self.b, dtype=np.float64).reshape(-1)
        self.c = np.array(self.c, dtype=np.float64).reshape(-1)
        self.label_units = tuple(int(u) for u in self.label_units)
        if self.w.shape != (self.c.size, self.b.size):
            raise ShapeError(f"w has shape {self.w.shape}, expected ({self.c.size}, {self.b.size})")
        if not (np.isfinite(self.w).all() and np.isfinite(self.b).all() and np.isfinite(self.c).all()):
            raise ValueError("parameters must be finite")
        if len(set(self.label_units)) != len(self.label_units) or any(
            u < 0 or u >= self.n_v for u in self.label_units
        ):
            raise ValueError(f"invalid label units {self.label_units}")

    @property
    def n_v(self) -> int:
        return self.b.size

    @property
    def n_h(self) -> int:
        return self.c.size

    @property
    def n_units(self) -> int:
        return self.n_v + self.n_h

    @classmethod
    def zeros(cls, n_v, n_h, label_units=()):
        return cls(np.zeros((n_h, n_v)), np.zeros(n_v), np.zeros(n_h), label_units)

    @classmethod
    def random(cls, n_v, n_h, rng, scale=1.0, label_units=()):
        return cls(
            rng.normal(0.0, scale, (n_h, n_v)),
            rng.normal(0.0, scale, n_v),
            rng.normal(0.0, scale, n_h),
            label_units,
        )

    def copy(self) -> "RbmParams":
        return RbmParams(self.w.copy(), self.b.copy(), self.c.copy(), self.label_units, dict(self.meta))

    def scaled(self, factor) -> "RbmParams":
        return RbmParams(self.w * factor, self.b * factor, self.c * factor, self.label_units, dict(self.meta))

    def fingerprint(self) -> str:
        hsh = hashlib.sha256()
        for arr in (self.w, self.b, self.c):
            hsh.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        return hsh.hexdigest()[:16]

    # persistence ---------------------------------------------------------

    def to_json(self) -> str:
        doc = {
            "n_v": self.n_v,
            "n_h": self.n_h,
            "w": self.w.reshape(-1).tolist(),
            "b": self.b.tolist(),
            "c": self.c.tolist(),
            "label_units": list(self.label_units),
            "meta": self.meta,
        }
        return json.dumps(doc, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RbmParams":
        doc = json.loads(text)
        w = np.array(doc["w"], dtype=np.float64).reshape(doc["n_h"], doc["n_v"])
        return cls(w, doc["b"], doc["c"], doc.get("label_units", ()), doc.get("meta", {}))

    def save(self, path):
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path) -> "RbmParams":
        return cls.from_json(Path(path).read_text())


@dataclass(frozen=True)
class SpinState:
    """Joint visible/hidden configuration. Arrays may carry a leading batch axis."""

    v: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.v, dtype=np.int8)
        h = np.asarray(self.h, dtype=np.int8)
        if not (np.all(np.abs(v) == 1) and np.all(np.abs(h) == 1)):
            raise ValueError("spins must be exactly -1 or +1")
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "h", h)

    @classmethod
    def from_joint(cls, s, n_v) -> "SpinState":
        s = np.asarray(s)
        return cls(s[..., :n_v], s[..., n_v:])

    def joint(self) -> np.ndarray:
        return np.concatenate([self.v, self.h], axis=-1)

    def key(self) -> str:
        return spins_to_str(self.joint())

    def __eq__(self, other):
        return (
            isinstance(other, SpinState)
            and np.array_equal(self.v, other.v)
            and np.array_equal(self.h, other.h)
        )

    def __hash__(self):
        return hash(self.key())


@dataclass
class GradientEstimate:
    dw: np.ndarray
    db: np.ndarray
    dc: np.ndarray
    # standard errors of the estimate, when it is a sample mean
    se_dw: np.ndarray | None = None
    se_db: np.ndarray | None = None
    se_dc: np.ndarray | None = None

    def flat(self) -> np.ndarray:
        return np.concatenate([self.dw.ravel(), self.db, self.dc])

    def flat_se(self) -> np.ndarray:
        return np.concatenate([self.se_dw.ravel(), self.se_db, self.se_dc])


def spins_to_str(s) -> str:
    return "".join("+" if x > 0 else "-" for x in np.asarray(s).reshape(-1))


def str_to_spins(text: str) -> np.ndarray:
    return np.array([1 if ch == "+" else -1 for ch in text], dtype=np.int8)


def _check_visible(params, v):
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != params.n_v:
        raise ShapeError(f"visible vector has length {v.shape[-1]}, model has n_v={params.n_v}")
    return v


def _check_hidden(params, h):
    h = np.asarray(h, dtype=np.float64)
    if h.shape[-1] != params.n_h:
        raise ShapeError(f"hidden vector has length {h.shape[-1]}, model has n_h={params.n_h}")
    return h


def log2cosh(x):
    x = np.abs(x)
    return x + np.log1p(np.exp(-2.0 * x))


def hidden_activation(params, v):
    """sum_j w_ij v_j + c_i for each hidden unit."""
    return _check_visible(params, v) @ params.w.T + params.c


def visible_activation(params, h):
    return _check_hidden(params, h) @ params.w + params.b


def energy(params: RbmParams, s: SpinState):
    v = _check_visible(params, s.v)
    h = _check_hidden(params, s.h)
    return energy_vh(params, v, h)


def energy_vh(params, v, h):
    v = _check_visible(params, v)
    h = _check_hidden(params, h)
    return -np.einsum("...i,ij,...j->...", h, params.w, v) - v @ params.b - h @ params.c


def free_energy(params: RbmParams, v):
    """-ln sum_h exp(-E(v, h)), closed form for a bipartite Ising model."""
    v = _check_visible(params, v)
    return -(v @ params.b) - log2cosh(hidden_activation(params, v)).sum(axis=-1)


def _check_temperature(T):
    if not T > 0:
        raise ValueError(f"temperature must be positive, got {T}")


def _sigmoid(x):
    # full relative precision in both tails
    return np.exp(-np.logaddexp(0.0, -x))


def cond_prob_h(params: RbmParams, v, T=1.0):
    """P(h_i = +1 | v) at temperature T."""
    _check_temperature(T)
    return _sigmoid(2.0 * hidden_activation(params, v) / T)


def cond_prob_v(params: RbmParams, h, T=1.0):
    """P(v_j = +1 | h) at temperature T."""
    _check_temperature(T)
    return _sigmoid(2.0 * visible_activation(params, h) / T)


# ---------------------------------------------------------------------------
# exact (enumeration) routines


def all_spins(n) -> np.ndarray:
    """All 2**n spin vectors; row r has bit k of r set <=> spin k is +1."""
    idx = np.arange(2**n)[:, None]
    return np.where((idx >> np.arange(n)) & 1, 1, -1).astype(np.float64)


def _guard(params):
    if params.n_units > EXACT_MAX_UNITS:
        raise SizeError(
            f"exact enumeration limited to n_v + n_h <= {EXACT_MAX_UNITS}, got {params.n_units}"
        )


def _logsumexp(x):
    m = np.max(x)
    return m + math.log(np.exp(x - m).sum())


def exact_log_partition(params: RbmParams) -> float:
    _guard(params)
    return _logsumexp(-free_energy(params, all_spins(params.n_v)))


def exact_partition(params: RbmParams) -> float:
    return math.exp(exact_log_partition(params))


def exact_marginals(params: RbmParams) -> np.ndarray:
    """P_m(v) for every visible state in `all_spins` order."""
    _guard(params)
    neg_f = -free_energy(params, all_spins(params.n_v))
    return np.exp(neg_f - _logsumexp(neg_f))


def exact_log_likelihood(params: RbmParams, data) -> float:
    """Mean log marginal probability of the data vectors."""
    data = _check_visible(params, np.atleast_2d(data))
    if data.shape[0] == 0:
        raise ValueError("empty data")
    return float(np.mean(-free_energy(params, data)) - exact_log_partition(params))


def exact_kl(params: RbmParams, target) -> float:
    """KL(target || model) with target a probability table in `all_spins` order."""
    target = np.asarray(target, dtype=np.float64)
    if target.shape != (2**params.n_v,):
        raise ShapeError("target table must have one entry per visible state")
    if np.any(target < 0) or abs(target.sum() - 1.0) > 1e-12:
        raise ValueError("target distribution must be nonnegative and sum to 1")
    log_pm = -free_energy(params, all_spins(params.n_v)) - exact_log_partition(params)
    nz = target > 0
    return float(max(0.0, np.sum(target[nz] * (np.log(target[nz]) - log_pm[nz]))))


def _phase_stats(params, v, weights=None):
    """(E[tanh(a) v^T], E[v], E[tanh(a)]) under the given weights (default: uniform)."""
    t = np.tanh(hidden_activation(params, v))
    if weights is None:
        weights = np.full(v.shape[0], 1.0 / v.shape[0])
    return np.einsum("k,ki,kj->ij", weights, t, v), weights @ v, weights @ t


def exact_gradient(params: RbmParams, data) -> GradientEstimate:
    """d/dtheta of the mean log-likelihood, with the model term summed over all v."""
    _guard(params)
    data = _check_visible(params, np.atleast_2d(data))
    if data.shape[0] == 0:
        raise ValueError("empty data")
    pos = _phase_stats(params, data)
    neg = _phase_stats(params, all_spins(params.n_v), exact_marginals(params))
    return GradientEstimate(pos[0] - neg[0], pos[1] - neg[1], pos[2] - neg[2])


def cd_gradient(params: RbmParams, batch, k=5, T=1.0, rng=None) -> GradientEstimate:
    """Contrastive-divergence estimate; one k-step chain per pattern, restarted from the data."""
    from .gibbs import sample_h, sample_v

    if k < 1:
        raise ValueError("k must be >= 1")
    batch = _check_visible(params, np.atleast_2d(batch))
    if batch.shape[0] == 0:
        raise ValueError("empty batch")
    rng = np.random.default_rng(rng)
    v = batch
    for _ in range(k):
        h = sample_h(params, v, T, rng)
        v = sample_v(params, h, T, rng)
    t_pos = np.tanh(hidden_activation(params, batch))
    t_neg = np.tanh(hidden_activation(params, v))
    gw = t_pos[:, :, None] * batch[:, None, :] - t_neg[:, :, None] * v[:, None, :]
    gb = batch - v
    gc = t_pos - t_neg
    n = batch.shape[0]

    def se(x):
        return x.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros(x.shape[1:])

    return GradientEstimate(gw.mean(0), gb.mean(0), gc.mean(0), se(gw), se(gb), se(gc))


def apply_weight_decay(params: RbmParams, lam, p=1.0, w_cap=0.5) -> RbmParams:
    """Sign-preserving power shrinkage followed by a hard cap on max|w|."""
    if lam < 0 or p <= 0:
        raise ValueError("need lam >= 0 and p > 0")
    out = params.copy()
    w = out.w
    if lam > 0:
        mag = np.abs(w)
        w = np.sign(w) * np.maximum(mag - lam * mag**p, 0.0)
    peak = np.max(np.abs(w)) if w.size else 0.0
    if w_cap is not None and peak > w_cap:
        w = w * (w_cap / peak)
    out.w = w
    return out


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainConfig:
    epochs: int = 10
    learning_rate: float = 0.05
    cd_steps: int = 5
    weight_decay: float = 0.0
    decay_power: float = 1.0
    w_cap: float | None = 0.5
    batch_size: int | None = None  # None: one update per epoch over all patterns
    temperature: float = 1.0
    exact: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.cd_steps < 1:
            raise ValueError("cd_steps must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


def init_params(n_v, n_h, rng, scale=0.01, label_units=()) -> RbmParams:
    rng = np.random.default_rng(rng)
    return RbmParams(rng.normal(0.0, scale, (n_h, n_v)), np.zeros(n_v), np.zeros(n_h), label_units)


def reconstruction_error(params, data, T=1.0) -> float:
    """Fraction of visible spins flipped by a deterministic v -> h -> v mean-field pass."""
    data = np.atleast_2d(data).astype(np.float64)
    h = np.where(hidden_activation(params, data) >= 0, 1.0, -1.0)
    v = np.where(visible_activation(params, h) >= 0, 1.0, -1.0)
    return float(np.mean(v != data))


def train(params: RbmParams, dataset, config: TrainConfig, rng=None, callback=None):
    """Gradient ascent on the log-likelihood; every pattern is used once per epoch.

    Returns ``(params, metrics)`` where metrics holds one dict per epoch.
    `callback(epoch, params)` runs after each epoch (checkpointing).
    """
    data = np.atleast_2d(np.asarray(dataset, dtype=np.float64))
    if data.shape[0] == 0:
        raise ValueError("empty dataset")
    rng = np.random.default_rng(config.seed if rng is None else rng)
    params = params.copy()
    exact_ok = params.n_units <= EXACT_MAX_UNITS
    n = data.shape[0]
    bs = n if not config.batch_size else min(config.batch_size, n)
    metrics = []
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n) if bs < n else np.arange(n)
        for start in range(0, n, bs):
            batch = data[order[start : start + bs]]
            if config.exact:
                g = exact_gradient(params, batch)
            else:
                g = cd_gradient(params, batch, config.cd_steps, config.temperature, rng)
            params.w = params.w + config.learning_rate * g.dw
            params.b = params.b + config.learning_rate * g.db
            params.c = params.c + config.learning_rate * g.dc
            if config.weight_decay > 0 or config.w_cap is not None:
                params = apply_weight_decay(params, config.weight_decay, config.decay_power, config.w_cap)
        row = {
            "epoch": epoch,
            "reconstruction_error": reconstruction_error(params, data),
            "max_abs_w": float(np.max(np.abs(params.w))),
        }
        if exact_ok:
            row["log_likelihood"] = exact_log_likelihood(params, data)
        metrics.append(row)
        if callback is not None:
            callback(epoch, params)
    return params, metrics


def iter_states(n_v, n_h):
    """Yield every SpinState of a small model (test and debugging aid)."""
    for bits in itertools.product((-1, 1), repeat=n_v + n_h):
        yield SpinState(bits[:n_v], bits[n_v:])


def as_visible_array(vs: Sequence) -> np.ndarray:
    return np.atleast_2d(np.asarray(vs, dtype=np.float64))
