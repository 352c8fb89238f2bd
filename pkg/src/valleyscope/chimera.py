"""Chimera lattice, clone-chain embedding of complete bipartite RBMs, clamping and decoding.

Qubit indexing: ``q = ((row * N + col) * 2c) + side * c + offset`` where side 0
is the left half of a unit cell (vertical inter-cell couplers) and side 1 the
right half (horizontal inter-cell couplers).

Energies follow E(s) = -sum J_ij s_i s_j - sum h_j s_j, so ferromagnetic chain
couplers are +1 here.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .rbm import RbmParams, SpinState

H_RANGE = 2.0
J_RANGE = 1.0
CHAIN_J = 1.0
CLAMP_BIAS = 2.0


class CapacityError(ValueError):
    pass


class CoverageError(ValueError):
    pass


@dataclass(frozen=True)
class ChimeraGraph:
    M: int
    N: int
    c: int = 4

    def __post_init__(self):
        if min(self.M, self.N, self.c) < 1:
            raise ValueError("M, N and c must be >= 1")

    @property
    def num_qubits(self) -> int:
        return 2 * self.c * self.M * self.N

    def qubit(self, row, col, side, offset) -> int:
        return ((row * self.N + col) * 2 + side) * self.c + offset

    def coords(self, q):
        cell, rem = divmod(q, 2 * self.c)
        side, offset = divmod(rem, self.c)
        row, col = divmod(cell, self.N)
        return row, col, side, offset

    def couplers(self) -> list:
        """Sorted (i, j) pairs with i < j."""
        c, out = self.c, []
        for r in range(self.M):
            for k in range(self.N):
                for a in range(c):
                    for b in range(c):
                        out.append((self.qubit(r, k, 0, a), self.qubit(r, k, 1, b)))
                    if r + 1 < self.M:
                        out.append((self.qubit(r, k, 0, a), self.qubit(r + 1, k, 0, a)))
                    if k + 1 < self.N:
                        out.append((self.qubit(r, k, 1, a), self.qubit(r, k + 1, 1, a)))
        return sorted(tuple(sorted(e)) for e in out)

    def expected_coupler_count(self) -> int:
        c, M, N = self.c, self.M, self.N
        return c * c * M * N + c * (M - 1) * N + c * M * (N - 1)

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.num_qubits, dtype=int)
        for i, j in self.couplers():
            deg[i] += 1
            deg[j] += 1
        return deg


def build_chimera(M, N, c=4) -> ChimeraGraph:
    return ChimeraGraph(M, N, c)


@dataclass
class IsingProblem:
    """Physical problem over `qubits`; `edges` hold qubit labels, `h`/`J` aligned arrays."""

    qubits: np.ndarray
    h: np.ndarray
    edges: np.ndarray
    J: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.qubits = np.asarray(self.qubits, dtype=np.int64).reshape(-1)
        self.h = np.asarray(self.h, dtype=np.float64).reshape(-1)
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        self.J = np.asarray(self.J, dtype=np.float64).reshape(-1)
        if self.h.shape != self.qubits.shape or self.J.shape[0] != self.edges.shape[0]:
            raise ValueError("misaligned problem arrays")
        pos = self.index
        if np.any(~np.isin(self.edges, self.qubits)):
            raise ValueError("coupler references unknown qubit")
        self._iu = np.array([pos[int(q)] for q in self.edges[:, 0]], dtype=np.int64)
        self._iv = np.array([pos[int(q)] for q in self.edges[:, 1]], dtype=np.int64)

    @property
    def index(self) -> dict:
        return {int(q): k for k, q in enumerate(self.qubits)}

    @property
    def num_qubits(self) -> int:
        return self.qubits.size

    def check_ranges(self):
        if np.any(np.abs(self.h) > H_RANGE + 1e-12):
            raise ValueError(f"bias outside [-{H_RANGE}, {H_RANGE}]: max |h| = {np.abs(self.h).max()}")
        if np.any(np.abs(self.J) > J_RANGE + 1e-12):
            raise ValueError(f"coupling outside [-{J_RANGE}, {J_RANGE}]: max |J| = {np.abs(self.J).max()}")

    def csr(self):
        """Symmetric adjacency (indptr, indices, weights) over positions in `qubits`."""
        n = self.num_qubits
        rows = np.concatenate([self._iu, self._iv])
        cols = np.concatenate([self._iv, self._iu])
        vals = np.concatenate([self.J, self.J])
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, rows + 1, 1)
        return np.cumsum(indptr), cols, vals

    def energy(self, spins) -> np.ndarray:
        """Vectorized energy of spins aligned with `qubits` (leading batch axes allowed)."""
        s = np.asarray(spins, dtype=np.float64)
        if s.shape[-1] != self.num_qubits:
            raise CoverageError(f"state covers {s.shape[-1]} qubits, problem has {self.num_qubits}")
        return -(s[..., self._iu] * s[..., self._iv]) @ self.J - s @ self.h

    def with_h(self, h) -> "IsingProblem":
        return IsingProblem(self.qubits, h, self.edges, self.J, dict(self.meta))

    def to_dict(self) -> dict:
        return {
            "h": {str(int(q)): float(v) for q, v in zip(self.qubits, self.h)},
            "J": {f"{int(a)},{int(b)}": float(v) for (a, b), v in zip(self.edges, self.J)},
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, doc) -> "IsingProblem":
        h_items = sorted((int(q), float(v)) for q, v in doc["h"].items())
        j_items = sorted((tuple(int(x) for x in k.split(",")), float(v)) for k, v in doc["J"].items())
        return cls(
            [q for q, _ in h_items],
            [v for _, v in h_items],
            np.array([e for e, _ in j_items], dtype=np.int64).reshape(-1, 2),
            [v for _, v in j_items],
            dict(doc.get("meta", {})),
        )

    def dump(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)


def embedded_energy(problem: IsingProblem, qubit_state) -> float:
    if isinstance(qubit_state, dict):
        qubit_state = _state_from_map(problem.qubits, qubit_state)
    return float(problem.energy(qubit_state))


def _state_from_map(qubits, mapping):
    missing = [int(q) for q in qubits if int(q) not in mapping]
    if missing:
        raise CoverageError(f"no value for qubits {missing[:8]}")
    return np.array([mapping[int(q)] for q in qubits], dtype=np.int8)


@dataclass
class Embedding:
    """Logical unit -> chain of physical qubits. Units 0..n_v-1 are visible, then hidden."""

    n_v: int
    n_h: int
    chains: list  # list of lists of qubit labels, one per logical unit
    crossing: dict  # (visible j, hidden i) -> (q_visible, q_hidden)
    graph: ChimeraGraph

    @property
    def qubits(self) -> np.ndarray:
        return np.array(sorted(q for ch in self.chains for q in ch), dtype=np.int64)

    def side(self, unit) -> str:
        return "visible" if unit < self.n_v else "hidden"

    def chain_coupler_count(self) -> int:
        return sum(len(ch) - 1 for ch in self.chains)

    def energy_offset(self) -> float:
        """Constant C in embedded = RBM/s + C for chain-consistent states."""
        return -CHAIN_J * self.chain_coupler_count()

    def encode(self, state: SpinState) -> np.ndarray:
        """Chain-consistent qubit state (aligned with `qubits`) for a logical state."""
        joint = state.joint()
        pos = {int(q): k for k, q in enumerate(self.qubits)}
        out = np.empty(len(pos), dtype=np.int8)
        for u, ch in enumerate(self.chains):
            for q in ch:
                out[pos[q]] = joint[u]
        return out


def embed_rbm(params: RbmParams, graph: ChimeraGraph, s=1.0):
    """Clone-chain embedding: visible chains run down cell columns, hidden chains along cell rows.

    Returns ``(IsingProblem, Embedding)``. Crossing couplers carry w/s, chain
    couplers +1, and each logical bias is split evenly over its chain.
    """
    if s < 1:
        raise ValueError("scale factor must be >= 1")
    c, M, N = graph.c, graph.M, graph.N
    if params.n_v > c * N or params.n_h > c * M:
        raise CapacityError(
            f"RBM {params.n_v}x{params.n_h} does not fit a {M}x{N} lattice (max {c * N}x{c * M})"
        )
    chains = []
    for u in range(params.n_v):
        col, off = divmod(u, c)
        chains.append([graph.qubit(r, col, 0, off) for r in range(M)])
    for u in range(params.n_h):
        row, off = divmod(u, c)
        chains.append([graph.qubit(row, k, 1, off) for k in range(N)])

    h = {}
    J = {}
    for u, ch in enumerate(chains):
        beta = params.b[u] if u < params.n_v else params.c[u - params.n_v]
        for q in ch:
            h[q] = beta / (s * len(ch))
        for a, b in zip(ch, ch[1:]):
            J[tuple(sorted((a, b)))] = CHAIN_J
    crossing = {}
    for i in range(params.n_h):
        row, oh = divmod(i, c)
        for j in range(params.n_v):
            col, ov = divmod(j, c)
            qv, qh = graph.qubit(row, col, 0, ov), graph.qubit(row, col, 1, oh)
            crossing[(j, i)] = (qv, qh)
            J[tuple(sorted((qv, qh)))] = params.w[i, j] / s

    qubits = sorted(h)
    edges = sorted(J)
    problem = IsingProblem(
        qubits,
        [h[q] for q in qubits],
        np.array(edges, dtype=np.int64).reshape(-1, 2),
        [J[e] for e in edges],
        {"M": M, "N": N, "c": c, "s": float(s), "chain_coupling": CHAIN_J, "convention": "E=-sum(J s s)-sum(h s)"},
    )
    problem.check_ranges()
    return problem, Embedding(params.n_v, params.n_h, chains, crossing, graph)


def weak_couplings(problem: IsingProblem, j_floor=1e-4) -> list:
    """Nonzero couplers whose magnitude sits below the sensitivity floor."""
    mag = np.abs(problem.J)
    return [tuple(map(int, e)) for e, m in zip(problem.edges, mag) if 0 < m < j_floor]


def clamp_units(problem: IsingProblem, embedding: Embedding, assignments: dict) -> IsingProblem:
    """Saturate the bias of every qubit in each clamped unit's chain to +/-2."""
    if not assignments:
        return problem
    pos = problem.index
    h = problem.h.copy()
    for unit, val in assignments.items():
        if not 0 <= unit < len(embedding.chains):
            raise KeyError(f"unknown unit {unit}")
        if val not in (-1, 1):
            raise ValueError(f"clamp value must be -1 or +1, got {val}")
        for q in embedding.chains[unit]:
            h[pos[q]] = CLAMP_BIAS * val
    out = problem.with_h(h)
    out.meta["clamped"] = len(assignments)
    return out


@dataclass
class ChainReport:
    agreement: np.ndarray  # fraction of chain qubits agreeing with the decoded value
    ties: np.ndarray  # bool per unit: exact tie broken by coin flip

    @property
    def broken(self) -> np.ndarray:
        return self.agreement < 1.0


def decode(embedding: Embedding, qubit_state, rng=None):
    """Majority vote per chain. Returns ``(SpinState, ChainReport)``.

    `qubit_state` is an array aligned with `embedding.qubits` or a mapping
    qubit -> spin. Exact ties are broken by a seeded coin flip and flagged.
    """
    qubits = embedding.qubits
    if isinstance(qubit_state, dict):
        s = _state_from_map(qubits, qubit_state)
    else:
        s = np.asarray(qubit_state)
        if s.shape[-1] != qubits.size:
            raise CoverageError(f"state covers {s.shape[-1]} qubits, embedding uses {qubits.size}")
    pos = {int(q): k for k, q in enumerate(qubits)}
    rng = np.random.default_rng(0 if rng is None else rng)
    n_units = len(embedding.chains)
    joint = np.empty(n_units, dtype=np.int8)
    agree = np.empty(n_units)
    ties = np.zeros(n_units, dtype=bool)
    for u, ch in enumerate(embedding.chains):
        vals = s[[pos[q] for q in ch]]
        tot = int(vals.sum())
        if tot == 0:
            ties[u] = True
            joint[u] = 1 if rng.random() < 0.5 else -1
        else:
            joint[u] = 1 if tot > 0 else -1
        agree[u] = np.mean(vals == joint[u])
    return SpinState(joint[: embedding.n_v], joint[embedding.n_v :]), ChainReport(agree, ties)


def decode_many(embedding: Embedding, states, rng=None) -> np.ndarray:
    """Vectorized majority vote for a batch of qubit states; returns joint logical spins."""
    states = np.atleast_2d(states)
    pos = {int(q): k for k, q in enumerate(embedding.qubits)}
    rng = np.random.default_rng(0 if rng is None else rng)
    out = np.empty((states.shape[0], len(embedding.chains)), dtype=np.int8)
    for u, ch in enumerate(embedding.chains):
        tot = states[:, [pos[q] for q in ch]].astype(np.int64).sum(axis=1)
        coin = np.where(rng.random(states.shape[0]) < 0.5, 1, -1)
        out[:, u] = np.where(tot > 0, 1, np.where(tot < 0, -1, coin))
    return out


def sweep_scale(params: RbmParams, graph: ChimeraGraph, scales, evaluate):
    """Embed at each scale and call ``evaluate(problem, embedding, scale) -> float``.

    Returns ``(table, best_scale)`` with table a list of (scale, metric) rows;
    ties resolve to the earliest scale.
    """
    scales = list(scales)
    if not scales:
        raise ValueError("no scales given")
    table = []
    for s in scales:
        problem, emb = embed_rbm(params, graph, s)
        table.append((s, float(evaluate(problem, emb, s))))
    best = min(range(len(table)), key=lambda k: (table[k][1], k))
    return table, table[best][0]


def hardware_convention(problem: IsingProblem) -> IsingProblem:
    """Flip signs of h and J (the opposite sign convention used on the wire)."""
    return replace(problem, h=-problem.h, J=-problem.J, meta=dict(problem.meta))
