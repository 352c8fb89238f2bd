import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from valleyscope.chimera import (
    CapacityError,
    CoverageError,
    IsingProblem,
    build_chimera,
    clamp_units,
    decode,
    decode_many,
    embed_rbm,
    embedded_energy,
    hardware_convention,
    sweep_scale,
    weak_couplings,
)
from valleyscope.rbm import RbmParams, SpinState, energy

from conftest import random_rbm


def test_qubit_index_formula():
    g = build_chimera(3, 2, 4)
    seen = set()
    for row in range(3):
        for col in range(2):
            for side in range(2):
                for off in range(4):
                    q = g.qubit(row, col, side, off)
                    assert q == (row * 2 + col) * 8 + side * 4 + off
                    assert g.coords(q) == (row, col, side, off)
                    seen.add(q)
    assert seen == set(range(g.num_qubits))


@pytest.mark.parametrize("M,N,c", [(1, 1, 4), (2, 2, 4), (3, 5, 4), (2, 3, 2), (4, 1, 3)])
def test_coupler_count_and_degree(M, N, c):
    g = build_chimera(M, N, c)
    edges = g.couplers()
    assert len(edges) == len(set(edges)) == g.expected_coupler_count()
    assert all(i < j for i, j in edges)
    assert g.degrees().max() <= c + 2


def test_inter_cell_couplers_follow_sides():
    g = build_chimera(2, 2, 4)
    for i, j in g.couplers():
        ri, ci, si, oi = g.coords(i)
        rj, cj, sj, oj = g.coords(j)
        if (ri, ci) == (rj, cj):
            assert si != sj
        elif ci == cj:
            assert si == sj == 0 and oi == oj and abs(ri - rj) == 1
        else:
            assert si == sj == 1 and oi == oj and ri == rj and abs(ci - cj) == 1


def test_embedding_uses_only_hardware_couplers():
    p = random_rbm(8, 8, 0, scale=0.3)
    g = build_chimera(2, 2)
    problem, emb = embed_rbm(p, g)
    hw = set(g.couplers())
    assert all(tuple(e) in hw for e in problem.edges)
    assert emb.chain_coupler_count() == 8 * 1 + 8 * 1
    assert emb.energy_offset() == -16


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([1.0, 2.0, 3.7]), st.integers(1, 8), st.integers(1, 8))
def test_embedding_energy_identity(seed, s, n_v, n_h):
    p = random_rbm(n_v, n_h, seed, scale=0.3)
    p.w = np.clip(p.w, -1, 1)
    problem, emb = embed_rbm(p, build_chimera(2, 2), s)
    rng = np.random.default_rng(seed)
    for _ in range(10):
        state = SpinState(np.where(rng.random(n_v) < 0.5, 1, -1), np.where(rng.random(n_h) < 0.5, 1, -1))
        q = emb.encode(state)
        lhs = embedded_energy(problem, q) - emb.energy_offset()
        assert lhs == pytest.approx(float(energy(p, state)) / s, abs=1e-9)
        back, rep = decode(emb, q)
        assert back == state and not rep.broken.any()


def test_bias_split_over_chain():
    p = RbmParams(np.zeros((2, 3)), [0.3, -0.6, 0.9], [0.4, 0.0])
    problem, emb = embed_rbm(p, build_chimera(3, 2, 2), s=2.0)
    pos = problem.index
    for u, ch in enumerate(emb.chains):
        beta = list(p.b) + list(p.c)
        total = sum(problem.h[pos[q]] for q in ch)
        assert total == pytest.approx(beta[u] / 2.0)


def test_capacity_and_range_errors():
    with pytest.raises(CapacityError):
        embed_rbm(random_rbm(9, 2, 0), build_chimera(2, 2))
    big = RbmParams(np.full((2, 2), 1.5), [0, 0], [0, 0])
    with pytest.raises(ValueError):
        embed_rbm(big, build_chimera(1, 1))
    embed_rbm(big, build_chimera(1, 1), s=1.5)
    with pytest.raises(ValueError):
        embed_rbm(big, build_chimera(1, 1), s=0.5)


def test_clamping_and_decode():
    p = random_rbm(4, 4, 3, scale=0.2)
    problem, emb = embed_rbm(p, build_chimera(1, 1))
    clamped = clamp_units(problem, emb, {0: 1, 5: -1})
    pos = clamped.index
    assert all(clamped.h[pos[q]] == 2 for q in emb.chains[0])
    assert all(clamped.h[pos[q]] == -2 for q in emb.chains[5])
    with pytest.raises(KeyError):
        clamp_units(problem, emb, {99: 1})
    with pytest.raises(ValueError):
        clamp_units(problem, emb, {0: 0})


def test_majority_vote_and_ties():
    p = random_rbm(2, 1, 0, scale=0.2)
    problem, emb = embed_rbm(p, build_chimera(2, 2, 2))  # chains of length 2
    qs = list(emb.qubits)
    state = {q: 1 for q in qs}
    a, b = emb.chains[0]
    state[a], state[b] = 1, -1  # visible unit 0: tie
    out, rep = decode(emb, state, rng=0)
    assert rep.ties[0] and not rep.ties[1:].any()
    assert rep.agreement[0] == 0.5
    outs = {decode(emb, state, rng=k)[0].v[0] for k in range(30)}
    assert outs == {1, -1}
    arr = np.array([state[q] for q in qs])
    many = decode_many(emb, np.stack([arr, arr]), rng=0)
    assert np.all(many[:, 1:] == 1)
    with pytest.raises(CoverageError):
        decode(emb, {qs[0]: 1})


def test_problem_serialization_and_convention():
    p = random_rbm(3, 3, 1, scale=0.3)
    problem, emb = embed_rbm(p, build_chimera(1, 1))
    back = IsingProblem.from_dict(problem.to_dict())
    rng = np.random.default_rng(0)
    s = np.where(rng.random((5, problem.num_qubits)) < 0.5, 1, -1)
    np.testing.assert_allclose(back.energy(s), problem.energy(s))
    hw = hardware_convention(problem)
    # opposite sign convention: E_hw = +sum J s s + sum h s with negated J, h
    e_hw = (s[:, hw._iu] * s[:, hw._iv]) @ hw.J + s @ hw.h
    np.testing.assert_allclose(e_hw, problem.energy(s))


def test_weak_couplings_and_scale_sweep():
    p = random_rbm(4, 4, 2, scale=0.3)
    p.w[0, 0] = 5e-5
    problem, _ = embed_rbm(p, build_chimera(1, 1))
    assert len(weak_couplings(problem, 1e-4)) == 1
    table, best = sweep_scale(p, build_chimera(1, 1), [1, 2, 3], lambda prob, emb, s: abs(s - 2))
    assert best == 2 and [s for s, _ in table] == [1, 2, 3]
    _, best = sweep_scale(p, build_chimera(1, 1), [3, 1, 2], lambda prob, emb, s: 0.0)
    assert best == 3
