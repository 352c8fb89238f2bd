import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from valleyscope.gibbs import WarmingSchedule, is_local_min, simulated_warming
from valleyscope.rbm import RbmParams, SpinState, energy
from valleyscope.valleys import (
    IncompatibleRegistries,
    InsufficientData,
    ValleyRegistry,
    arrhenius_fit,
    attribute,
    energy_histogram,
    escape_rate,
    exact_barrier,
    landscape,
    measure_activation,
    merge_degenerate,
    overlap_stats,
    registry_from_states,
    value_histogram,
    width_parameter,
)

from conftest import brute_states, naive_energy, random_rbm


def _oracle_landscape(p):
    """Energies, minima and steepest-descent labels with plain Python loops."""
    n = p.n_units
    joint = brute_states(n)
    key = lambda s: tuple(int(x) for x in s)
    e = {key(s): naive_energy(p, s[: p.n_v], s[p.n_v :]) for s in joint}

    def nbrs(s):
        for k in range(n):
            t = list(s)
            t[k] = -t[k]
            yield tuple(t)

    minima = {s for s in e if all(e[t] >= e[s] for t in nbrs(s))}

    def descend(s):
        while True:
            best = min(nbrs(s), key=lambda t: (e[t], [-x for x in t]))
            if e[best] < e[s]:
                s = best
            else:
                return s

    return e, minima, {s: descend(s) for s in e}, nbrs


def _oracle_barrier(p, m):
    e, minima, label, nbrs = _oracle_landscape(p)
    for thr in sorted(set(e.values())):
        if thr < e[m]:
            continue
        seen, stack = {m}, [m]
        while stack:
            s = stack.pop()
            for t in nbrs(s):
                if t not in seen and e[t] <= thr:
                    seen.add(t)
                    stack.append(t)
        if any(label[s] != m for s in seen):
            return thr - e[m]
    return math.inf


def _to_state(p, s):
    return SpinState(np.array(s[: p.n_v]), np.array(s[p.n_v :]))


@pytest.mark.parametrize("seed", range(6))
def test_landscape_matches_oracle(seed):
    p = random_rbm(4, 3, seed)
    land = landscape(p)
    e, minima, _, _ = _oracle_landscape(p)
    got = {tuple(int(x) for x in land.state(i).joint()) for i in land.minima}
    assert got == minima
    for i in land.minima:
        s = land.state(i)
        assert land.energies[i] == pytest.approx(e[tuple(int(x) for x in s.joint())], abs=1e-12)
        assert is_local_min(p, s)


@pytest.mark.parametrize("seed", range(8))
def test_exact_barrier_matches_threshold_oracle(seed):
    p = random_rbm(3, 3, 100 + seed)
    land = landscape(p)
    e, minima, label, _ = _oracle_landscape(p)
    for m in minima:
        if label[m] != m:
            continue  # degenerate plateau minimum; not a valley representative
        got = exact_barrier(p, _to_state(p, m), land)
        ref = _oracle_barrier(p, m)
        if math.isinf(ref):
            assert math.isinf(got)
        else:
            assert got == pytest.approx(ref, abs=1e-12)


def test_exact_barrier_single_valley_is_infinite():
    p = RbmParams(np.zeros((2, 2)), [1.0, 1.0], [1.0, 1.0])
    assert exact_barrier(p, SpinState([1, 1], [1, 1])) == math.inf
    with pytest.raises(ValueError):
        exact_barrier(p, SpinState([1, -1], [1, 1]))


def test_symmetric_double_well_barrier():
    # two units, ferromagnetic: minima ++ and --, barrier through +- at energy +J
    p = RbmParams(np.array([[1.0]]), [0.0], [0.0])
    assert exact_barrier(p, SpinState([1], [1])) == pytest.approx(2.0)


@pytest.mark.parametrize("seed", range(4))
def test_registry_of_all_visible_vectors_is_the_minimum_set(seed):
    p = random_rbm(5, 4, seed)
    vs = brute_states(5)
    reg = registry_from_states(p, vs, "all", pre_steps=0, rng=0)
    _, minima, _, _ = _oracle_landscape(p)
    assert {tuple(int(x) for x in r.id.joint()) for r in reg.records.values()} == minima
    assert reg.sources == {"all": 32}
    assert sum(r.hits["all"] for r in reg.records.values()) == 32


def test_attribute_zero_steps_uses_optimal_hidden():
    p = random_rbm(3, 3, 4)
    v = np.array([1, -1, 1])
    s = attribute(p, v, pre_steps=0, rng=0)
    assert is_local_min(p, s)
    batch = attribute(p, np.stack([v, -v]), pre_steps=2, rng=0)
    assert batch.v.shape == (2, 3)


def _fixture_registry(p, keys, tag):
    reg = ValleyRegistry(p.fingerprint(), p.n_v)
    for k in keys:
        bits = [1 if (k >> i) & 1 else -1 for i in range(p.n_units)]
        reg.add(p, SpinState.from_joint(np.array(bits), p.n_v), tag)
    return reg


def test_overlap_fractions_hand_built():
    p = random_rbm(3, 2, 0)
    a = _fixture_registry(p, range(10), "mcmc")
    b = _fixture_registry(p, [0, 1, 2, 3, 20, 21], "annealer")
    ov = overlap_stats(a, b)
    assert ov == {"n_a": 10, "n_b": 6, "shared": 4, "missed_by_b_fraction": 0.6,
                  "missed_by_a_fraction": pytest.approx(2 / 6)}
    empty = ValleyRegistry(p.fingerprint(), 3)
    assert overlap_stats(empty, empty)["missed_by_b_fraction"] == 0.0
    other = _fixture_registry(random_rbm(3, 2, 1), [0], "x")
    with pytest.raises(IncompatibleRegistries):
        overlap_stats(a, other)


def test_energy_histogram_counts():
    p = random_rbm(3, 2, 3)
    a = _fixture_registry(p, range(32), "a")
    b = _fixture_registry(p, range(0, 32, 3), "b")
    rows = energy_histogram(a, 5, b)
    e = np.array([r.min_energy for r in a.records.values()])
    ref, edges = np.histogram(e, bins=5)
    assert [r["total"] for r in rows] == list(ref)
    np.testing.assert_allclose([r["bin_lo"] for r in rows], edges[:-1])
    assert sum(r["shared"] for r in rows) == 11
    assert all(r["shared"] + r["only"] == r["total"] for r in rows)
    with pytest.raises(ValueError):
        energy_histogram(a, 0)


def test_value_histogram_skips_missing():
    rows = value_histogram([1.0, np.nan, 3.0, 2.0], [True, True, False, False], bins=2)
    assert [r["total"] for r in rows] == [1, 2]
    assert [r["shared"] for r in rows] == [1, 0]
    assert value_histogram([np.nan], [True]) == []


def test_registry_jsonl_round_trip(tmp_path):
    p = random_rbm(3, 2, 0)
    reg = _fixture_registry(p, [1, 5, 9], "a")
    reg.to_jsonl(tmp_path / "r.jsonl")
    back = ValleyRegistry.from_jsonl(tmp_path / "r.jsonl", p)
    assert back.keys() == reg.keys() and back.sources == reg.sources


def test_merge_degenerate():
    p = RbmParams.zeros(1, 1)  # every state has energy 0
    reg = _fixture_registry(p, [0, 1, 3], "a")
    merged = merge_degenerate(p, reg)
    assert len(merged) == 1
    assert sum(r.hits["a"] for r in merged.records.values()) == 3


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 5.0), st.floats(-3.0, 3.0), st.integers(3, 8))
def test_arrhenius_recovers_exact_parameters(e_act, ln_a, n):
    temps = np.linspace(0.2, 1.0, n)
    pts = [(T, math.exp(ln_a - e_act / T)) for T in temps]
    fit = arrhenius_fit(pts)
    assert abs(fit.e_act - e_act) <= 1e-9
    assert abs(fit.ln_prefactor - ln_a) <= 1e-9
    assert fit.r_squared == pytest.approx(1.0)


def test_arrhenius_low_t_subset_and_insufficient():
    pts = [(0.2, math.exp(-10)), (0.25, math.exp(-8)), (0.3, math.exp(-6.6)), (1.0, 0.5)]
    fit = arrhenius_fit(pts, low_t_count=3)
    assert fit.low_t_subset == [0, 1, 2]
    with pytest.raises(InsufficientData):
        arrhenius_fit([(0.2, 0.1), (0.3, 0.0), (0.4, 0.2)])


def test_escape_rate_basics():
    p = RbmParams(np.array([[1.0]]), [0.0], [0.0])
    vid = SpinState([1], [1])
    hot = escape_rate(p, vid, 5.0, trials=200, rng=0)
    cold = escape_rate(p, vid, 0.3, trials=200, rng=0)
    assert hot.rate > cold.rate > 0
    assert hot.censored == 0
    capped = escape_rate(p, vid, 0.05, trials=5, max_jumps=50, rng=0)
    assert capped.all_censored and capped.rate == pytest.approx(1 / 50)
    with pytest.raises(ValueError):
        escape_rate(p, SpinState([1], [-1]), 1.0)
    with pytest.raises(ValueError):
        escape_rate(p, vid, 0.0)


def test_escape_slope_tracks_two_spin_barrier():
    """Two-spin ferromagnet: the only way out of ++ climbs the barrier 2J through +-."""
    p = RbmParams(np.array([[1.0]]), [0.0], [0.0])
    vid = SpinState([1], [1])
    assert exact_barrier(p, vid) == pytest.approx(2.0)
    fit, _ = measure_activation(p, vid, [0.2, 0.25, 0.3, 0.35], trials=400, max_jumps=10**6, rng=3)
    assert fit.e_act == pytest.approx(2.0, rel=0.1)


def test_measure_activation_and_width():
    p = RbmParams(np.array([[0.8, 0.8], [0.8, 0.8]]), [0.0, 0.0], [0.0, 0.0])
    vid = SpinState([1, 1], [1, 1])
    fit, results = measure_activation(p, vid, [0.25, 0.3, 0.35, 0.4], trials=100, rng=0)
    assert fit is not None and fit.e_act > 0
    assert len(results) == 4
    tr = simulated_warming(p, vid, WarmingSchedule([(0.5, 200)]), rng=0)
    w = width_parameter(p, vid, fit.e_act, [tr], rng=0)
    assert w >= 1 / fit.e_act
    # depth below the first excitation: only the minimum itself counts
    assert width_parameter(p, vid, 1.0, [tr], rng=0) == pytest.approx(1.0)
    assert width_parameter(p, vid, 2.0, [tr], rng=0, depth=0.5) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        width_parameter(p, vid, 0.0, [tr])
