import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from valleyscope.rbm import (
    RbmParams,
    ShapeError,
    SizeError,
    SpinState,
    TrainConfig,
    apply_weight_decay,
    cd_gradient,
    cond_prob_h,
    cond_prob_v,
    energy,
    energy_vh,
    exact_gradient,
    exact_kl,
    exact_log_likelihood,
    exact_log_partition,
    exact_marginals,
    free_energy,
    iter_states,
    log2cosh,
    spins_to_str,
    str_to_spins,
    train,
)

from conftest import brute_states, naive_energy, random_rbm


def test_energy_matches_naive_loops(rbm43):
    for s in iter_states(4, 3):
        assert energy(rbm43, s) == pytest.approx(naive_energy(rbm43, s.v, s.h), abs=1e-12)


def test_energy_batched(rbm43):
    joint = brute_states(7)
    e = energy_vh(rbm43, joint[:, :4], joint[:, 4:])
    ref = [naive_energy(rbm43, r[:4], r[4:]) for r in joint]
    np.testing.assert_allclose(e, ref, atol=1e-12)


def test_free_energy_against_hidden_sum(rbm43):
    hs = brute_states(3)
    for v in brute_states(4):
        ref = -math.log(sum(math.exp(-naive_energy(rbm43, v, h)) for h in hs))
        assert free_energy(rbm43, v) == pytest.approx(ref, rel=1e-12)


def test_log2cosh_is_stable():
    x = np.array([0.0, 1e-8, 3.0, -40.0, 800.0, -1e4])
    out = log2cosh(x)
    assert np.all(np.isfinite(out))
    np.testing.assert_allclose(out[:4], np.log(2 * np.cosh(x[:4])), rtol=1e-14)
    assert out[4] == pytest.approx(800.0)


def test_partition_and_marginals_match_enumeration(rbm43):
    joint = brute_states(7)
    weights = np.exp([-naive_energy(rbm43, r[:4], r[4:]) for r in joint])
    z = weights.sum()
    assert exact_log_partition(rbm43) == pytest.approx(math.log(z), rel=1e-12)
    # package marginals are in "bit k set => spin k = +1" order
    pm = exact_marginals(rbm43)
    for idx, p in enumerate(pm):
        v = np.where((idx >> np.arange(4)) & 1, 1.0, -1.0)
        sel = np.all(joint[:, :4] == v, axis=1)
        assert p == pytest.approx(weights[sel].sum() / z, rel=1e-12)


def test_conditionals_match_enumeration(rbm43):
    hs = brute_states(3)
    vs = brute_states(4)
    for v in vs:
        w = np.exp([-naive_energy(rbm43, v, h) for h in hs])
        ref = np.array([w[hs[:, i] > 0].sum() / w.sum() for i in range(3)])
        np.testing.assert_allclose(cond_prob_h(rbm43, v), ref, rtol=1e-12)
    for h in hs:
        w = np.exp([-naive_energy(rbm43, v, h) for v in vs])
        ref = np.array([w[vs[:, j] > 0].sum() / w.sum() for j in range(4)])
        np.testing.assert_allclose(cond_prob_v(rbm43, h), ref, rtol=1e-12)


def test_conditionals_temperature():
    p = random_rbm(3, 2, 1)
    v = np.array([1, -1, 1])
    a = v @ p.w.T + p.c
    np.testing.assert_allclose(cond_prob_h(p, v, T=0.5), 1 / (1 + np.exp(-4 * a)))
    with pytest.raises(ValueError):
        cond_prob_h(p, v, T=0.0)


def test_log_likelihood_and_kl(rbm43):
    data = np.array([[1, 1, -1, -1], [1, -1, 1, -1]])
    pm = exact_marginals(rbm43)
    idx = [int(np.sum((d > 0) << np.arange(4))) for d in data]
    assert exact_log_likelihood(rbm43, data) == pytest.approx(np.mean(np.log(pm[idx])), rel=1e-12)
    target = np.zeros(16)
    target[idx] = 0.5
    ref = sum(0.5 * math.log(0.5 / pm[k]) for k in idx)
    assert exact_kl(rbm43, target) == pytest.approx(ref, rel=1e-12)
    assert exact_kl(rbm43, pm) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        exact_kl(rbm43, target * 2)


def test_size_guard():
    with pytest.raises(SizeError):
        exact_log_partition(RbmParams.zeros(13, 12))


def _flat_ll(p, theta, data):
    n_h, n_v = p.w.shape
    w = theta[: n_h * n_v].reshape(n_h, n_v)
    q = RbmParams(w, theta[n_h * n_v : n_h * n_v + n_v], theta[n_h * n_v + n_v :])
    return exact_log_likelihood(q, data)


def test_exact_gradient_finite_differences():
    p = random_rbm(3, 3, 11, scale=0.7)
    data = np.array([[1, -1, 1], [1, 1, -1], [-1, -1, -1]])
    g = exact_gradient(p, data).flat()
    theta = np.concatenate([p.w.ravel(), p.b, p.c])
    eps = 1e-5
    fd = np.empty_like(theta)
    for k in range(theta.size):
        up, dn = theta.copy(), theta.copy()
        up[k] += eps
        dn[k] -= eps
        fd[k] = (_flat_ll(p, up, data) - _flat_ll(p, dn, data)) / (2 * eps)
    assert np.max(np.abs(g - fd)) < 1e-6


def test_cd_gradient_standard_errors_and_validation(rbm43):
    batch = np.tile([[1, -1, 1, -1]], (200, 1))
    g = cd_gradient(rbm43, batch, k=3, rng=0)
    assert g.se_dw.shape == (3, 4) and np.all(g.se_dw >= 0)
    with pytest.raises(ValueError):
        cd_gradient(rbm43, batch, k=0)
    with pytest.raises(ShapeError):
        cd_gradient(rbm43, np.ones((2, 5)))


def test_weight_decay_and_cap():
    p = RbmParams(np.array([[0.2, -0.4], [1.0, 0.0]]), [0, 0], [0, 0])
    out = apply_weight_decay(p, 0.5, 1.0, w_cap=None)
    np.testing.assert_allclose(out.w, p.w * 0.5)
    out = apply_weight_decay(p, 0.0, 1.0, w_cap=0.5)
    np.testing.assert_allclose(out.w, p.w * 0.5)
    # power 2 shrinks large weights more; never flips sign
    out = apply_weight_decay(p, 2.0, 2.0, w_cap=None)
    assert np.all(np.sign(out.w) * np.sign(p.w) >= 0)
    assert out.w[1, 0] == 0.0


def test_training_raises_likelihood_on_bas():
    from valleyscope.datasets import gen_bas

    data = gen_bas(2).reshape(-1, 4)
    p0 = RbmParams.zeros(4, 4)
    p0.w = np.random.default_rng(0).normal(0, 0.01, (4, 4))
    cfg = TrainConfig(epochs=200, learning_rate=0.1, exact=True, w_cap=None)
    p, metrics = train(p0, data, cfg, rng=0)
    assert metrics[-1]["log_likelihood"] > exact_log_likelihood(p0, data) + 0.5
    assert len(metrics) == 200


def test_training_is_deterministic():
    data = np.array([[1, -1, 1, -1], [-1, 1, -1, 1]])
    cfg = TrainConfig(epochs=5, batch_size=1)
    a, _ = train(RbmParams.zeros(4, 2), data, cfg, rng=3)
    b, _ = train(RbmParams.zeros(4, 2), data, cfg, rng=3)
    assert a.fingerprint() == b.fingerprint()


def test_json_round_trip(tmp_path, rbm43):
    rbm43.meta = {"epochs": 3}
    path = tmp_path / "m.json"
    rbm43.save(path)
    q = RbmParams.load(path)
    assert q.fingerprint() == rbm43.fingerprint() and q.meta == {"epochs": 3}


def test_shape_validation():
    with pytest.raises(ShapeError):
        RbmParams(np.zeros((2, 3)), np.zeros(2), np.zeros(2))
    with pytest.raises(ValueError):
        RbmParams(np.full((1, 1), np.nan), [0], [0])
    with pytest.raises(ValueError):
        SpinState([1, 0], [1])


def test_spin_string_round_trip():
    s = np.array([1, -1, -1, 1])
    assert spins_to_str(s) == "+--+"
    np.testing.assert_array_equal(str_to_spins("+--+"), s)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 3.0))
def test_free_energy_consistent_with_partition(seed, scale):
    p = random_rbm(3, 2, seed, scale)
    joint = brute_states(5)
    e = np.array([naive_energy(p, r[:3], r[3:]) for r in joint])
    z = np.exp(-(e - e.min())).sum()
    assert exact_log_partition(p) == pytest.approx(math.log(z) - e.min(), rel=1e-10, abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_gauge_symmetry(seed):
    """Flipping a visible spin and the sign of its couplings and bias leaves energies unchanged."""
    p = random_rbm(3, 3, seed)
    q = p.copy()
    q.w[:, 0] *= -1
    q.b[0] *= -1
    for s in iter_states(3, 3):
        v2 = s.v.copy()
        v2[0] *= -1
        assert energy_vh(q, v2, s.h) == pytest.approx(float(energy(p, s)), abs=1e-12)
