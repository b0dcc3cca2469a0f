import numpy as np
import pytest

from pufferfish import (BinaryInterval, FiniteSet, LaplaceSource,
                        MarkovChainModel, MarkovQuilt, MixingParams,
                        TransitionMatrix, a_star, builtin_query, eigengap,
                        exact_max_influence, influence_bound, mixing_summary,
                        mqm_approx, mqm_approx_fast, stationary_distribution,
                        time_reversal)
from pufferfish.approx import (MixingSummary, _approx_sigma_node,
                               _approx_sigma_node_fast, is_reversible,
                               jacobi_eigenvalues, mqm_approx_fast_plan,
                               mqm_approx_plan)
from pufferfish.quilt import minimal_quilt_set, mqm_exact_plan

P1 = TransitionMatrix([[0.9, 0.1], [0.4, 0.6]])
P2 = TransitionMatrix([[0.8, 0.2], [0.3, 0.7]])


def running_class(T=100):
    return FiniteSet((MarkovChainModel(q=[1, 0], P=P1, T=T),
                      MarkovChainModel(q=[0.9, 0.1], P=P2, T=T)))


def test_jacobi_matches_numpy():
    rng = np.random.default_rng(0)
    for n in (2, 3, 5, 8):
        A = rng.random((n, n))
        S = (A + A.T) / 2
        got = jacobi_eigenvalues(S)
        want = np.sort(np.linalg.eigvalsh(S))
        assert np.allclose(got, want, atol=1e-10)


def test_stationary_worked_values():
    assert np.allclose(stationary_distribution(P1), [0.8, 0.2], atol=1e-9)
    assert np.allclose(stationary_distribution(P2), [0.6, 0.4], atol=1e-9)
    doubly = TransitionMatrix([[0.2, 0.5, 0.3], [0.5, 0.3, 0.2], [0.3, 0.2, 0.5]])
    assert np.allclose(stationary_distribution(doubly), np.ones(3) / 3, atol=1e-10)


def test_stationary_rejects_non_mixing():
    with pytest.raises(ValueError, match="does not mix"):
        stationary_distribution(TransitionMatrix(np.eye(2)))
    flip = TransitionMatrix([[0, 1], [1, 0]])
    with pytest.raises(ValueError, match="does not mix"):
        stationary_distribution(flip)


def test_time_reversal():
    for P in (P1, P2):
        pi = stationary_distribution(P)
        rev = time_reversal(P, pi)
        assert np.allclose(rev.rows, P.rows, atol=1e-12)
    # non-reversible 3-state chain: (P*)* = P
    P = TransitionMatrix([[0.1, 0.6, 0.3], [0.2, 0.2, 0.6], [0.5, 0.2, 0.3]])
    pi = stationary_distribution(P)
    rev = time_reversal(P, pi)
    assert np.max(np.abs(rev.rows.sum(axis=1) - 1)) <= 1e-10
    back = time_reversal(rev, pi)
    assert np.allclose(back.rows, P.rows, atol=1e-10)
    assert not is_reversible(P, pi)


def test_eigengap_worked_values():
    assert eigengap(P1, "pp_star") == pytest.approx(0.75, abs=1e-9)
    assert eigengap(P2, "pp_star") == pytest.approx(0.75, abs=1e-9)
    assert eigengap(P1, "reversible") == pytest.approx(1.0, abs=1e-9)


def test_mixing_summary_running_example():
    s = mixing_summary(running_class())
    assert s.pi_min == pytest.approx(0.2, abs=1e-9)
    assert s.g == pytest.approx(0.75, abs=1e-9)
    assert s.reversible
    for pi, want in zip(s.pis, ([0.8, 0.2], [0.6, 0.4])):
        assert np.allclose(pi, want, atol=1e-9)


def test_mixing_summary_passthrough_and_binary():
    mp = MixingParams(0.2, 0.75, 2, 100)
    s = mixing_summary(mp)
    assert s.pi_min == 0.2 and s.g == 0.75
    sb = mixing_summary(BinaryInterval(0.5, 0.5, T=10), mode="reversible")
    assert sb.pi_min == pytest.approx(0.5)
    assert sb.g == pytest.approx(2.0)


def test_binary_interval_summary_matches_direct_minima():
    cls = BinaryInterval(0.3, 0.7, grid_step=0.1, T=20)
    s = mixing_summary(cls)
    pi_min, g = np.inf, np.inf
    for m in cls.expand().matrices:
        pi = stationary_distribution(m)
        pi_min = min(pi_min, pi.min())
        g = min(g, eigengap(m, "pp_star"))
    assert s.pi_min == pytest.approx(pi_min, abs=1e-9)
    assert s.g == pytest.approx(g, abs=1e-9)


def test_influence_bound_values():
    s = MixingSummary(pi_min=0.2, g=0.75, k=2, T=100, reversible=True, mode="pp_star")
    assert influence_bound(s, MarkovQuilt(50, "trivial")) == 0.0
    v = influence_bound(s, MarkovQuilt(50, "pair", 12, 12))
    assert v == pytest.approx(3 * np.log(0.211109 / 0.188891), abs=1e-4)
    assert v == pytest.approx(0.3337, abs=1e-3)
    # below the validity threshold the bound is unusable
    assert influence_bound(s, MarkovQuilt(50, "pair", 2, 12)) == np.inf
    # one-sided shapes keep only their term
    left = influence_bound(s, MarkovQuilt(50, "left", a=12))
    right = influence_bound(s, MarkovQuilt(50, "right", b=12))
    assert v == pytest.approx(left + right, abs=1e-12)


def test_influence_bound_monotone():
    s = MixingSummary(pi_min=0.2, g=0.75, k=2, T=100, reversible=True, mode="pp_star")
    prev = np.inf
    for a in range(5, 30):
        v = influence_bound(s, MarkovQuilt(50, "pair", a, 12))
        assert v < prev or prev == np.inf
        prev = v


def test_a_star():
    s = MixingSummary(pi_min=0.2, g=0.75, k=2, T=100, reversible=True, mode="pp_star")
    assert a_star(s, 1.0) == 12
    prev = np.inf
    for eps in (0.2, 0.5, 1.0, 2.0, 5.0):
        a = a_star(s, eps)
        assert a <= prev
        prev = a
    s2 = MixingSummary(pi_min=0.2, g=1.5, k=2, T=100, reversible=True, mode="pp_star")
    assert a_star(s2, 1.0) <= a_star(s, 1.0)


def test_fast_node_matches_reference():
    s = MixingSummary(pi_min=0.2, g=0.75, k=2, T=60, reversible=True, mode="pp_star")
    for i in (1, 2, 17, 30, 59, 60):
        ref = _approx_sigma_node(s, i, 60, 48, 1.0)
        fast = _approx_sigma_node_fast(s, i, 60, 48, 1.0)
        assert fast[0] == pytest.approx(ref[0], abs=1e-12)
        assert fast[1] == ref[1]


def test_upper_bound_soundness_vs_exact():
    rng = np.random.default_rng(21)
    checked = 0
    for _ in range(50):
        k = int(rng.integers(2, 4))
        A = rng.random((k, k)) + 0.3
        P = TransitionMatrix(A / A.sum(axis=1, keepdims=True))
        pi = stationary_distribution(P)
        T = 30
        th = MarkovChainModel(q=pi, P=P, T=T)
        s = mixing_summary(FiniteSet((th,)))
        thr = 2 * np.log(1 / s.pi_min) / s.g
        i = 15
        for quilt in minimal_quilt_set(i, T, T):
            if quilt.shape == "trivial":
                continue
            if quilt.shape in ("pair", "left") and quilt.a < thr:
                continue
            if quilt.shape in ("pair", "right") and quilt.b < thr:
                continue
            bound = influence_bound(s, quilt)
            exact = exact_max_influence(th, quilt)
            assert bound >= exact - 1e-9
            checked += 1
    assert checked > 100


def test_approx_sigma_at_least_exact():
    cls = running_class(T=60)
    F = builtin_query("rel_freq_histogram", 60, 2)
    for eps in (0.5, 1.0, 2.0):
        pe = mqm_exact_plan(cls, F, eps, 60)
        pa = mqm_approx_plan(cls, F, eps, 60)
        assert pa.sigma_max >= pe.sigma_max - 1e-9


def test_mqm_approx_runs_and_degenerates():
    cls = running_class()
    F = builtin_query("rel_freq_histogram", 100, 2)
    plan = mqm_approx_plan(cls, F, 1.0, 100)
    assert np.isfinite(plan.sigma_max) and plan.sigma_max < 100.0
    ans1, _ = mqm_approx(cls, F, np.zeros(100, int), 1.0, 100, LaplaceSource(1))
    ans2, _ = mqm_approx(cls, F, np.zeros(100, int), 1.0, 100, LaplaceSource(1))
    assert np.array_equal(ans1, ans2)
    # T=1 only has the trivial quilt
    tiny = FiniteSet((MarkovChainModel(q=[0.5, 0.5], P=P1, T=1),))
    assert mqm_approx_plan(tiny, builtin_query("rel_freq_histogram", 1, 2),
                           2.0, 1).sigma_max == pytest.approx(0.5)


def test_t_independence():
    s = mixing_summary(running_class(T=10))
    astar = a_star(s, 1.0)
    base = 8 * astar + 3
    sigmas = []
    for T in (base, 2 * base, 4 * base):
        cls = running_class(T=T)
        F = builtin_query("rel_freq_histogram", T, 2)
        sigmas.append(mqm_approx_plan(cls, F, 1.0, T).sigma_max)
    assert sigmas[0] == sigmas[1] == sigmas[2]


def test_fast_equals_full_search():
    cls = running_class(T=200)
    F = builtin_query("rel_freq_histogram", 200, 2)
    s = mixing_summary(cls)
    astar = a_star(s, 1.0)
    assert 200 >= 8 * astar
    fast = mqm_approx_fast_plan(cls, F, 1.0)
    full = mqm_approx_plan(cls, F, 1.0, 4 * astar)
    assert fast.sigma_max == full.sigma_max
    assert fast.sigma_max <= (4 * astar - 2) / 1.0
    assert fast.notes.get("middle_node_only")
    ans1, _ = mqm_approx_fast(cls, F, np.zeros(200, int), 1.0, LaplaceSource(2))
    ans2, _ = mqm_approx_fast(cls, F, np.zeros(200, int), 1.0, LaplaceSource(2))
    assert np.array_equal(ans1, ans2)


def test_fast_fallback_below_threshold():
    cls = running_class(T=50)
    F = builtin_query("rel_freq_histogram", 50, 2)
    plan = mqm_approx_fast_plan(cls, F, 1.0)
    assert "fallback" in plan.notes
    s = mixing_summary(cls)
    full = mqm_approx_plan(cls, F, 1.0, 4 * a_star(s, 1.0))
    assert plan.sigma_max == full.sigma_max


def test_fast_search_equivalence_random_classes():
    rng = np.random.default_rng(22)
    for _ in range(10):
        pi_min = float(rng.uniform(0.1, 0.45))
        g = float(rng.uniform(0.3, 1.5))
        mp = MixingParams(pi_min, g, 2, 100)
        s = mixing_summary(mp)
        astar = a_star(s, 1.0)
        T = 8 * astar + int(rng.integers(0, 40))
        mp = MixingParams(pi_min, g, 2, T)
        F = builtin_query("rel_freq_histogram", T, 2)
        fast = mqm_approx_fast_plan(mp, F, 1.0)
        full = mqm_approx_plan(mp, F, 1.0, 4 * astar)
        assert fast.sigma_max == full.sigma_max
