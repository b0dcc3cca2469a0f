"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with `pytest tests/test_acceptance.py -s` to see the lines as they pass;
pytest shows captured output for failures either way.
"""

import time
from itertools import combinations
from math import comb

import numpy as np
import pytest

from pufferfish import (DiscreteDistribution, FiniteSet, GroupStructure,
                        JointModel, LaplaceSource, LipschitzQuery,
                        MarkovChainModel, MarkovQuilt, TransitionMatrix,
                        brute_force_max_influence, builtin_query, eigengap,
                        exact_max_influence, group_dp_scale,
                        group_sensitivity, influence_bound, max_divergence,
                        minimal_quilt_set, mixing_summary, score,
                        stationary_distribution, symmetric_max_divergence,
                        w_infinity, w_infinity_oracle, wasserstein_scale)
from pufferfish.approx import a_star, mqm_approx_fast_plan, mqm_approx_plan
from pufferfish.baselines import ChainSegmentation
from pufferfish.cli import run_bench
from pufferfish.quilt import brute_force_influence_nodes, mqm_exact_plan

P1 = TransitionMatrix([[0.9, 0.1], [0.4, 0.6]])
P2 = TransitionMatrix([[0.8, 0.2], [0.3, 0.7]])


def running_class(T=100):
    return FiniteSet((MarkovChainModel(q=[1, 0], P=P1, T=T),
                      MarkovChainModel(q=[0.9, 0.1], P=P2, T=T)))


def report(n, desc, fn):
    t0 = time.monotonic()
    try:
        fn()
    except Exception:
        print(f"criterion {n} ({desc}): FAIL")
        raise
    print(f"criterion {n} ({desc}): PASS [{time.monotonic() - t0:.1f}s]")


def test_criterion_1_running_example_mqm_exact():
    def body():
        t0 = time.monotonic()
        cls = running_class()
        F = builtin_query("rel_freq_histogram", 100, 2)
        plan = mqm_exact_plan(cls, F, 1.0, 100)
        assert plan.sigma_max == pytest.approx(13.0219, abs=1e-3)
        worst = max(plan.per_node, key=lambda d: d["sigma"])
        assert worst["node"] == 8
        assert worst["quilt"] == {"i": 8, "shape": "pair", "a": 5, "b": 5}
        q = MarkovQuilt(**worst["quilt"])
        assert q.nodes(100) == (3, 13)
        t2 = [t for t in plan.per_theta if t["theta_index"] == 1][0]
        assert t2["sigma_max"] == pytest.approx(10.6402, abs=1e-3)
        assert t2["node"] == 6
        assert MarkovQuilt(**t2["quilt"]).nodes(100) == (10,)
        assert time.monotonic() - t0 < 30.0
    report(1, "running example MQMExact", body)


def test_criterion_2_composition_example():
    def body():
        t0 = time.monotonic()
        th = MarkovChainModel(q=[0.8, 0.2], P=P1, T=3)
        expected = {"trivial": (0.3, 0.0), "left": (0.2437, np.log(6)),
                    "right": (0.2437, np.log(6)), "pair": (0.1558, np.log(36))}
        best = None
        for q in minimal_quilt_set(2, 3, 3):
            e = exact_max_influence(th, q)
            s = score(q, e, 10.0, 3)
            want_s, want_e = expected[q.shape]
            assert s == pytest.approx(want_s, abs=1e-4)
            assert e == pytest.approx(want_e, abs=1e-9)
            if best is None or s < best[0]:
                best = (s, q)
        assert best[1].nodes(3) == (1, 3)
        assert time.monotonic() - t0 < 1.0
    report(2, "composition example node X_2", body)


def flu_model():
    c = [0.1, 0.15, 0.5, 0.15, 0.1]
    table = np.zeros((2,) * 4)
    for idx in np.ndindex(table.shape):
        s = sum(idx)
        table[idx] = c[s] / comb(4, s)
    return JointModel(n=4, domain_size=2, joint=table)


def test_criterion_3_wasserstein():
    def body():
        t0 = time.monotonic()
        F = LipschitzQuery("count", 2.0, 1,
                           lambda x: np.array([float(np.sum(x))]))
        # flu example 1: full secret-pair sweep over the joint model
        W, _ = wasserstein_scale([flu_model()], F)
        assert W == 2.0
        # flu example 2: the worked conditional pair, directly
        mu = DiscreteDistribution.from_weights([0, 1, 2, 3],
                                               [0.2, 0.225, 0.5, 0.075])
        nu = DiscreteDistribution.from_weights([1, 2, 3, 4],
                                               [0.075, 0.5, 0.225, 0.2])
        assert w_infinity(mu, nu) == 2.0
        assert w_infinity_oracle(mu, nu) == 2.0
        rng = np.random.default_rng(30)
        for _ in range(200):
            n = int(rng.integers(2, 9))
            v1 = np.sort(rng.random(n) * 10)
            v2 = np.sort(rng.random(n) * 10)
            p = DiscreteDistribution.from_weights(v1, rng.random(n) + 0.05)
            q = DiscreteDistribution.from_weights(v2, rng.random(n) + 0.05)
            assert w_infinity(p, q) == pytest.approx(w_infinity_oracle(p, q),
                                                     abs=1e-12)
        assert time.monotonic() - t0 < 10.0
    report(3, "Wasserstein flu examples + oracle", body)


def test_criterion_4_mixing_parameters():
    def body():
        t0 = time.monotonic()
        assert np.allclose(stationary_distribution(P1), [0.8, 0.2], atol=1e-9)
        assert np.allclose(stationary_distribution(P2), [0.6, 0.4], atol=1e-9)
        s = mixing_summary(running_class())
        assert s.pi_min == pytest.approx(0.2, abs=1e-9)
        assert s.g == pytest.approx(0.75, abs=1e-9)
        assert eigengap(P1, "pp_star") == pytest.approx(0.75, abs=1e-9)
        assert time.monotonic() - t0 < 1.0
    report(4, "mixing parameters", body)


def test_criterion_5_max_divergence_worked_values():
    def body():
        p = DiscreteDistribution.from_weights([1, 2, 3], [1 / 3, 1 / 2, 1 / 6])
        q = DiscreteDistribution.from_weights([1, 2, 3], [1 / 2, 1 / 4, 1 / 4])
        assert max_divergence(p, q) == pytest.approx(np.log(2), abs=1e-3)
        r1 = DiscreteDistribution.from_weights([1, 2], [0.9474, 0.0526])
        r2 = DiscreteDistribution.from_weights([1, 2], [0.0104, 0.9896])
        assert symmetric_max_divergence(r1, r2) == \
            pytest.approx(np.log(91.0962), abs=1e-3)
    report(5, "max-divergence worked values", body)


def random_chain(rng, T=None, k=None):
    T = T or int(rng.integers(3, 7))
    k = k or int(rng.integers(2, 4))
    P = rng.random((k, k)) + 0.1
    P = P / P.sum(axis=1, keepdims=True)
    q = rng.random(k) + 0.1
    q = q / q.sum()
    return MarkovChainModel(q=q, P=TransitionMatrix(P), T=T)


def all_subsets_min_score(th, i, epsilon):
    T = th.T
    others = [n for n in range(1, T + 1) if n != i]
    best = T / epsilon
    for r in range(1, T):
        for Q in combinations(others, r):
            left = max([n for n in Q if n < i], default=0)
            right = min([n for n in Q if n > i], default=T + 1)
            N = right - left - 1
            e = brute_force_influence_nodes(th, i, Q)
            if e < epsilon:
                best = min(best, N / (epsilon - e))
    return best


def test_criterion_6_oracle_equivalence():
    def body():
        rng = np.random.default_rng(31)
        worst = 0.0
        for _ in range(100):
            th = random_chain(rng)
            qs = minimal_quilt_set(int(rng.integers(1, th.T + 1)), th.T, th.T)
            q = qs[int(rng.integers(0, len(qs)))]
            e1 = exact_max_influence(th, q)
            e2 = brute_force_max_influence(th, q)
            if np.isinf(e1) or np.isinf(e2):
                assert e1 == e2
            else:
                worst = max(worst, abs(e1 - e2))
        assert worst <= 1e-9
        for _ in range(20):
            th = random_chain(rng, T=int(rng.integers(3, 7)), k=2)
            i = int(rng.integers(1, th.T + 1))
            eps = float(rng.uniform(4.0, 10.0))
            mins = min(score(q, exact_max_influence(th, q), eps, th.T)
                       for q in minimal_quilt_set(i, th.T, th.T))
            brute = all_subsets_min_score(th, i, eps)
            assert mins == pytest.approx(brute, abs=1e-9)
    report(6, "oracle equivalence", body)


def test_criterion_7_soundness_ordering():
    def body():
        rng = np.random.default_rng(32)
        done = 0
        while done < 50:
            k = int(rng.integers(2, 4))
            A = rng.random((k, k)) + 0.3
            P = TransitionMatrix(A / A.sum(axis=1, keepdims=True))
            pi = stationary_distribution(P)
            T = 24
            th = MarkovChainModel(q=pi, P=P, T=T)
            cls = FiniteSet((th,))
            s = mixing_summary(cls)
            thr = 2 * np.log(1 / s.pi_min) / s.g
            for i in (1, T // 2, T):
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
            F = builtin_query("rel_freq_histogram", T, k)
            eps = float(rng.uniform(0.3, 2.0))
            pa = mqm_approx_plan(cls, F, eps, T)
            pe = mqm_exact_plan(cls, F, eps, T)
            assert pa.sigma_max >= pe.sigma_max - 1e-9
            done += 1
    report(7, "soundness ordering", body)


def test_criterion_8_t_independence():
    def body():
        s = mixing_summary(running_class(T=10))
        astar = a_star(s, 1.0)
        base = 8 * astar + 3
        sigmas = []
        for T in (base, 2 * base, 4 * base):
            cls = running_class(T=T)
            F = builtin_query("rel_freq_histogram", T, 2)
            sigmas.append(mqm_approx_plan(cls, F, 1.0, T).sigma_max)
        assert sigmas[0] == sigmas[1] == sigmas[2]
        for T in (8 * astar, 200, 8 * astar + 37):
            cls = running_class(T=T)
            F = builtin_query("rel_freq_histogram", T, 2)
            fast = mqm_approx_fast_plan(cls, F, 1.0)
            full = mqm_approx_plan(cls, F, 1.0, 4 * astar)
            assert fast.sigma_max == full.sigma_max
    report(8, "T-independence", body)


def test_criterion_9_group_dp_anchor():
    def body():
        F = builtin_query("state_frequency(1)", 100, 2)
        seg = ChainSegmentation(((0, 100),))
        src = LaplaceSource(40)
        for eps, anchor in ((0.2, 5.0), (1.0, 1.0), (5.0, 0.2)):
            scale = group_dp_scale(F, seg, eps)
            errs = np.abs(src.derive(int(eps * 10)).sample(scale, 10_000))
            assert abs(errs.mean() - anchor) <= 0.1 * anchor
    report(9, "GroupDP baseline anchor", body)


def test_criterion_10_benchmark_trend():
    def body():
        t0 = time.monotonic()
        alphas = [0.1, 0.2, 0.3, 0.4]
        epsilons = [0.2, 1.0, 5.0]
        rows = run_bench(alphas, epsilons, ["mqm_exact", "mqm_approx"],
                         T=100, grid_step=0.02, trials=500, seed=41)
        mean = {(r[0], r[1], r[2]): r[3] for r in rows[1:]}
        for a in alphas:
            for e in epsilons:
                assert mean[(a, e, "mqm_exact")] <= \
                    mean[(a, e, "mqm_approx")] + 1e-12
        for mech in ("mqm_exact", "mqm_approx"):
            for e in epsilons:
                for lo, hi in zip(alphas, alphas[1:]):
                    assert mean[(hi, e, mech)] <= 1.05 * mean[(lo, e, mech)]
        assert time.monotonic() - t0 < 600.0
    report(10, "benchmark trend", body)


def test_criterion_11_wasserstein_vs_group_dp():
    def body():
        rng = np.random.default_rng(42)
        for _ in range(100):
            n = int(rng.integers(2, 5))
            dom = int(rng.integers(2, 4))
            cut = int(rng.integers(1, n)) if n > 1 else 1
            groups = GroupStructure((tuple(range(1, cut + 1)),
                                     tuple(range(cut + 1, n + 1))) if cut < n
                                    else (tuple(range(1, n + 1)),))
            table = np.ones((dom,) * n)
            for g in groups.groups:
                marg = rng.random((dom,) * len(g)) + 0.05
                marg /= marg.sum()
                shape = [dom if (i + 1) in g else 1 for i in range(n)]
                table = table * marg.reshape(shape)
            m = JointModel(n=n, domain_size=dom, joint=table)
            w = rng.random(n)
            F = LipschitzQuery("wsum", float(w.max()), 1,
                               lambda x, w=w: np.array([float(w @ x)]))
            W, _ = wasserstein_scale([m], F)
            assert W <= group_sensitivity(n, dom, F, groups) + 1e-12
    report(11, "Wasserstein scale vs group sensitivity", body)
