"""Tests for the submodular-supermodular solver.

Oracles: exhaustive enumeration of cut values for the modular bound, and
brute-force minimization for solution quality on submodular instances
(where the solver must certify a global optimum).
"""

import itertools

import numpy as np
import pytest

from pbopt.chargraph import CharGraph
from pbopt.essp import (ModularFn, consistent_permutation, essp_minimize,
                        essp_refine_local, modular_approximation)
from pbopt.qpbf import Labeling, Qpbf, brute_force_min, evaluate


def negative_graph(rng, n, density=0.7, scale=3.0):
    g = CharGraph(n)
    for u in range(n):
        for v in range(u + 1, n):
            if rng.random() < density:
                g.add_variable_edge(u, v, float(-rng.uniform(0.01, scale)))
    return g


def cut_of_bits(g, bits):
    x = Labeling(np.array(bits, dtype=np.int8))
    return g.cut_value(x)


def random_qpbf(rng, n, density=0.5, scale=3.0):
    quad = {}
    for u in range(n):
        for v in range(u + 1, n):
            if rng.random() < density:
                quad[(u, v)] = float(rng.uniform(-scale, scale))
    linear = rng.uniform(-scale, scale, size=n)
    return Qpbf.from_standard(n, linear, quad, float(rng.uniform(-1, 1)))


class TestModularApproximation:
    def test_single_edge_both_orders(self):
        g = CharGraph(2)
        g.add_variable_edge(0, 1, -2.0)
        m = modular_approximation(g, np.array([0, 1]))
        assert m.weights.tolist() == [-2.0, 2.0]
        assert m.const == 0.0
        m = modular_approximation(g, np.array([1, 0]))
        assert m.weights.tolist() == [2.0, -2.0]

    def test_dominates_and_tight_on_prefixes(self):
        rng = np.random.default_rng(61)
        for _ in range(30):
            n = int(rng.integers(2, 8))
            g = negative_graph(rng, n)
            perm = rng.permutation(n)
            m = modular_approximation(g, perm)
            for bits in itertools.product([0, 1], repeat=n):
                gv = cut_of_bits(g, bits)
                mv = m.evaluate(np.array(bits))
                assert mv >= gv - 1e-9
            for k in range(n + 1):
                bits = np.zeros(n, dtype=np.int8)
                bits[perm[:k]] = 1
                gv = cut_of_bits(g, bits)
                mv = m.evaluate(bits)
                assert mv == pytest.approx(gv, abs=1e-9)

    def test_rejects_positive_capacity(self):
        g = CharGraph(2)
        g.add_variable_edge(0, 1, 1.0)
        with pytest.raises(ValueError):
            modular_approximation(g, np.array([0, 1]))

    def test_rejects_bad_permutation(self):
        g = CharGraph(3)
        with pytest.raises(ValueError):
            modular_approximation(g, np.array([0, 1, 1]))

    def test_empty_graph(self):
        g = CharGraph(3)
        m = modular_approximation(g, np.array([2, 0, 1]))
        assert m.weights.tolist() == [0.0, 0.0, 0.0]


class TestConsistentPermutation:
    def test_ones_precede_zeros(self):
        rng = np.random.default_rng(67)
        for _ in range(20):
            n = int(rng.integers(1, 12))
            x = rng.integers(0, 2, size=n).astype(np.int8)
            perm = consistent_permutation(x, rng)
            assert sorted(perm.tolist()) == list(range(n))
            k = int(x.sum())
            assert set(perm[:k].tolist()) == set(np.flatnonzero(x == 1).tolist())

    def test_seeded_reproducibility(self):
        x = np.array([1, 0, 1, 0, 1], dtype=np.int8)
        p1 = consistent_permutation(x, np.random.default_rng(3))
        p2 = consistent_permutation(x, np.random.default_rng(3))
        assert np.array_equal(p1, p2)


class TestEsspSubmodular:
    def test_certifies_and_matches_brute_force(self):
        rng = np.random.default_rng(71)
        for _ in range(15):
            n = int(rng.integers(2, 9))
            quad = {}
            for u in range(n):
                for v in range(u + 1, n):
                    if rng.random() < 0.6:
                        quad[(u, v)] = float(-rng.uniform(0.01, 3))
            f = Qpbf.from_standard(n, rng.uniform(-2, 2, size=n), quad, 0.5)
            report = essp_minimize(f)
            assert report.certified
            assert report.iterations == 0
            best_x, best_e = brute_force_min(f)
            assert report.energy == best_e
            assert report.labeling == best_x

    def test_unary_only(self):
        f = Qpbf(2)
        f.unary[0] = (1.0, -2.0)
        f.unary[1] = (0.0, 4.0)
        report = essp_minimize(f)
        assert report.certified
        assert report.labeling.values.tolist() == [1, 0]
        assert report.energy == pytest.approx(-2.0)

    def test_suppression_can_certify_nonsubmodular_input(self):
        # one positive quadratic flips away entirely
        f = Qpbf.from_standard(2, np.array([0.5, -0.3]), {(0, 1): 2.0}, 0.0)
        report = essp_minimize(f)
        assert report.certified
        assert report.n_flips >= 1
        _, best_e = brute_force_min(f)
        assert report.energy == best_e


class TestEsspIterative:
    def test_descent_and_consistency(self):
        rng = np.random.default_rng(73)
        hit_iterative = 0
        for _ in range(25):
            n = int(rng.integers(3, 10))
            f = random_qpbf(rng, n, density=0.8)
            init = Labeling(rng.integers(0, 2, size=n).astype(np.int8))
            report = essp_minimize(f, init=init, seed=5)
            assert report.energy == evaluate(f, report.labeling)
            assert report.energy <= evaluate(f, init) + 1e-9
            hist = report.energy_history
            assert all(b < a + 1e-12 for a, b in zip(hist, hist[1:]))
            assert report.iterations <= 100
            if not report.certified:
                hit_iterative += 1
                assert abs(hist[-1] - report.energy) < 1e-6
        assert hit_iterative > 0

    def test_callback_reports_improvements(self):
        rng = np.random.default_rng(79)
        f = random_qpbf(rng, 8, density=0.9)
        seen = []
        report = essp_minimize(
            f, seed=2,
            on_improvement=lambda it, e, lab: seen.append((it, e, lab.copy())))
        assert seen[0][0] == 0
        assert [e for _, e, _ in seen] == pytest.approx(report.energy_history)
        for it, e, lab in seen:
            assert lab.is_complete
            assert evaluate(f, lab) == pytest.approx(e, abs=1e-6)

    def test_seed_reproducibility(self):
        rng = np.random.default_rng(83)
        f = random_qpbf(rng, 10, density=0.7)
        r1 = essp_minimize(f, seed=11)
        r2 = essp_minimize(f, seed=11)
        assert r1.labeling == r2.labeling
        assert r1.energy == r2.energy
        assert r1.energy_history == r2.energy_history

    def test_quality_close_to_optimum_small(self):
        rng = np.random.default_rng(89)
        gaps = []
        for _ in range(20):
            f = random_qpbf(rng, 8, density=0.8)
            report = essp_minimize(f, seed=1)
            _, best_e = brute_force_min(f)
            assert report.energy >= best_e - 1e-9
            gaps.append(report.energy - best_e)
        # the heuristic should land on the optimum for most small instances
        assert sum(1 for gap in gaps if gap < 1e-9) >= 12

    def test_rejects_partial_init(self):
        f = Qpbf(3)
        with pytest.raises(ValueError):
            essp_minimize(f, init=Labeling.empty(3))


class TestRefineLocal:
    def test_fixed_variables_unchanged(self):
        rng = np.random.default_rng(97)
        for _ in range(10):
            n = 8
            f = random_qpbf(rng, n, density=0.8)
            init = Labeling(rng.integers(0, 2, size=n).astype(np.int8))
            free = rng.choice(n, size=4, replace=False)
            report = essp_refine_local(f, init, free, seed=3)
            fixed = [u for u in range(n) if u not in set(free.tolist())]
            for u in fixed:
                assert report.labeling.values[u] == init.values[u]
            assert report.energy <= evaluate(f, init) + 1e-9
            assert report.energy == evaluate(f, report.labeling)

    def test_restricted_optimality_exhaustive(self):
        # with a submodular restriction the free block must be solved exactly
        rng = np.random.default_rng(101)
        n = 6
        quad = {(u, v): float(-rng.uniform(0.1, 2))
                for u in range(n) for v in range(u + 1, n)}
        f = Qpbf.from_standard(n, rng.uniform(-2, 2, size=n), quad, 0.0)
        init = Labeling(rng.integers(0, 2, size=n).astype(np.int8))
        free = [1, 3, 4]
        report = essp_refine_local(f, init, free, seed=7)
        best = np.inf
        for bits in itertools.product([0, 1], repeat=len(free)):
            x = init.copy()
            for u, b in zip(free, bits):
                x.values[u] = b
            best = min(best, evaluate(f, x))
        assert report.energy == pytest.approx(best, abs=1e-9)

    def test_empty_free_set_returns_init(self):
        f = Qpbf(4)
        init = Labeling(np.array([1, 0, 1, 1], dtype=np.int8))
        report = essp_refine_local(f, init, [])
        assert report.labeling == init
        assert report.iterations == 0

    def test_all_free_matches_full_solver_energy(self):
        rng = np.random.default_rng(103)
        f = random_qpbf(rng, 7, density=0.8)
        init = Labeling(np.zeros(7, dtype=np.int8))
        r_full = essp_minimize(f, init=init, seed=9)
        r_free = essp_refine_local(f, init, range(7), seed=9)
        assert r_free.energy == r_full.energy
        assert r_free.labeling == r_full.labeling

    def test_rejects_out_of_range_ids(self):
        f = Qpbf(3)
        init = Labeling(np.zeros(3, dtype=np.int8))
        with pytest.raises(ValueError):
            essp_refine_local(f, init, [5])
