from __future__ import annotations

import numpy as np
import pytest
from fractions import Fraction
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from riffle.core import (
    McSummary,
    ProbVector,
    ShuffleGraph,
    SortedStrings,
    ValidationError,
    build_shuffle_graph,
    compose,
    g_modify,
    g_modify_batch,
    identity,
    invert,
    lex_compare,
    parse_string,
    rng_stream,
    run_blocks,
    sample_sorted_sequence,
    string_codes,
)

from conftest import prob_vectors


def S(*strings, k=2):
    return SortedStrings.from_strings([parse_string(s) for s in strings], k)


class TestProbVector:
    def test_parse_and_renormalize(self):
        p = ProbVector.parse("0.3,0.7")
        assert p.k == 2 and sum(p.weights) == 1
        assert p.weights == (Fraction(3, 10), Fraction(7, 10))

    def test_tiny_drift_is_renormalized_exactly(self):
        p = ProbVector((0.5 + 4e-10, 0.5))
        assert sum(p.weights) == 1

    @pytest.mark.parametrize("text", ["0.5,0.5,0.5", "1.0", "0.5,-0.5,1", "0,1", "a,b", "0.5,0.5000001"])
    def test_rejects(self, text):
        with pytest.raises(ValidationError):
            ProbVector.parse(text)

    def test_extremes_smallest_index_on_ties(self):
        p = ProbVector.parse("0.4,0.2,0.4")
        assert p.i_max == 0 and p.i_min == 1
        assert p.p_max == pytest.approx(0.4) and p.p_min == pytest.approx(0.2)

    def test_uniform(self):
        assert ProbVector.uniform(3).is_uniform
        assert not ProbVector.parse("0.3,0.7").is_uniform


class TestStrings:
    def test_lex_compare_examples(self):
        assert lex_compare(parse_string("010"), parse_string("010")) == 0
        assert lex_compare(parse_string("010"), parse_string("11")) == -1
        assert lex_compare(parse_string("11"), parse_string("110")) == -1
        assert lex_compare(parse_string("2"), parse_string("11")) == 1

    @given(st.lists(st.integers(0, 2), min_size=1, max_size=6), st.lists(st.integers(0, 2), min_size=1, max_size=6))
    def test_lex_matches_base_k_value_for_equal_lengths(self, a, b):
        n = min(len(a), len(b))
        a, b = a[:n], b[:n]
        va = int("".join(map(str, a)), 3)
        vb = int("".join(map(str, b)), 3)
        assert lex_compare(a, b) == (va > vb) - (va < vb)

    def test_codes_preserve_order(self, rng):
        d = rng.integers(0, 3, size=(200, 7))
        codes = string_codes(d, 3)
        rows = [tuple(r) for r in d]
        assert np.array_equal(np.argsort(codes, kind="stable"), np.array(sorted(range(200), key=lambda i: (rows[i], i))))


class TestSampling:
    def test_rejects_empty(self, rng):
        p = ProbVector.uniform(2)
        with pytest.raises(ValidationError):
            sample_sorted_sequence(p, 0, 3, rng)
        with pytest.raises(ValidationError):
            sample_sorted_sequence(p, 3, 0, rng)

    def test_sorted_and_reproducible(self):
        p = ProbVector.parse("0.3,0.7")
        a = sample_sorted_sequence(p, 50, 6, rng_stream(7, 3))
        b = sample_sorted_sequence(p, 50, 6, rng_stream(7, 3))
        c = sample_sorted_sequence(p, 50, 6, rng_stream(7, 4))
        assert np.array_equal(a.digits, b.digits)
        assert not np.array_equal(a.digits, c.digits)
        assert a.strings == sorted(a.strings)

    def test_single_string_is_fair(self):
        p = ProbVector.uniform(2)
        draws = [sample_sorted_sequence(p, 1, 1, rng_stream(1, i))[0][0] for i in range(4000)]
        assert abs(np.mean(draws) - 0.5) < 4 * 0.5 / np.sqrt(4000)

    def test_all_equal_probability(self):
        # P[all four strings are "00"] = (1/4)^4
        p = ProbVector.uniform(2)
        g = rng_stream(2)
        hits = sum(all(s == (0, 0) for s in sample_sorted_sequence(p, 4, 2, g).strings) for _ in range(40000))
        expected = 40000 / 256
        assert abs(hits - expected) < 4 * np.sqrt(expected)

    def test_first_digit_frequency(self):
        p = ProbVector.parse("0.3,0.7")
        S_ = sample_sorted_sequence(p, 10**6, 1, rng_stream(3))
        assert abs((S_.digits[:, 0] == 0).mean() - 0.3) < 0.002

    def test_count_of_fixed_string_is_binomial(self):
        p = ProbVector.parse("0.3,0.7")
        g = rng_stream(4)
        counts = [sum(s == (1, 0) for s in sample_sorted_sequence(p, 20, 2, g).strings) for _ in range(4000)]
        lam = 0.7 * 0.3
        obs = np.bincount(counts, minlength=21)[:21]
        exp = stats.binom.pmf(np.arange(21), 20, lam) * 4000
        keep = exp > 5
        obs_k = np.append(obs[keep], obs[~keep].sum())
        exp_k = np.append(exp[keep], exp[~keep].sum())
        assert stats.chisquare(obs_k, exp_k * obs_k.sum() / exp_k.sum()).pvalue > 1e-3


class TestGraphs:
    def test_examples(self):
        assert build_shuffle_graph(S("00", "00", "01", "11")).edge_set() == {(1, 2)}
        assert build_shuffle_graph(S("01", "01", "01", "01")).num_edges == 3
        assert build_shuffle_graph(S("00", "01", "10", "11")).num_edges == 0

    def test_components_are_equal_runs(self, rng):
        p = ProbVector.uniform(2)
        for _ in range(20):
            seq = sample_sorted_sequence(p, 30, 3, rng)
            G = build_shuffle_graph(seq)
            sizes = G.component_sizes()
            assert sum(sizes) == 30
            runs = [len(list(g)) for _, g in __import__("itertools").groupby(seq.strings)]
            assert sizes == runs

    def test_from_edges_validation(self):
        with pytest.raises(ValidationError):
            ShuffleGraph.from_edges(3, [(1, 3)])
        with pytest.raises(ValidationError):
            ShuffleGraph.from_edges(3, [(3, 4)])


class TestPermutations:
    def test_g_modify_examples(self):
        assert g_modify((3, 1, 2), ShuffleGraph.from_edges(3, [(1, 2)])) == (1, 3, 2)
        assert g_modify((3, 1, 2), ShuffleGraph.empty(3)) == (3, 1, 2)
        assert g_modify((3, 2, 1), ShuffleGraph.from_edges(3, [(1, 2), (2, 3)])) == (1, 2, 3)
        with pytest.raises(ValidationError):
            g_modify((1, 2), ShuffleGraph.empty(3))

    def test_invert_examples(self):
        assert invert((1, 2, 3)) == (1, 2, 3)
        assert invert((2, 3, 1)) == (3, 1, 2)

    @given(st.permutations(list(range(1, 9))), st.lists(st.booleans(), min_size=7, max_size=7))
    def test_g_modify_properties(self, pi, edges):
        G = ShuffleGraph(8, np.array(edges))
        out = g_modify(pi, G)
        assert g_modify(out, G) == out
        ids = G.component_ids()
        for c in set(ids.tolist()):
            pos = np.flatnonzero(ids == c)
            assert sorted(pi[i] for i in pos) == [out[i] for i in pos]

    @given(st.permutations(list(range(1, 9))))
    def test_inverse(self, pi):
        pi = tuple(pi)
        assert compose(pi, invert(pi)) == identity(8)
        assert invert(invert(pi)) == pi

    def test_batch_matches_scalar(self, rng):
        pis = np.argsort(rng.random((50, 9)), axis=1)
        edges = rng.random((50, 8)) < 0.4
        out = g_modify_batch(pis, edges)
        for r in range(50):
            G = ShuffleGraph(9, edges[r])
            assert tuple(out[r] + 1) == g_modify(tuple(pis[r] + 1), G)


class TestRuns:
    def test_blocks_independent_of_threads(self):
        fn = lambda g, n: g.random(n)
        a = run_blocks(fn, 5000, seed=9, threads=1, block=512)
        b = run_blocks(fn, 5000, seed=9, threads=4, block=512)
        assert a.shape == (5000,) and np.array_equal(a, b)

    def test_summary(self):
        s = McSummary.from_values([1.0, 2.0, 3.0, 4.0], seed=0)
        assert s.mean == 2.5
        assert s.se == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2)
