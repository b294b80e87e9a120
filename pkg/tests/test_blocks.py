from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from riffle.blocks import (
    DigitProfile,
    block_interval,
    blocks_decompose,
    build_stable_partition,
    c_x_closed_form,
    c_x_max,
    digit_profile,
    prefix_interval,
)
from riffle.constants import cutoff_constants, rate_I, theta, tilt
from riffle.core import ProbVector, SortedStrings, ValidationError, parse_string, rng_stream, sample_sorted_sequence

from conftest import prob_vectors, random_p

U2 = ProbVector.uniform(2)
THIRDS = ProbVector((Fraction(1, 3), Fraction(2, 3)))


def strs(k, K):
    return list(itertools.product(range(k), repeat=K))


class TestPrefixInterval:
    def test_examples(self):
        assert prefix_interval(THIRDS, (0, 0, 0)).t == 0
        J = prefix_interval(THIRDS, parse_string("11"))
        assert J.t == Fraction(5, 9) and J.lam == Fraction(4, 9) and J.end == 1

    @given(prob_vectors(k_max=4), st.integers(1, 4))
    def test_partition(self, p, M):
        Js = [prefix_interval(p, x) for x in strs(p.k, M)]
        assert sum(J.lam for J in Js) == 1
        assert Js[0].t == 0
        assert all(a.end == b.t for a, b in zip(Js, Js[1:]))

    def test_end_is_cdf(self):
        p = ProbVector.parse("0.2,0.5,0.3")
        xs = strs(3, 3)
        lam = {x: prefix_interval(p, x).lam for x in xs}
        for x in xs:
            assert prefix_interval(p, x).end == sum(lam[y] for y in xs if y <= x)


class TestDigitProfile:
    def test_examples(self):
        N = 1000
        L = math.log(N)
        d = digit_profile(parse_string("0011"), N, U2)
        assert d.b0 * L == pytest.approx(2) and d.bk1 == 0
        assert d.c[0] == 0 and d.c[1] * L == pytest.approx(2)
        e = digit_profile((), N, U2)
        assert (e.b0, e.bk1, e.c_tot) == (0, 0, 0)
        assert (e.c_L, e.c_F, e.c_D) == (1.0, 0.5, 0.5)

    def test_rejects(self):
        with pytest.raises(ValidationError):
            digit_profile((0, 1), 2, U2)
        with pytest.raises(ValidationError):
            DigitProfile(0.1, 0.1, (0, 0), U2)

    def test_c_L_is_log_lambda(self):
        rng = np.random.default_rng(0)
        p = ProbVector.parse("0.2,0.5,0.3")
        N = 5000
        for _ in range(100):
            x = tuple(int(v) for v in rng.integers(0, 3, size=rng.integers(0, 20)))
            lam = float(prefix_interval(p, x).lam)
            assert digit_profile(x, N, p).c_L == pytest.approx(1 + math.log(lam) / math.log(N), abs=1e-12)

    def test_c_E_negative_below_K(self):
        d = digit_profile((0, 1, 1), 1000, U2, K=20)
        assert d.c_E < 0
        with pytest.raises(ValidationError):
            digit_profile((0, 1), 1000, U2).c_E


class TestStablePartition:
    @pytest.mark.parametrize("K", [1, 5, 9, 14])
    @pytest.mark.parametrize("N", [50, 1000])
    def test_exhaustive_cover(self, N, K):
        part = build_stable_partition(U2, N, K, delta=0.05)
        leaves = part.prefixes()
        assert leaves == sorted(leaves)
        for s in strs(2, K):
            assert sum(s[: len(x)] == x for x in leaves) == 1
        assert sum(l.lam for l in part.leaves) == pytest.approx(1, abs=1e-12)

    def test_cover_skewed(self):
        p = ProbVector.parse("0.3,0.7")
        part = build_stable_partition(p, 200, 12, delta=0.05)
        owners = {}
        for x in part.prefixes():
            pad = 12 - len(x)
            for tail in strs(2, pad):
                s = x + tail
                assert s not in owners
                owners[s] = x
        assert len(owners) == 2**12

    def test_leaves_are_stable(self):
        p = ProbVector.parse("0.4,0.6")
        N = 10**6
        K = math.ceil((cutoff_constants(p).Cunder + 0.5) * math.log(N))
        delta = 0.05
        part = build_stable_partition(p, N, K, delta)
        for leaf in part.leaves:
            assert leaf.c_L >= 2 * delta and leaf.c_F >= delta
            assert len(leaf.x) < K

    def test_c_D_monotone_and_lipschitz(self):
        p = ProbVector.parse("0.25,0.45,0.3")
        N = 10**5
        step = max(-math.log(w) for w in p.array) / math.log(N)
        part = build_stable_partition(p, N, 30, 0.05)
        for leaf in part.leaves[:: max(1, len(part.leaves) // 200)]:
            path = [digit_profile(leaf.x[:i], N, p).c_D for i in range(len(leaf.x) + 1)]
            assert all(0 <= a - b <= step + 1e-12 for a, b in zip(path, path[1:]))
            assert path[-1] == pytest.approx(leaf.c_D, abs=1e-12)

    def test_csv(self):
        text = build_stable_partition(U2, 100, 6).to_csv()
        assert text.splitlines()[0] == "prefix,length,lambda,c_L,c_F,c_D"

    def test_rejects(self):
        with pytest.raises(ValidationError):
            build_stable_partition(U2, 100, 6, delta=0)
        with pytest.raises(ValidationError):
            build_stable_partition(U2, 10**6, 40, delta=0.01, max_leaves=10)


class TestBlockInterval:
    def test_examples(self):
        S = SortedStrings.from_strings([parse_string(s) for s in ("00", "01", "01", "11")], 2)
        assert block_interval(S, ()) == (1, 4)
        assert block_interval(S, (0, 1)) == (2, 3)
        assert block_interval(S, (1, 0)) == (4, 3)

    def test_size_is_binomial_mean(self):
        p = ProbVector.parse("0.3,0.7")
        x = (1, 0, 1)
        lam = float(prefix_interval(p, x).lam)
        g = rng_stream(5)
        sizes = []
        for _ in range(10**4):
            iota, tau = block_interval(sample_sorted_sequence(p, 40, 4, g), x)
            sizes.append(tau - iota + 1)
        se = math.sqrt(40 * lam * (1 - lam) / 10**4)
        assert abs(np.mean(sizes) - 40 * lam) < 3 * se


def _between(sa, sb, k, K):
    return [s for s in strs(k, K) if sa < s < sb]


def _covered(prefixes, k, K):
    out = []
    for x in prefixes:
        out.extend(x + t for t in strs(k, K - len(x)))
    return out


class TestDecompose:
    def test_examples(self):
        assert blocks_decompose(parse_string("010"), parse_string("11"), 3) == [(0, 1, 1), (1, 0)]
        assert blocks_decompose((0, 1, 1), (1, 0, 0), 3) == []
        with pytest.raises(ValidationError):
            blocks_decompose((1,), (0,), 3)

    @pytest.mark.parametrize("k,K", [(2, 5), (3, 4)])
    def test_exhaustive(self, k, K):
        every = [s for M in range(0, K + 1) for s in strs(k, M)]
        for sa, sb in itertools.combinations(sorted(every), 2):
            blocks = blocks_decompose(sa, sb, K, k)
            assert len(blocks) <= 2 * K * k
            cov = _covered(blocks, k, K)
            assert len(cov) == len(set(cov))
            assert sorted(cov) == _between(sa, sb, k, K)


class TestCxMax:
    def test_closed_form_examples(self):
        cp = cutoff_constants(U2).C
        assert c_x_closed_form(U2, cp) == pytest.approx(0, abs=1e-12)
        assert c_x_closed_form(U2, 2.0) == pytest.approx(3 - 4 * math.log(2), abs=1e-12)
        assert c_x_closed_form(U2, 3.0) < c_x_closed_form(U2, 2.9)

    def test_uniform_at_threshold(self):
        cp = cutoff_constants(U2).C
        m = c_x_max(U2, cp, delta=0.0)
        assert abs(m.value) < 1e-3
        assert np.allclose(m.frequencies, [0.5, 0.5], atol=1e-3)
        assert m.profile.c_tot == pytest.approx(1 / (2 * math.log(2)), abs=1e-3)

    def test_uniform_above_cutoff(self):
        C = cutoff_constants(U2).Cbar + 0.2
        m = c_x_max(U2, C, delta=0.0)
        assert m.value < 0
        assert m.value == pytest.approx(c_x_closed_form(U2, C), abs=1e-3)

    def test_random_panel_interior(self):
        rng = np.random.default_rng(6)
        interior = 0
        for _ in range(10):
            p = random_p(rng, int(rng.integers(2, 5)))
            C = cutoff_constants(p).C
            m = c_x_max(p, C, delta=0.0)
            if m.family != "interior":
                continue
            interior += 1
            th = theta(p)
            assert m.value == pytest.approx(c_x_closed_form(p, C), abs=1e-3)
            assert np.allclose(m.frequencies, tilt(p, th).array, atol=1e-3)
            assert m.profile.c_tot == pytest.approx(1 / (2 * rate_I(p, th)), abs=1e-3)
        assert interior >= 5

    def test_negative_above_lower_constant(self):
        rng = np.random.default_rng(7)
        for _ in range(5):
            p = random_p(rng, int(rng.integers(2, 5)))
            assert c_x_max(p, cutoff_constants(p).Cunder + 0.1, delta=0.01).value <= -0.01
