"""Forward p-shuffles, the inverse string representation and exact small-deck oracles.

Decks are permutations in one-line notation: ``deck[j]`` is the card at
position ``j+1``.  A K-fold shuffle of the sorted deck is sampled either
directly (``forward_shuffle``) or through sorted random strings
(``sample_inverse_representation``), whose G-modified uniform permutation is
the inverse of the shuffled deck.

The two exact oracles use rational arithmetic and share no code path:
``exact_forward_distribution`` works from cuts and interleavings,
``exact_inverse_distribution`` from multisets of strings.
"""

from __future__ import annotations

import itertools
import json
import math
from collections import defaultdict
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .core import (
    Permutation,
    ProbVector,
    ShuffleGraph,
    ValidationError,
    as_generator,
    build_shuffle_graph,
    check_permutation,
    compose,
    g_modify,
    g_modify_batch,
    identity,
    invert,
    sample_digits,
    sample_sorted_sequence,
    strings_fit_int64,
    sort_rows,
)

MAX_EXACT_N = 7
MAX_EXACT_PILES = 64
MAX_MULTISETS = 10**6
MAX_ENUMERATED_INTERLEAVINGS = 2 * 10**6
MAX_EULERIAN_N = 200


class CapExceeded(ValidationError):
    """An exact computation was asked to go past its configured size cap."""


# ---------------------------------------------------------------------------
# Exact distributions
# ---------------------------------------------------------------------------


class ExactDistribution:
    """Exact rational probabilities on permutations of ``1..n``."""

    def __init__(self, n: int, probs: dict):
        self.n = n
        self.probs = {tuple(k): Fraction(v) for k, v in probs.items() if v != 0}

    def __getitem__(self, sigma) -> Fraction:
        return self.probs.get(tuple(sigma), Fraction(0))

    def __eq__(self, other):
        if not isinstance(other, ExactDistribution):
            return NotImplemented
        return self.n == other.n and self.probs == other.probs

    def __repr__(self):
        return f"ExactDistribution(n={self.n}, support={len(self.probs)})"

    def total(self) -> Fraction:
        return sum(self.probs.values(), Fraction(0))

    def support(self) -> list:
        return sorted(self.probs)

    def tv_to_uniform(self) -> Fraction:
        u = Fraction(1, math.factorial(self.n))
        missing = math.factorial(self.n) - len(self.probs)
        return (sum((abs(v - u) for v in self.probs.values()), Fraction(0)) + missing * u) / 2

    def to_json(self) -> str:
        """``{"3 1 2": "1/4", ...}`` keyed by space-separated one-line notation."""
        out = {" ".join(map(str, k)): f"{v.numerator}/{v.denominator}" for k, v in sorted(self.probs.items())}
        return json.dumps(out, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExactDistribution":
        raw = json.loads(text)
        probs = {tuple(int(x) for x in k.split()): Fraction(v) for k, v in raw.items()}
        n = len(next(iter(probs))) if probs else 0
        return cls(n, probs)

    def pushforward(self, fn) -> "ExactDistribution":
        out = defaultdict(Fraction)
        for k, v in self.probs.items():
            out[fn(k)] += v
        return ExactDistribution(self.n, out)


def point_mass(n: int) -> ExactDistribution:
    return ExactDistribution(n, {identity(n): Fraction(1)})


def compose_distributions(outer: ExactDistribution, inner: ExactDistribution) -> ExactDistribution:
    """Law of ``sigma o tau`` (``tau`` applied first as a map) for independent ``sigma ~ outer``, ``tau ~ inner``.

    With ``outer`` the p-shuffle law and ``inner`` the q-shuffle law this is the
    ``p * q`` shuffle law.
    """
    if outer.n != inner.n:
        raise ValidationError("distributions live on different deck sizes")
    out = defaultdict(Fraction)
    for a, pa in outer.probs.items():
        for b, pb in inner.probs.items():
            out[compose(a, b)] += pa * pb
    return ExactDistribution(outer.n, out)


# ---------------------------------------------------------------------------
# Convolution
# ---------------------------------------------------------------------------


def convolve(p: ProbVector, q: ProbVector) -> ProbVector:
    """``(p_0 q_0, p_0 q_1, ..., p_{k-1} q_{l-1})``."""
    return ProbVector(tuple(a * b for a in p.weights for b in q.weights))


def convolution_power(p: ProbVector, K: int) -> tuple:
    """Exact weights of ``p^{*K}``; ``K = 0`` gives the single pile ``(1,)``."""
    w = (Fraction(1),)
    for _ in range(K):
        w = tuple(a * b for a in p.weights for b in w)
    return w


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def forward_shuffle(deck, p: ProbVector, rng) -> Permutation:
    """One p-shuffle: multinomial cut, then drop from pile i with probability A_i / sum(A)."""
    deck = check_permutation(deck)
    rng = as_generator(rng)
    sizes = rng.multinomial(len(deck), p.array)
    piles = []
    start = 0
    for n_i in sizes:
        piles.append(list(deck[start : start + n_i]))
        start += n_i
    remaining = np.array(sizes, dtype=np.int64)
    heads = [0] * p.k
    out = []
    for left in range(len(deck), 0, -1):
        i = int(np.searchsorted(np.cumsum(remaining), rng.integers(left), side="right"))
        out.append(piles[i][heads[i]])
        heads[i] += 1
        remaining[i] -= 1
    return tuple(out)


def forward_shuffle_batch(p: ProbVector, N: int, K: int, R: int, rng) -> np.ndarray:
    """``R`` decks (0-based, shape ``(R, N)``) after K p-shuffles of the sorted deck.

    Uses the uniform-interleaving description: the cut labels, in deck order,
    are rearranged uniformly and each pile keeps its internal order.
    """
    rng = as_generator(rng)
    decks = np.tile(np.arange(N), (R, 1))
    rows = np.arange(R)[:, None]
    for _ in range(K):
        labels = np.sort(sample_digits(p, (R, N), rng), axis=1)
        dropped = np.take_along_axis(labels, np.argsort(rng.random((R, N)), axis=1), axis=1)
        # the t-th card of the cut deck lands on the t-th position in label order
        target = np.argsort(dropped, axis=1, kind="stable")
        new = np.empty_like(decks)
        new[rows, target] = decks
        decks = new
    return decks


def sample_inverse_representation(p: ProbVector, N: int, K: int, rng) -> tuple:
    """Return ``(pi^G, G)`` with ``pi`` uniform and ``G = G(S)`` for p-random sorted strings.

    ``invert(pi^G)`` is distributed as the deck after K p-shuffles.
    """
    rng = as_generator(rng)
    if K == 0:
        G = ShuffleGraph(N, np.ones(max(N - 1, 0), dtype=bool))
    else:
        G = build_shuffle_graph(sample_sorted_sequence(p, N, K, rng))
    pi = tuple(int(v) + 1 for v in rng.permutation(N))
    return g_modify(pi, G), G


def sample_sorted_codes_batch(p: ProbVector, N: int, K: int, R: int, rng) -> np.ndarray:
    """``R`` sorted sequences of N p-random strings, packed as base-k int64 codes ``(R, N)``."""
    if not strings_fit_int64(p.k, K):
        raise ValidationError(f"strings of length {K} over {p.k} digits do not fit int64 codes")
    rng = as_generator(rng)
    k = p.k
    if p.is_uniform:
        # the top K digits of one uniform draw; nested in K like the digit-by-digit path
        top = int(62 // math.log2(k))
        codes = rng.integers(0, k**top, size=(R, N), dtype=np.int64) // k ** (top - K)
    else:
        codes = np.zeros((R, N), dtype=np.int64)
        for _ in range(K):
            codes *= k
            codes += sample_digits(p, (R, N), rng)
    codes.sort(axis=1)
    return codes


def sample_graph_edges_batch(p: ProbVector, N: int, K: int, R: int, rng) -> np.ndarray:
    """Edge indicators ``(R, N-1)`` of R independent p-random shuffle graphs."""
    rng = as_generator(rng)
    if K == 0:
        return np.ones((R, max(N - 1, 0)), dtype=bool)
    if strings_fit_int64(p.k, K):
        codes = sample_sorted_codes_batch(p, N, K, R, rng)
        return codes[:, 1:] == codes[:, :-1]
    out = np.empty((R, max(N - 1, 0)), dtype=bool)
    for r in range(R):
        d = sort_rows(sample_digits(p, (N, K), rng), p.k)
        out[r] = np.all(d[1:] == d[:-1], axis=1)
    return out


def sample_pi_g_batch(p: ProbVector, N: int, K: int, R: int, rng) -> np.ndarray:
    """``R`` draws of ``pi^G`` as 0-based rows."""
    rng = as_generator(rng)
    edges = sample_graph_edges_batch(p, N, K, R, rng)
    pis = np.argsort(rng.random((R, N)), axis=1)
    return g_modify_batch(pis, edges)


# ---------------------------------------------------------------------------
# Forward oracle
# ---------------------------------------------------------------------------


def _check_caps(N: int, m: int):
    if N > MAX_EXACT_N:
        raise CapExceeded(f"N={N} exceeds the exact-oracle cap {MAX_EXACT_N}")
    if m > MAX_EXACT_PILES:
        raise CapExceeded(f"{m} piles exceeds the exact-oracle cap {MAX_EXACT_PILES}")


def compositions(N: int, m: int):
    """All compositions of ``N`` into ``m`` non-negative parts, in colex order."""
    if m == 1:
        yield (N,)
        return
    for last in range(N + 1):
        for head in compositions(N - last, m - 1):
            yield head + (last,)


def multiset_permutations(labels):
    """Distinct arrangements of ``labels`` in lexicographic order (next-permutation successor)."""
    a = sorted(labels)
    n = len(a)
    while True:
        yield tuple(a)
        i = n - 2
        while i >= 0 and a[i] >= a[i + 1]:
            i -= 1
        if i < 0:
            return
        j = n - 1
        while a[j] <= a[i]:
            j -= 1
        a[i], a[j] = a[j], a[i]
        a[i + 1 :] = reversed(a[i + 1 :])


def single_shuffle_by_enumeration(q: tuple, N: int) -> ExactDistribution:
    """Exact law of one shuffle with pile weights ``q``, summing over every cut and interleaving.

    Each (cut, interleaving) pair has probability ``prod q_j^{n_j}``.
    """
    m = len(q)
    if m**N > MAX_ENUMERATED_INTERLEAVINGS:
        raise CapExceeded(f"{m}^{N} interleavings exceeds the enumeration cap")
    out = defaultdict(Fraction)
    cards = list(range(1, N + 1))
    for sizes in compositions(N, m):
        weight = Fraction(1)
        for qj, nj in zip(q, sizes):
            weight *= qj**nj
        if weight == 0:
            continue
        piles = []
        start = 0
        for nj in sizes:
            piles.append(cards[start : start + nj])
            start += nj
        labels = [j for j, nj in enumerate(sizes) for _ in range(nj)]
        for arrangement in multiset_permutations(labels):
            heads = [0] * m
            deck = []
            for j in arrangement:
                deck.append(piles[j][heads[j]])
                heads[j] += 1
            out[tuple(deck)] += weight
    return ExactDistribution(N, out)


def _single_shuffle_prob(q: tuple, deck: tuple) -> Fraction:
    """P[deck] for one q-shuffle of the sorted deck.

    Sums ``prod q_{j(c)}`` over non-decreasing pile assignments ``j`` of the
    cards under which every pile keeps its cards in deck order.
    """
    N = len(deck)
    pos = [0] * (N + 1)
    for j, c in enumerate(deck):
        pos[c] = j
    m = len(q)
    f = list(q)
    for c in range(1, N):
        strict = pos[c] > pos[c + 1]
        g = [Fraction(0)] * m
        run = Fraction(0)
        for j in range(m):
            if not strict:
                run += f[j]
            g[j] = q[j] * run
            if strict:
                run += f[j]
        f = g
    return sum(f, Fraction(0))


def exact_forward_distribution(p: ProbVector, N: int, K: int, method: str = "auto") -> ExactDistribution:
    """Exact law of the deck after K p-shuffles of the sorted deck.

    The K shuffles collapse to one shuffle with weights ``p^{*K}``.  With
    ``method="enumerate"`` every cut composition and interleaving is visited;
    ``"dp"`` sums over cut assignments per permutation, which is what makes
    ``N = 7`` with 64 piles feasible.  ``"auto"`` enumerates when that is cheap.
    """
    if K == 0 or N <= 1:
        return point_mass(N)
    q = convolution_power(p, K)
    _check_caps(N, len(q))
    if method == "auto":
        method = "enumerate" if len(q) ** N <= 20000 else "dp"
    if method == "enumerate":
        return single_shuffle_by_enumeration(q, N)
    if method != "dp":
        raise ValueError(f"unknown method {method!r}")
    probs = {}
    for deck in itertools.permutations(range(1, N + 1)):
        probs[deck] = _single_shuffle_prob(q, deck)
    return ExactDistribution(N, probs)


# ---------------------------------------------------------------------------
# Inverse-representation oracle
# ---------------------------------------------------------------------------


def _descents(sigma) -> frozenset:
    return frozenset(i for i in range(1, len(sigma)) if sigma[i - 1] > sigma[i])


def _boundaries(comp: tuple) -> frozenset:
    return frozenset(itertools.accumulate(comp[:-1]))


def component_structure_law(p: ProbVector, N: int, K: int, max_multisets: int | None = MAX_MULTISETS) -> dict:
    """Exact law of the ordered G-component sizes of ``G(S)``.

    Sums multinomial probabilities over all multisets of ``N`` strings from
    ``[k]^K``; strings are visited in lexicographic order so the runs of equal
    strings are the components.
    """
    lam = convolution_power(p, K)
    m = len(lam)
    if max_multisets is not None and math.comb(m + N - 1, N) > max_multisets:
        raise CapExceeded(f"C({m}+{N}-1, {N}) multisets exceeds the cap {max_multisets}")
    # state: composition so far -> sum over partial multisets of prod lam^c / c!
    states = {(): Fraction(1)}
    for ls in lam:
        nxt = defaultdict(Fraction)
        for comp, w in states.items():
            used = sum(comp)
            power = Fraction(1)
            for c in range(0, N - used + 1):
                nxt[comp + (c,) if c else comp] += w * power / math.factorial(c)
                power *= ls
        states = nxt
    fact = math.factorial(N)
    return {comp: w * fact for comp, w in states.items() if sum(comp) == N}


def exact_inverse_distribution(p: ProbVector, N: int, K: int, max_multisets: int | None = MAX_MULTISETS) -> ExactDistribution:
    """Exact law of ``invert(pi^G)`` built from the string representation.

    ``P[pi^G = sigma] = 1{sigma^G = sigma} * prod(v_i!) / N!`` for a fixed G.
    """
    if N > MAX_EXACT_N:
        raise CapExceeded(f"N={N} exceeds the exact-oracle cap {MAX_EXACT_N}")
    if K == 0 or N <= 1:
        return point_mass(N)
    law = component_structure_law(p, N, K, max_multisets)
    fact = math.factorial(N)
    weighted = []
    for comp, w in law.items():
        mult = 1
        for v in comp:
            mult *= math.factorial(v)
        weighted.append((_boundaries(comp), w * Fraction(mult, fact)))
    probs = {}
    for sigma in itertools.permutations(range(1, N + 1)):
        des = _descents(sigma)
        total = sum((w for b, w in weighted if des <= b), Fraction(0))
        if total:
            probs[invert(sigma)] = total
    return ExactDistribution(N, probs)


# ---------------------------------------------------------------------------
# Total variation
# ---------------------------------------------------------------------------


def tv_exact(p: ProbVector, N: int, K: int) -> Fraction:
    """Exact distance from uniform after K p-shuffles of N cards."""
    return exact_forward_distribution(p, N, K).tv_to_uniform()


@lru_cache(maxsize=None)
def eulerian_row(n: int) -> tuple:
    """``A[r]`` = number of permutations of n with exactly ``r+1`` rising sequences."""
    row = [1]
    for size in range(2, n + 1):
        new = [0] * size
        for m in range(size):
            a = (m + 1) * row[m] if m < len(row) else 0
            b = (size - m) * row[m - 1] if m >= 1 else 0
            new[m] = a + b
        row = new
    return tuple(row)


def tv_symmetric_eulerian(k: int, N: int, K: int) -> Fraction:
    """Exact TV after K uniform k-shuffles via the rising-sequence count."""
    if N > MAX_EULERIAN_N:
        raise CapExceeded(f"N={N} exceeds the Eulerian-oracle cap {MAX_EULERIAN_N}")
    if N <= 1:
        return Fraction(0)
    a = k**K
    denom = a**N
    u = Fraction(1, math.factorial(N))
    total = Fraction(0)
    for r, count in enumerate(eulerian_row(N), start=1):
        total += count * abs(Fraction(math.comb(N + a - r, N), denom) - u)
    return total / 2


def rising_sequences(deck) -> int:
    """Number of maximal runs of consecutive card values appearing in increasing positions."""
    pos = {c: j for j, c in enumerate(deck)}
    return 1 + sum(1 for c in range(1, len(deck)) if pos[c] > pos[c + 1])
