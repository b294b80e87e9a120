"""Likelihood ratios of the inverse representation and the second-moment TV bound.

``f_{G,sigma}`` is the density of ``pi^G`` against the uniform permutation,
and ``f_{G,G'} = E^sigma[f_{G,sigma} f_{G',sigma}]`` has the closed form
``prod(v!) prod(w!) / prod(u!)`` over the components of G, G' and their
edge-union U.  The distance to uniform is at most
``sqrt(E[(f_{G,G'} - 1) 1_{S,S' good}]) / 2 + P[S bad]`` for any split of the
string sequences into good and bad sets; here "good" means regular with an
L-sparse shuffle graph.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .core import (
    ProbVector,
    ShuffleGraph,
    SortedStrings,
    ValidationError,
    _same_size,
    build_shuffle_graph,
    check_budget,
    check_permutation,
    g_modify,
    run_blocks,
    sample_digits,
    sort_rows,
    strings_fit_int64,
)
from .shuffle import sample_sorted_codes_batch

MAX_BRUTE_N = 8
MIN_SPARSITY_WINDOW = 10
DEFAULT_L = 20


def _fact_product(sizes) -> int:
    out = 1
    for v in sizes:
        out *= math.factorial(int(v))
    return out


@dataclass(frozen=True)
class PairDecomposition:
    """Component sizes of G, G' and of their edge-union, plus the shared edges."""

    u: tuple
    v: tuple
    w: tuple
    shared: frozenset

    @classmethod
    def of(cls, G: ShuffleGraph, H: ShuffleGraph) -> "PairDecomposition":
        _same_size(G, H)
        return cls(
            u=tuple(G.union(H).component_sizes()),
            v=tuple(G.component_sizes()),
            w=tuple(H.component_sizes()),
            shared=edge_intersection(G, H),
        )


def f_g_sigma(G: ShuffleGraph, sigma) -> int:
    """``prod(v_i!)`` if ``sigma`` increases inside every G-component, else 0."""
    sigma = check_permutation(sigma)
    if len(sigma) != G.n:
        raise ValidationError(f"permutation length {len(sigma)} does not match graph size {G.n}")
    if g_modify(sigma, G) != sigma:
        return 0
    return _fact_product(G.component_sizes())


def f_pair_exact(G: ShuffleGraph, H: ShuffleGraph) -> Fraction:
    d = PairDecomposition.of(G, H)
    return Fraction(_fact_product(d.v) * _fact_product(d.w), _fact_product(d.u))


@lru_cache(maxsize=None)
def _all_permutations(n: int) -> np.ndarray:
    return np.array(list(itertools.permutations(range(1, n + 1))), dtype=np.int8).reshape(-1, n)


def f_pair_brute(G: ShuffleGraph, H: ShuffleGraph) -> Fraction:
    """Average of ``f_{G,sigma} f_{G',sigma}`` over all of ``Sym_N``.

    ``sigma^G = sigma`` exactly when sigma ascends across every edge of G.
    """
    _same_size(G, H)
    if G.n > MAX_BRUTE_N:
        raise ValidationError(f"brute force limited to N <= {MAX_BRUTE_N}, got {G.n}")
    perms = _all_permutations(G.n)
    asc = perms[:, 1:] > perms[:, :-1]
    fixed_g = np.all(asc | ~G.edges, axis=1)
    fixed_h = np.all(asc | ~H.edges, axis=1)
    hits = int(np.count_nonzero(fixed_g & fixed_h))
    weight = _fact_product(G.component_sizes()) * _fact_product(H.component_sizes())
    return Fraction(hits * weight, math.factorial(G.n))


def lemma_fbound_rhs(G: ShuffleGraph, H: ShuffleGraph) -> int:
    """Product of ``u!`` over the U-components that contain a shared edge."""
    _same_size(G, H)
    U = G.union(H)
    ids = U.component_ids()
    sizes = np.bincount(ids) if G.n else np.zeros(0, dtype=int)
    touched = {int(ids[i]) for i in np.flatnonzero(G.edges & H.edges)}
    return _fact_product(sizes[c] for c in sorted(touched))


def edge_intersection(G: ShuffleGraph, H: ShuffleGraph) -> frozenset:
    _same_size(G, H)
    return ShuffleGraph(G.n, G.edges & H.edges).edge_set()


def _late_mask(S: SortedStrings, digit: int) -> np.ndarray:
    """Strings of S that begin with two copies of ``digit``."""
    if S.length < 2:
        return np.zeros(S.n, dtype=bool)
    return (S.digits[:, 0] == digit) & (S.digits[:, 1] == digit)


def _restricted(S: SortedStrings, digit: int) -> np.ndarray:
    G = build_shuffle_graph(S)
    return G.edges & ~_late_mask(S, digit)[:-1]


def e_forward(S: SortedStrings, S2: SortedStrings) -> frozenset:
    """Shared edges whose strings in both sequences avoid the prefix ``[(k-1)(k-1)]``."""
    _check_pair(S, S2)
    k1 = S.k - 1
    return ShuffleGraph(S.n, _restricted(S, k1) & _restricted(S2, k1)).edge_set()


def e_backward(S: SortedStrings, S2: SortedStrings) -> frozenset:
    """Shared edges whose strings in both sequences avoid the prefix ``[00]``."""
    _check_pair(S, S2)
    return ShuffleGraph(S.n, _restricted(S, 0) & _restricted(S2, 0)).edge_set()


def _check_pair(S: SortedStrings, S2: SortedStrings):
    if S.n != S2.n or S.k != S2.k:
        raise ValidationError("sequences must share N and k")


def is_l_sparse(G: ShuffleGraph, L: int) -> bool:
    """Every window of L consecutive vertices holds at most ``floor(L/3)`` edges.

    Graphs with fewer than L vertices have no window and are sparse.
    """
    if L < MIN_SPARSITY_WINDOW:
        raise ValidationError(f"L must be at least {MIN_SPARSITY_WINDOW}, got {L}")
    return bool(l_sparse_batch(G.edges[None, :], L)[0])


def l_sparse_batch(edges: np.ndarray, L: int) -> np.ndarray:
    R, m = edges.shape
    w = L - 1  # edge slots inside a window of L vertices
    if m < w:
        return np.ones(R, dtype=bool)
    cs = np.zeros((R, m + 1), dtype=np.int64)
    np.cumsum(edges, axis=1, out=cs[:, 1:])
    return (cs[:, w:] - cs[:, :-w]).max(axis=1) <= L // 3


def regularity_thresholds(p: ProbVector, N: int) -> tuple:
    a = p.array
    cross = a[0] * a[-1] / 2
    return (a[0] ** 2 + cross) * N, (a[-1] ** 2 + cross) * N


def is_regular(S: SortedStrings, p: ProbVector) -> bool:
    """At most ``(p_0^2 + p_0 p_{k-1}/2) N`` strings begin ``[00]``, and symmetrically for ``[(k-1)(k-1)]``."""
    if S.length < 2:
        raise ValidationError("regularity needs strings of length at least 2")
    if S.k != p.k:
        raise ValidationError("sequence alphabet does not match p")
    lo, hi = regularity_thresholds(p, S.n)
    return bool(_late_mask(S, 0).sum() <= lo and _late_mask(S, p.k - 1).sum() <= hi)


def log_fact_components(edges: np.ndarray) -> np.ndarray:
    """Row-wise ``sum(log(v!))`` over components, for edge indicators ``(R, N-1)``."""
    R, m = edges.shape
    N = m + 1
    idx = np.arange(N)
    starts = np.zeros((R, N), dtype=np.int64)
    starts[:, 1:] = np.where(edges, 0, idx[1:])
    np.maximum.accumulate(starts, axis=1, out=starts)
    return np.log(idx - starts + 1.0).sum(axis=1)


def log_f_pair_batch(e1: np.ndarray, e2: np.ndarray) -> np.ndarray:
    return log_fact_components(e1) + log_fact_components(e2) - log_fact_components(e1 | e2)


def sample_graphs_with_prefixes(p: ProbVector, N: int, K: int, R: int, rng) -> tuple:
    """Edges ``(R, N-1)`` and first-two-digit codes ``(R, N)`` of R sorted sequences."""
    k = p.k
    if strings_fit_int64(k, K):
        codes = sample_sorted_codes_batch(p, N, K, R, rng)
        return codes[:, 1:] == codes[:, :-1], codes // k ** max(K - 2, 0)
    edges = np.empty((R, N - 1), dtype=bool)
    lead = np.empty((R, N), dtype=np.int64)
    for r in range(R):
        d = sort_rows(sample_digits(p, (N, K), rng), k)
        edges[r] = np.all(d[1:] == d[:-1], axis=1)
        lead[r] = d[:, 0].astype(np.int64) * k + d[:, 1]
    return edges, lead


def good_batch(p: ProbVector, edges: np.ndarray, lead: np.ndarray, L: int) -> np.ndarray:
    """Regular and L-sparse, row-wise."""
    N = lead.shape[1]
    lo, hi = regularity_thresholds(p, N)
    k1 = p.k - 1
    regular = ((lead == 0).sum(axis=1) <= lo) & ((lead == k1 * p.k + k1).sum(axis=1) <= hi)
    return regular & l_sparse_batch(edges, L)


@dataclass(frozen=True)
class TvUpperEstimate:
    """``value = sqrt(max(chi2, 0)) / 2 + bad_fraction``; ``upper`` uses the one-sided normal CI."""

    value: float
    upper: float
    chi2_mean: float
    chi2_se: float
    bad_fraction: float
    bad_se: float
    samples: int
    seed: int


def tv_upper_chi2_mc(p: ProbVector, N: int, K: int, L: int = DEFAULT_L, samples: int = 10000, seed: int = 0, threads: int = 1, z: float = 1.645) -> TvUpperEstimate:
    """Monte Carlo estimate of the second-moment upper bound on the distance to uniform."""
    if K < 2:
        raise ValidationError("the regularity split needs K >= 2")
    if L < MIN_SPARSITY_WINDOW:
        raise ValidationError(f"L must be at least {MIN_SPARSITY_WINDOW}, got {L}")
    check_budget(2 * N * samples)

    def block(rng, size):
        e1, l1 = sample_graphs_with_prefixes(p, N, K, size, rng)
        e2, l2 = sample_graphs_with_prefixes(p, N, K, size, rng)
        g1, g2 = good_batch(p, e1, l1, L), good_batch(p, e2, l2, L)
        with np.errstate(over="ignore"):
            chi = np.expm1(log_f_pair_batch(e1, e2))
        chi = np.where(g1 & g2, chi, 0.0)
        bad = 0.5 * ((~g1).astype(float) + (~g2).astype(float))
        return np.stack([chi, bad], axis=1)

    rows = run_blocks(block, samples, seed, threads)
    n = rows.shape[0]
    chi_mean = float(rows[:, 0].mean())
    chi_se = float(rows[:, 0].std(ddof=1) / math.sqrt(n)) if n > 1 else float("nan")
    bad = float(rows[:, 1].mean())
    bad_se = float(rows[:, 1].std(ddof=1) / math.sqrt(n)) if n > 1 else float("nan")
    value = 0.5 * math.sqrt(max(chi_mean, 0.0)) + bad
    upper = 0.5 * math.sqrt(max(chi_mean + z * chi_se, 0.0)) + bad + z * bad_se
    return TvUpperEstimate(value, upper, chi_mean, chi_se, bad, bad_se, n, seed)
