"""Shared domain types for p-shuffles.

Probability vectors, digit strings, sorted string sequences, shuffle graphs,
permutations and seeded random streams.  Permutations are tuples in one-line
notation with values ``1..N``; digit strings are tuples of ints in ``0..k-1``.
Python tuple comparison is already the lexicographic order used throughout
(a proper prefix sorts before its extensions).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")

SUM_TOLERANCE = 1e-9
MAX_STRING_LENGTH = 4096

DigitString = tuple
Permutation = tuple


class ValidationError(ValueError):
    """Raised when an input violates a documented precondition."""


# ---------------------------------------------------------------------------
# Probability vectors
# ---------------------------------------------------------------------------


def _to_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, Rational)):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x.strip())
    # floats go through their shortest repr so 0.3 means 3/10
    return Fraction(repr(float(x)))


@dataclass(frozen=True)
class ProbVector:
    """A cut distribution ``(p_0, ..., p_{k-1})`` stored as exact rationals.

    Inputs within ``1e-9`` of summing to one are renormalized exactly;
    anything further off is rejected.
    """

    weights: tuple
    array: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        w = tuple(_to_fraction(x) for x in self.weights)
        if len(w) < 2:
            raise ValidationError("a cut distribution needs at least two piles")
        if any(x <= 0 for x in w):
            raise ValidationError(f"all weights must be positive, got {[float(x) for x in w]}")
        total = sum(w)
        if abs(float(total) - 1.0) > SUM_TOLERANCE:
            raise ValidationError(f"weights sum to {float(total)!r}, not 1")
        w = tuple(x / total for x in w)
        object.__setattr__(self, "weights", w)
        arr = np.array([float(x) for x in w])
        arr.setflags(write=False)
        object.__setattr__(self, "array", arr)

    @classmethod
    def parse(cls, text: str) -> "ProbVector":
        """Parse a comma-separated list such as ``"0.3,0.7"``."""
        parts = [t for t in text.split(",") if t.strip()]
        try:
            return cls(tuple(Fraction(t.strip()) for t in parts))
        except (ValueError, ZeroDivisionError) as exc:
            raise ValidationError(f"cannot parse probability vector {text!r}: {exc}") from exc

    @classmethod
    def uniform(cls, k: int) -> "ProbVector":
        return cls(tuple(Fraction(1, k) for _ in range(k)))

    @classmethod
    def two(cls, p) -> "ProbVector":
        """The two-pile vector ``(p, 1-p)``."""
        p = _to_fraction(p)
        return cls((p, 1 - p))

    @property
    def k(self) -> int:
        return len(self.weights)

    @property
    def i_max(self) -> int:
        # smallest index on ties
        return int(np.argmax(self.array))

    @property
    def i_min(self) -> int:
        return int(np.argmin(self.array))

    @property
    def p_max(self) -> float:
        return float(self.array[self.i_max])

    @property
    def is_uniform(self) -> bool:
        return len(set(self.weights)) == 1

    @property
    def p_min(self) -> float:
        return float(self.array[self.i_min])

    def __len__(self):
        return self.k

    def __str__(self):
        return ",".join(f"{float(x):g}" for x in self.weights)


# ---------------------------------------------------------------------------
# Digit strings
# ---------------------------------------------------------------------------


def parse_string(text: str) -> DigitString:
    """``"0102"`` -> ``(0, 1, 0, 2)``; digits above 9 are not supported here."""
    return tuple(int(c) for c in text)


def format_string(s: Sequence[int]) -> str:
    if any(d > 9 for d in s):
        return ".".join(str(d) for d in s)
    return "".join(str(d) for d in s)


def lex_compare(a: Sequence[int], b: Sequence[int]) -> int:
    """Return -1, 0 or 1 as ``a`` is lexicographically below, equal to or above ``b``."""
    a, b = tuple(a), tuple(b)
    return (a > b) - (a < b)


def check_string(s: Sequence[int], k: int) -> DigitString:
    s = tuple(int(d) for d in s)
    if any(d < 0 or d >= k for d in s):
        raise ValidationError(f"string {s} has digits outside [0, {k})")
    return s


def strings_fit_int64(k: int, K: int) -> bool:
    return K * math.log2(k) < 62


def string_codes(digits: np.ndarray, k: int) -> np.ndarray:
    """Base-k integer codes of equal-length strings (rows).  Order-preserving."""
    K = digits.shape[-1]
    if not strings_fit_int64(k, K):
        raise ValueError("strings too long to pack into int64")
    powers = k ** np.arange(K - 1, -1, -1, dtype=np.int64)
    return digits.astype(np.int64) @ powers


# ---------------------------------------------------------------------------
# Sorted sequences and shuffle graphs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SortedStrings:
    """``N`` equal-length digit strings in non-decreasing lexicographic order.

    ``digits`` is an ``(N, K)`` uint8 array (uint16 when ``k > 255``).
    """

    digits: np.ndarray
    k: int

    def __post_init__(self):
        d = np.asarray(self.digits)
        if d.ndim != 2:
            raise ValidationError("digits must be a 2-d array")
        d = d.copy()
        d.setflags(write=False)
        object.__setattr__(self, "digits", d)

    @classmethod
    def from_strings(cls, strings: Iterable[Sequence[int]], k: int) -> "SortedStrings":
        rows = sorted(check_string(s, k) for s in strings)
        if not rows:
            raise ValidationError("need at least one string")
        if len({len(r) for r in rows}) != 1:
            raise ValidationError("strings must share one length")
        return cls(np.array(rows, dtype=_digit_dtype(k)), k)

    @property
    def n(self) -> int:
        return self.digits.shape[0]

    @property
    def length(self) -> int:
        return self.digits.shape[1]

    @property
    def strings(self) -> list:
        return [tuple(int(d) for d in row) for row in self.digits]

    def __len__(self):
        return self.n

    def __getitem__(self, i) -> DigitString:
        return tuple(int(d) for d in self.digits[i])


def _digit_dtype(k: int):
    return np.uint8 if k <= 256 else np.uint16


def sample_digits(p: ProbVector, shape, rng: np.random.Generator) -> np.ndarray:
    """I.i.d. p-random digits of the given shape."""
    cdf = np.cumsum(p.array)
    u = rng.random(shape)
    d = np.searchsorted(cdf, u, side="right")
    np.minimum(d, p.k - 1, out=d)
    return d.astype(_digit_dtype(p.k))


def sort_rows(digits: np.ndarray, k: int) -> np.ndarray:
    """Sort the rows of an ``(N, K)`` digit array lexicographically."""
    if strings_fit_int64(k, digits.shape[1]):
        order = np.argsort(string_codes(digits, k), kind="stable")
    else:
        order = np.lexsort(digits.T[::-1])
    return digits[order]


def sample_sorted_sequence(p: ProbVector, N: int, K: int, rng: np.random.Generator) -> SortedStrings:
    """Draw ``N`` strings of length ``K`` with i.i.d. p-random digits and sort them."""
    if N < 1 or K < 1:
        raise ValidationError(f"need N >= 1 and K >= 1, got N={N}, K={K}")
    if K > MAX_STRING_LENGTH:
        raise ValidationError(f"K={K} exceeds the cap {MAX_STRING_LENGTH}")
    return SortedStrings(sort_rows(sample_digits(p, (N, K), rng), p.k), p.k)


@dataclass(frozen=True)
class ShuffleGraph:
    """A subgraph of the path on ``1..N``; ``edges[i]`` marks the edge ``(i+1, i+2)``."""

    n: int
    edges: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=bool).copy()
        if e.shape != (max(self.n - 1, 0),):
            raise ValidationError(f"edge indicator must have length {self.n - 1}")
        e.setflags(write=False)
        object.__setattr__(self, "edges", e)

    @classmethod
    def from_edges(cls, n: int, edges: Iterable) -> "ShuffleGraph":
        """Build from 1-based pairs ``(i, i+1)`` or bare left endpoints ``i``."""
        ind = np.zeros(max(n - 1, 0), dtype=bool)
        for e in edges:
            i = e[0] if isinstance(e, tuple) else e
            if isinstance(e, tuple) and e[1] != i + 1:
                raise ValidationError(f"edge {e} does not join consecutive vertices")
            if not 1 <= i < n:
                raise ValidationError(f"edge {e} out of range for N={n}")
            ind[i - 1] = True
        return cls(n, ind)

    @classmethod
    def empty(cls, n: int) -> "ShuffleGraph":
        return cls(n, np.zeros(max(n - 1, 0), dtype=bool))

    def edge_set(self) -> frozenset:
        """Edges as 1-based pairs ``(i, i+1)``."""
        return frozenset((int(i) + 1, int(i) + 2) for i in np.flatnonzero(self.edges))

    @property
    def num_edges(self) -> int:
        return int(self.edges.sum())

    def component_ids(self) -> np.ndarray:
        """0-based component index of every vertex."""
        ids = np.zeros(self.n, dtype=np.int64)
        if self.n > 1:
            ids[1:] = np.cumsum(~self.edges)
        return ids

    def component_sizes(self) -> list:
        if self.n == 0:
            return []
        return np.bincount(self.component_ids()).tolist()

    def union(self, other: "ShuffleGraph") -> "ShuffleGraph":
        _same_size(self, other)
        return ShuffleGraph(self.n, self.edges | other.edges)


def _same_size(G: ShuffleGraph, H: ShuffleGraph):
    if G.n != H.n:
        raise ValidationError(f"graphs have different vertex counts {G.n} and {H.n}")


def build_shuffle_graph(S: SortedStrings) -> ShuffleGraph:
    """Join ``i`` and ``i+1`` exactly when ``s_i == s_{i+1}``."""
    d = S.digits
    return ShuffleGraph(S.n, np.all(d[1:] == d[:-1], axis=1))


# ---------------------------------------------------------------------------
# Permutations
# ---------------------------------------------------------------------------


def check_permutation(pi: Sequence[int]) -> Permutation:
    pi = tuple(int(v) for v in pi)
    if sorted(pi) != list(range(1, len(pi) + 1)):
        raise ValidationError(f"{pi} is not a permutation of 1..{len(pi)}")
    return pi


def invert(pi: Sequence[int]) -> Permutation:
    pi = check_permutation(pi)
    inv = [0] * len(pi)
    for i, v in enumerate(pi, start=1):
        inv[v - 1] = i
    return tuple(inv)


def compose(a: Sequence[int], b: Sequence[int]) -> Permutation:
    """``(a o b)(i) = a(b(i))``."""
    return tuple(a[v - 1] for v in b)


def identity(n: int) -> Permutation:
    return tuple(range(1, n + 1))


def g_modify(pi: Sequence[int], G: ShuffleGraph) -> Permutation:
    """Sort the values of ``pi`` into increasing order inside every G-component."""
    if len(pi) != G.n:
        raise ValidationError(f"permutation length {len(pi)} does not match graph size {G.n}")
    vals = np.asarray(pi, dtype=np.int64)
    key = G.component_ids() * (G.n + 1) + vals
    return tuple(int(v) for v in np.sort(key) % (G.n + 1))


def g_modify_batch(pis: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Row-wise G-modification for 0-based permutations ``(R, N)`` and edges ``(R, N-1)``."""
    R, N = pis.shape
    comp = np.zeros((R, N), dtype=np.int64)
    if N > 1:
        comp[:, 1:] = np.cumsum(~edges, axis=1)
    key = comp * N + pis
    return np.sort(key, axis=1) % N


def ascent_set(sigma: Sequence[int]) -> frozenset:
    return frozenset(i for i in range(1, len(sigma)) if sigma[i - 1] < sigma[i])


# ---------------------------------------------------------------------------
# Random streams
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RngStream:
    """A reproducible generator keyed by ``(seed, stream)``.

    Distinct keys give independent PCG64 streams via ``SeedSequence`` spawn keys.
    """

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed & (2**64 - 1), spawn_key=(self.stream,))
        return np.random.Generator(np.random.PCG64(ss))


def rng_stream(seed: int, stream: int = 0) -> np.random.Generator:
    return RngStream(seed, stream).generator()


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    return rng_stream(int(rng))


def map_blocks(fn: Callable[[int], T], n_blocks: int, threads: int = 1) -> list:
    """Evaluate ``fn(0..n_blocks-1)`` and return results in block order.

    Results never depend on ``threads``: each block owns its own stream.
    """
    if threads <= 1 or n_blocks <= 1:
        return [fn(b) for b in range(n_blocks)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n_blocks)))


# ---------------------------------------------------------------------------
# Monte Carlo plumbing
# ---------------------------------------------------------------------------

BUDGET_ENV = "RIFFLE_BUDGET"
DEFAULT_BUDGET = 10**9
MC_BLOCK = 1024


class BudgetExceeded(ValidationError):
    """A Monte Carlo run would sample more strings than ``RIFFLE_BUDGET`` allows."""


def sampling_budget() -> int:
    raw = os.environ.get(BUDGET_ENV)
    if raw is None or raw == "":
        return DEFAULT_BUDGET
    try:
        return int(float(raw))
    except ValueError as exc:
        raise ValidationError(f"{BUDGET_ENV}={raw!r} is not a number") from exc


def check_budget(n_strings: int):
    budget = sampling_budget()
    if n_strings > budget:
        raise BudgetExceeded(f"run needs {n_strings} sampled strings, budget is {budget} (set {BUDGET_ENV})")


@dataclass(frozen=True)
class McSummary:
    """Sample mean with its standard error ``stdev / sqrt(replicates)``."""

    mean: float
    se: float
    replicates: int
    seed: int

    @classmethod
    def from_values(cls, values, seed: int) -> "McSummary":
        v = np.asarray(values, dtype=float)
        n = v.size
        if n == 0:
            return cls(float("nan"), float("nan"), 0, seed)
        se = float(v.std(ddof=1) / math.sqrt(n)) if n > 1 else float("nan")
        return cls(float(v.mean()), se, n, seed)

    def ci(self, z: float = 1.96) -> tuple:
        return self.mean - z * self.se, self.mean + z * self.se


def run_blocks(fn: Callable[[np.random.Generator, int], np.ndarray], replicates: int, seed: int, threads: int = 1, block: int = MC_BLOCK) -> np.ndarray:
    """Run ``fn(rng, size)`` over fixed-size blocks and stack the per-replicate rows.

    Block ``b`` always uses stream ``(seed, b)`` and holds replicates
    ``b*block .. (b+1)*block - 1``, so the result does not depend on ``threads``.
    """
    n_blocks = -(-replicates // block)

    def one(b):
        size = min(block, replicates - b * block)
        return np.asarray(fn(rng_stream(seed, b), size))

    parts = map_blocks(one, n_blocks, threads)
    if not parts:
        return np.zeros(0)
    return np.concatenate(parts, axis=0)
