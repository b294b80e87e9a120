"""Prefix blocks of the lexicographic order and the exponents attached to them.

A prefix ``x`` of length ``M <= K`` owns the block ``B_x`` of length-K strings
that extend it.  Under i.i.d. p-random digits a uniform-looking string falls
in ``B_x`` with probability ``lambda_x = prod p_{x[i]}``, and the blocks of a
fixed length tile ``[0, 1)`` by the intervals ``J_x = [t_x, t_x + lambda_x)``.

Digit profiles measure prefixes in units of ``log N``.  The stable partition
cuts the prefix tree where the block size ``N^{c_L}`` stops dominating the
position fluctuations ``N^{c_F}``; ``c_x_max`` maximizes the edge exponent
``c_X`` over stable profiles.
"""

from __future__ import annotations

import bisect
import csv
import io
import itertools
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.optimize import minimize

from .constants import cutoff_constants, entropy
from .core import ProbVector, SortedStrings, ValidationError, check_string

DEFAULT_DELTA = 0.05
MAX_PARTITION_LEAVES = 2 * 10**6
SIMPLEX_GRID_STEPS = {2: 200, 3: 60, 4: 24, 5: 14, 6: 10}


# ---------------------------------------------------------------------------
# Prefix intervals
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PrefixInterval:
    """``J_x = [t, t + lam)`` with exact rational endpoints."""

    x: tuple
    t: Fraction
    lam: Fraction

    @property
    def end(self) -> Fraction:
        return self.t + self.lam

    def __contains__(self, u) -> bool:
        return self.t <= u < self.end


def prefix_interval(p: ProbVector, x) -> PrefixInterval:
    """``t_x = P[y <lex x]`` for p-random ``y`` of the same length, and ``lambda_x``."""
    x = check_string(x, p.k)
    w = p.weights
    below = [sum(w[:d], Fraction(0)) for d in range(p.k)]
    t = Fraction(0)
    lam = Fraction(1)
    for d in x:
        t += lam * below[d]
        lam *= w[d]
    return PrefixInterval(x, t, lam)


# ---------------------------------------------------------------------------
# Digit profiles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DigitProfile:
    """Digit counts in units of ``log N`` and the exponents derived from them.

    ``b0``/``bk1`` cover the leading run of 0 or (k-1) digits and ``c[i]`` the
    later digits equal to ``i``.  ``C = K / log N`` is only needed for ``c_E``
    and ``c_X``.
    """

    b0: float
    bk1: float
    c: tuple
    p: ProbVector = field(repr=False)
    C: float | None = None

    def __post_init__(self):
        if min(self.b0, self.bk1) != 0:
            raise ValidationError("a profile cannot start with both a 0-run and a (k-1)-run")
        if len(self.c) != self.p.k:
            raise ValidationError("need one c entry per digit")

    @classmethod
    def of(cls, x, N: int, p: ProbVector, K: int | None = None) -> "DigitProfile":
        if N < 3:
            raise ValidationError("digit profiles need N >= 3")
        x = check_string(x, p.k)
        logn = math.log(N)
        run = 0
        if x and x[0] in (0, p.k - 1):
            run = next((i for i, d in enumerate(x) if d != x[0]), len(x))
        counts = np.bincount(np.asarray(x[run:], dtype=np.int64), minlength=p.k)
        lead = run / logn
        b0 = lead if x and x[0] == 0 else 0.0
        bk1 = lead if x and x[0] == p.k - 1 and run else 0.0
        return cls(b0, bk1, tuple(float(v) / logn for v in counts), p, None if K is None else K / logn)

    @property
    def _ell(self) -> np.ndarray:
        return -np.log(self.p.array)

    @property
    def c_tot(self) -> float:
        return float(sum(self.c))

    @property
    def length(self) -> float:
        return self.b0 + self.bk1 + self.c_tot

    @property
    def c_F(self) -> float:
        ell = self._ell
        return (1.0 - self.b0 * ell[0] - self.bk1 * ell[-1]) / 2.0

    @property
    def c_L(self) -> float:
        ell = self._ell
        return 1.0 - self.b0 * ell[0] - self.bk1 * ell[-1] - float(np.dot(self.c, ell))

    @property
    def c_D(self) -> float:
        return self.c_L - self.c_F

    @property
    def c_E(self) -> float:
        if self.C is None:
            raise ValidationError("c_E needs K")
        return (self.length - self.C) * cutoff_constants(self.p).psi2

    @property
    def c_X(self) -> float:
        return self.c_tot * entropy(self.c) + 5 * self.c_L - 2 * self.c_F + 2 * self.c_E

    def is_stable(self, delta: float) -> bool:
        return delta <= self.c_D <= 2 * delta


def digit_profile(x, N: int, p: ProbVector, K: int | None = None) -> DigitProfile:
    return DigitProfile.of(x, N, p, K)


# ---------------------------------------------------------------------------
# Stable partition
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StableLeaf:
    x: tuple
    lam: float
    c_L: float
    c_F: float
    c_D: float


@dataclass(frozen=True)
class StablePartition:
    leaves: tuple
    p: ProbVector
    N: int
    K: int
    delta: float

    def prefixes(self) -> list:
        return [leaf.x for leaf in self.leaves]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["prefix", "length", "lambda", "c_L", "c_F", "c_D"])
        for leaf in self.leaves:
            w.writerow(["".join(map(str, leaf.x)), len(leaf.x), repr(leaf.lam), repr(leaf.c_L), repr(leaf.c_F), repr(leaf.c_D)])
        return buf.getvalue()


def build_stable_partition(p: ProbVector, N: int, K: int, delta: float = DEFAULT_DELTA, max_leaves: int = MAX_PARTITION_LEAVES) -> StablePartition:
    """Leaves of the tree that expands every prefix with ``c_D >= 2 delta``.

    Depth-first, children in increasing digit order, so leaves come out in
    lexicographic order.  Prefixes of full length K are never expanded.
    """
    if N < 3:
        raise ValidationError("need N >= 3")
    if K < 1:
        raise ValidationError("need K >= 1")
    if not 0 < delta <= 0.25:
        raise ValidationError(f"delta must lie in (0, 1/4], got {delta}")
    logn = math.log(N)
    ell = -np.log(p.array) / logn
    k = p.k
    leaves = []
    # stack entries: (prefix, log lambda / log N, lead run length / log N weight, in_run)
    # c_L = 1 + log_N lambda and c_F = (1 - lead)/2 with lead = run digits * ell
    stack = [((), 0.0, 0.0, True)]
    while stack:
        x, loglam, lead, in_run = stack.pop()
        c_L = 1.0 + loglam
        c_F = (1.0 - lead) / 2.0
        c_D = c_L - c_F
        if c_D >= 2 * delta and len(x) < K:
            for d in reversed(range(k)):
                run = in_run and (not x and d in (0, k - 1) or x and d == x[0])
                stack.append((x + (d,), loglam - ell[d], lead + ell[d] if run else lead, bool(run)))
            continue
        leaves.append(StableLeaf(x, math.exp(loglam * logn), c_L, c_F, c_D))
        if len(leaves) > max_leaves:
            raise ValidationError(f"stable partition exceeds {max_leaves} leaves")
    return StablePartition(tuple(leaves), p, N, K, delta)


# ---------------------------------------------------------------------------
# Blocks of a sorted sequence
# ---------------------------------------------------------------------------


def block_interval(S: SortedStrings, x) -> tuple:
    """``(iota, tau)``: ``iota - 1`` strings precede ``B_x`` and ``tau`` strings are at most its last element.

    The block's index range is ``iota..tau`` and has size ``tau - iota + 1`` (possibly 0).
    """
    x = check_string(x, S.k)
    if len(x) > S.length:
        raise ValidationError("prefix longer than the strings")
    heads = [tuple(int(d) for d in row) for row in S.digits[:, : len(x)]]
    return bisect.bisect_left(heads, x) + 1, bisect.bisect_right(heads, x)


def blocks_decompose(s_a, s_b, K: int, k: int = 2) -> list:
    """Prefixes whose blocks tile the length-K strings strictly between ``s_a`` and ``s_b``.

    Walks down from the root: a prefix whose whole block lies strictly inside
    the interval is emitted, one that straddles an endpoint is split into its
    children.
    """
    s_a, s_b = check_string(s_a, k), check_string(s_b, k)
    if len(s_a) > K or len(s_b) > K:
        raise ValidationError("endpoints must have length at most K")
    if not s_a < s_b:
        raise ValidationError("need s_a <lex s_b")
    out = []

    def visit(x):
        pad = K - len(x)
        lo, hi = x + (0,) * pad, x + (k - 1,) * pad
        if s_a < lo and hi < s_b:
            out.append(x)
        elif hi > s_a and lo < s_b and pad:
            for d in range(k):
                visit(x + (d,))

    visit(())
    return out


# ---------------------------------------------------------------------------
# Maximizing c_X over stable profiles
# ---------------------------------------------------------------------------


def c_x_closed_form(p: ProbVector, C: float) -> float:
    """Value of ``c_X`` at the interior maximizer with the stability slack set to zero."""
    cc = cutoff_constants(p)
    return (3.0 + cc.theta) / 2.0 - 2.0 * C * cc.psi2


@dataclass(frozen=True)
class CxMax:
    value: float
    profile: DigitProfile
    family: str
    d: float

    @property
    def frequencies(self) -> np.ndarray:
        c = np.asarray(self.profile.c)
        return c / c.sum() if c.sum() > 0 else c


def _simplex_grid(k: int, steps: int):
    for combo in itertools.combinations(range(steps + k - 1), k - 1):
        parts = np.diff((-1,) + combo + (steps + k - 1,)) - 1
        yield parts / steps


def _ratio(q: np.ndarray, ell: np.ndarray, psi2: float) -> float:
    """``(H(q) + 2 psi2) / I_q`` with ``I_q = sum q_i log(1/p_i)``."""
    nz = q[q > 0]
    h = float(-np.sum(nz * np.log(nz)))
    return (h + 2 * psi2) / float(np.dot(q, ell))


def _best_frequencies(p: ProbVector, psi2: float, min_rate: float) -> tuple:
    """Maximize the ratio over the simplex subject to ``I_q >= min_rate``."""
    ell = -np.log(p.array)
    k = p.k
    best, best_q = -np.inf, None
    for q in _simplex_grid(k, SIMPLEX_GRID_STEPS.get(k, 8)):
        if np.dot(q, ell) >= min_rate:
            r = _ratio(q, ell, psi2)
            if r > best:
                best, best_q = r, q
    if best_q is None:
        return -np.inf, None
    # the ratio is quasi-concave, so a local refinement from the best grid point is global
    def neg(q):
        return -_ratio(np.maximum(q, 0.0), ell, psi2)

    cons = [{"type": "eq", "fun": lambda q: float(q.sum()) - 1.0}]
    if min_rate > 0:
        cons.append({"type": "ineq", "fun": lambda q: float(np.dot(q, ell)) - min_rate})
    q0 = np.maximum(best_q, 1e-6)
    q0 /= q0.sum()
    with warnings.catch_warnings():
        # SLSQP clips steps that leave the bounds and says so
        warnings.simplefilter("ignore", RuntimeWarning)
        res = minimize(neg, q0, method="SLSQP", bounds=[(1e-15, 1.0)] * k, constraints=cons, options={"ftol": 1e-15, "maxiter": 1000})
    q = np.maximum(res.x, 0.0)
    q /= q.sum()
    if np.dot(q, ell) >= min_rate * (1 - 1e-12):
        r = _ratio(q, ell, psi2)
        if r > best:
            best, best_q = r, q
    return best, best_q


def c_x_max(p: ProbVector, C: float, delta: float = DEFAULT_DELTA, enforce_length: bool = True) -> CxMax:
    """Maximum of ``c_X`` over profiles with ``c_D`` in ``[delta, 2 delta]``.

    ``c_X`` is affine along paths that trade leading-run digits for later
    digits at fixed ``c_D``, so only two endpoint families need searching:
    no leading run (``b = 0``), and a pure leading run (``c = 0``).  In both,
    ``c_X`` is affine in ``d = c_D`` and the maximum sits at ``d = delta`` or
    ``2 delta``.  ``enforce_length`` keeps profiles no longer than K.
    """
    if not C > 0:
        raise ValidationError("C must be positive")
    if delta < 0:
        raise ValidationError("delta must be non-negative")
    cc = cutoff_constants(p)
    psi2 = cc.psi2
    ell = -np.log(p.array)
    candidates = []
    for d in sorted({delta, 2 * delta}):
        # b = 0: c_tot * I_q = 1/2 - d
        mass = 0.5 - d
        if mass > 0:
            min_rate = mass / C if enforce_length else 0.0
            r, q = _best_frequencies(p, psi2, min_rate)
            if q is not None:
                val = mass * r + 1.5 + 5 * d - 2 * C * psi2
                c = tuple(float(v) for v in q * mass / np.dot(q, ell))
                candidates.append((val, DigitProfile(0.0, 0.0, c, p, C), "interior", d))
        # c = 0: leading run with b * ell = 1 - 2d
        for side, li in ((0, ell[0]), (p.k - 1, ell[-1])):
            b = (1 - 2 * d) / li
            if enforce_length and b > C:
                continue
            val = 8 * d + 2 * (b - C) * psi2
            prof = DigitProfile(b if side == 0 else 0.0, b if side else 0.0, (0.0,) * p.k, p, C)
            candidates.append((val, prof, f"run{side}", d))
    if not candidates:
        raise ValidationError("no stable profile fits in length K")
    best = max(candidates, key=lambda t: (t[0], t[2], t[3]))
    return CxMax(*best)
