"""Monte Carlo harness for the shared-edge statistics and the cold-spot lower bound.

Everything here samples sorted string sequences in fixed-size blocks, one
random stream per block, so results depend only on ``(seed, replicates)``.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass

import numpy as np

from . import __version__
from .constants import cutoff_constants, entropy, rate_I, tilt_array
from .core import (
    McSummary,
    ProbVector,
    SortedStrings,
    ValidationError,
    check_budget,
    run_blocks,
    sample_sorted_sequence,
)
from .likelihood import sample_graphs_with_prefixes
from .shuffle import multiset_permutations, sample_pi_g_batch, tv_symmetric_eulerian

MAX_CL_PREFIXES = 10**7
DEFAULT_COLD_DELTA = 0.1
HAZARD_CHECKPOINTS = 64


def provenance(seed: int, replicates: int) -> dict:
    return {"seed": seed, "replicates": replicates, "version": __version__}


# ---------------------------------------------------------------------------
# Shared edges
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EdgeIntersection:
    total: McSummary
    forward: McSummary
    backward: McSummary


def _shared_edge_counts(p: ProbVector, N: int, K: int, R: int, rng) -> np.ndarray:
    """Per pair: ``|E(G,G')|``, ``|E_forward|``, ``|E_backward|``."""
    k = p.k
    e1, l1 = sample_graphs_with_prefixes(p, N, K, R, rng)
    e2, l2 = sample_graphs_with_prefixes(p, N, K, R, rng)
    shared = e1 & e2
    if K >= 2:
        late = (k - 1) * k + (k - 1)
        fwd = shared & (l1[:, :-1] != late) & (l2[:, :-1] != late)
        bwd = shared & (l1[:, :-1] != 0) & (l2[:, :-1] != 0)
    else:
        fwd = bwd = shared
    return np.stack([shared.sum(axis=1), fwd.sum(axis=1), bwd.sum(axis=1)], axis=1)


def mc_edge_intersection(p: ProbVector, N: int, K: int, replicates: int, seed: int = 0, threads: int = 1) -> EdgeIntersection:
    """Mean number of edges shared by two independent shuffle graphs."""
    if N < 2 or K < 1 or replicates < 1:
        raise ValidationError("need N >= 2, K >= 1 and replicates >= 1")
    check_budget(2 * N * replicates)
    rows = run_blocks(lambda rng, size: _shared_edge_counts(p, N, K, size, rng), replicates, seed, threads)
    return EdgeIntersection(*(McSummary.from_values(rows[:, j], seed) for j in range(3)))


def f_ab_bounds(a: int, b: int, p: ProbVector) -> float:
    """``min(a, a^2 phi(2)^b)``: a bound on the shared-edge mean for ``a`` cards and ``b`` shuffles."""
    if a < 0 or b < 0:
        raise ValidationError("a and b must be non-negative")
    phi2 = float(np.sum(p.array**2))
    return min(float(a), a * a * phi2**b)


# ---------------------------------------------------------------------------
# Exploration process
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExplorationTrace:
    """``halt`` strings of each sequence were revealed; ``edges`` are the forward shared edges found."""

    halt: int
    edges: tuple


def explore(S: SortedStrings, S2: SortedStrings) -> ExplorationTrace:
    """Reveal ``(s_i, s'_i)`` left to right, stopping once either begins with ``[(k-1)(k-1)]``."""
    if S.n != S2.n or S.k != S2.k:
        raise ValidationError("sequences must share N and k")
    top = S.k - 1
    found = []
    prev = None
    for i in range(S.n):
        a, b = S[i], S2[i]
        if len(a) >= 2 and (a[:2] == (top, top) or b[:2] == (top, top)):
            return ExplorationTrace(i, tuple(found))
        if prev is not None and prev == (a, b):
            found.append((i, i + 1))
        prev = (a, b)
    return ExplorationTrace(S.n, tuple(found))


def _hazard_rows(p: ProbVector, N: int, K: int, R: int, rng, checkpoints: np.ndarray) -> np.ndarray:
    """Per replicate and checkpoint ``i``: forward edges ``(j, j+1)`` with ``j >= i``, or NaN once halted."""
    k = p.k
    late = (k - 1) * k + (k - 1)
    e1, l1 = sample_graphs_with_prefixes(p, N, K, R, rng)
    e2, l2 = sample_graphs_with_prefixes(p, N, K, R, rng)
    stop = (l1 == late) | (l2 == late) if K >= 2 else np.zeros((R, N), dtype=bool)
    halt = np.where(stop.any(axis=1), stop.argmax(axis=1), N)
    fwd = e1 & e2 & ~stop[:, :-1]
    tail = np.zeros((R, N), dtype=np.int64)
    tail[:, :-1] = np.cumsum(fwd[:, ::-1], axis=1)[:, ::-1]
    out = tail[:, checkpoints - 1].astype(float)
    out[checkpoints[None, :] > halt[:, None]] = np.nan
    return out


def exploration_hazard(p: ProbVector, N: int, K: int, replicates: int, seed: int = 0, threads: int = 1, checkpoints: int = HAZARD_CHECKPOINTS) -> McSummary:
    """Largest mean number of not-yet-revealed forward edges over the checkpoints.

    At checkpoint ``i`` the first ``i`` strings of both sequences are revealed;
    the mean runs over the replicates still exploring there.
    """
    if N < 2 or K < 1 or replicates < 2:
        raise ValidationError("need N >= 2, K >= 1 and replicates >= 2")
    check_budget(2 * N * replicates)
    cps = np.unique(np.linspace(1, N, min(checkpoints, N)).astype(np.int64))
    rows = run_blocks(lambda rng, size: _hazard_rows(p, N, K, size, rng, cps), replicates, seed, threads)
    best = McSummary(0.0, 0.0, 0, seed)
    for j in range(len(cps)):
        col = rows[:, j]
        col = col[~np.isnan(col)]
        if col.size >= 2:
            s = McSummary.from_values(col, seed)
            if s.mean > best.mean:
                best = s
    return best


# ---------------------------------------------------------------------------
# Cold spots
# ---------------------------------------------------------------------------


def largest_remainder(total: int, weights) -> tuple:
    """Non-negative integers summing to ``total`` and within 1 of ``total * weights``."""
    w = np.asarray(weights, dtype=float)
    target = total * w / w.sum()
    base = np.floor(target).astype(np.int64)
    short = total - int(base.sum())
    order = sorted(range(len(w)), key=lambda i: (-(target[i] - base[i]), i))
    for i in order[:short]:
        base[i] += 1
    return tuple(int(v) for v in base)


@dataclass(frozen=True)
class ColdSpotPlan:
    """Digit allocations (counts of digits, not yet divided by log N) and the position set H.

    ``H`` is a list of 1-based inclusive ranges ``(lo, hi)``, sorted and disjoint.
    """

    p: ProbVector
    N: int
    K: int
    delta: float
    alpha: tuple
    beta: tuple
    prefixes: int
    H: tuple
    gamma: float

    @property
    def alpha_len(self) -> int:
        return sum(self.alpha)

    @property
    def beta_len(self) -> int:
        return sum(self.beta)

    @property
    def size(self) -> int:
        return sum(hi - lo + 1 for lo, hi in self.H)

    @property
    def boundary(self) -> int:
        return sum(1 if hi == lo else 2 for lo, hi in self.H)

    def mask(self) -> np.ndarray:
        """Boolean membership over positions ``1..N`` (index 0 is position 1)."""
        m = np.zeros(self.N, dtype=bool)
        for lo, hi in self.H:
            m[lo - 1 : hi] = True
        return m

    def __contains__(self, i: int) -> bool:
        j = bisect.bisect_right(self.H, (i, math.inf)) - 1
        return j >= 0 and self.H[j][0] <= i <= self.H[j][1]


def cold_spot_plan(p: ProbVector, N: int, K: int, delta: float = DEFAULT_COLD_DELTA, max_prefixes: int = MAX_CL_PREFIXES) -> ColdSpotPlan:
    """Collision-likely digit allocations and the positions H where their prefixes are expected."""
    if N < 3:
        raise ValidationError("need N >= 3")
    if not 0 < delta < 1:
        raise ValidationError("delta must lie in (0, 1)")
    logn = math.log(N)
    cc = cutoff_constants(p)
    a_len = math.floor((1 - delta) / (2 * rate_I(p, cc.theta)) * logn)
    b_len = K - a_len
    if b_len <= 0:
        raise ValidationError(f"K={K} leaves no room after the {a_len}-digit collision-likely prefix")
    alpha = largest_remainder(a_len, tilt_array(p, cc.theta))
    beta = largest_remainder(b_len, tilt_array(p, 2.0))
    if b_len < 2 or beta[0] < 1 or beta[1] < 1:
        raise ValidationError("suffix allocation cannot start with the digits 0, 1")
    count = math.factorial(a_len)
    for a in alpha:
        count //= math.factorial(a)
    if count > max_prefixes:
        raise ValidationError(f"{count} collision-likely prefixes exceeds the cap {max_prefixes}")
    logp = np.log(p.array)
    lam = math.exp(float(np.dot(alpha, logp)))
    cdf = np.concatenate([[0.0], np.cumsum(p.array)])
    ranges = []
    labels = [d for d, a in enumerate(alpha) for _ in range(a)]
    for x in multiset_permutations(labels):
        t, w = 0.0, 1.0
        for d in x:
            t += w * cdf[d]
            w *= p.array[d]
        # integer points of [N t, N (t + lam)) inside 1..N
        lo = max(1, math.ceil(N * t))
        hi = min(N, math.ceil(N * (t + lam)) - 1)
        if lo > hi:
            continue
        if ranges and lo <= ranges[-1][1] + 1:
            ranges[-1] = (ranges[-1][0], max(hi, ranges[-1][1]))
        else:
            ranges.append((lo, hi))
    a_prof = np.asarray(alpha) / logn
    b_prof = np.asarray(beta) / logn
    gamma = 2 + 2 * float(np.dot(a_prof + b_prof, logp)) + a_prof.sum() * entropy(a_prof) + b_prof.sum() * entropy(b_prof)
    return ColdSpotPlan(p, N, K, delta, alpha, beta, count, tuple(ranges), gamma)


def collision_likely(digits: np.ndarray, plan: ColdSpotPlan) -> np.ndarray:
    """Row mask of strings in CL: prefix counts alpha, then ``0, 1``, then suffix counts beta."""
    M = plan.alpha_len
    k = plan.p.k
    ok = (digits[:, M] == 0) & (digits[:, M + 1] == 1)
    for d in range(k):
        ok &= (digits[:, :M] == d).sum(axis=1) == plan.alpha[d]
        ok &= (digits[:, M:] == d).sum(axis=1) == plan.beta[d]
    return ok


@dataclass(frozen=True)
class ColdSpotHits:
    edges_in_H: int
    Y_tot: int
    cl_outside_H: int


def count_cold_spot_hits(S: SortedStrings, plan: ColdSpotPlan) -> ColdSpotHits:
    """Shuffle-graph edges inside H, and distinct collision-likely strings seen at least twice."""
    if S.n != plan.N or S.length != plan.K or S.k != plan.p.k:
        raise ValidationError("plan was built for different (N, K, k)")
    d = S.digits
    same = np.all(d[1:] == d[:-1], axis=1)
    inH = plan.mask()
    edges = int((same & inH[:-1] & inH[1:]).sum())
    cl = collision_likely(d, plan)
    # sorted, so a repeated string is a run; count runs of length >= 2 in CL
    starts = cl[1:] & same & ~np.concatenate([[False], same[:-1]])
    return ColdSpotHits(edges, int(starts.sum()), int((cl & ~inH).sum()))


def cold_spot_replicates(plan: ColdSpotPlan, replicates: int, seed: int = 0, threads: int = 1) -> np.ndarray:
    """``(replicates, 3)`` rows of ``edges_in_H, Y_tot, cl_outside_H``."""
    check_budget(plan.N * replicates)

    def block(rng, size):
        out = []
        for _ in range(size):
            h = count_cold_spot_hits(sample_sorted_sequence(plan.p, plan.N, plan.K, rng), plan)
            out.append((h.edges_in_H, h.Y_tot, h.cl_outside_H))
        return np.array(out, dtype=np.int64).reshape(-1, 3)

    return run_blocks(block, replicates, seed, threads, block=8)


# ---------------------------------------------------------------------------
# Lower bounds on the distance to uniform
# ---------------------------------------------------------------------------


STATISTICS = ("ascents", "longest-run")


def ascents_in(sigmas: np.ndarray, H: np.ndarray | None = None) -> np.ndarray:
    """Row-wise count of ``i`` with ``sigma(i) < sigma(i+1)`` and both ``i, i+1`` in H."""
    up = sigmas[:, 1:] > sigmas[:, :-1]
    if H is not None:
        up &= H[:-1] & H[1:]
    return up.sum(axis=1)


def longest_increasing_run(sigmas: np.ndarray) -> np.ndarray:
    """Row-wise length of the longest block of consecutive positions with increasing values."""
    R, N = sigmas.shape
    up = sigmas[:, 1:] > sigmas[:, :-1]
    idx = np.arange(1, N)
    resets = np.where(up, 0, idx)
    np.maximum.accumulate(resets, axis=1, out=resets)
    return (idx - resets).max(axis=1, initial=0) + 1


@dataclass(frozen=True)
class TvLowerBound:
    raw: float
    penalized: float
    threshold: int
    penalty: float
    replicates: int
    seed: int


def _statistic(name: str, sigmas: np.ndarray, H):
    if name == "ascents":
        return ascents_in(sigmas, H)
    if name == "longest-run":
        return longest_increasing_run(sigmas)
    raise ValidationError(f"unknown statistic {name!r}; choose from {STATISTICS}")


def tv_lower_mc(p: ProbVector, N: int, K: int, statistic: str = "ascents", replicates: int = 10000, seed: int = 0, threads: int = 1, H=None, alpha: float = 0.05) -> TvLowerBound:
    """``max_c |P_shuffled[T >= c] - P_uniform[T >= c]|`` from two independent samples.

    The shuffled side is ``pi^G``, the uniform side a uniform permutation; both
    are in the same inverse coordinates, so the distance is the same as for
    decks.  ``penalized`` subtracts the two DKW band half-widths at level
    ``alpha`` (``alpha/2`` each) and is a lower bound with that confidence.
    """
    if statistic not in STATISTICS:
        raise ValidationError(f"unknown statistic {statistic!r}; choose from {STATISTICS}")
    if N < 2 or K < 0 or replicates < 1:
        raise ValidationError("need N >= 2, K >= 0 and replicates >= 1")
    check_budget(N * replicates)
    mask = None
    if H is not None:
        mask = H.mask() if isinstance(H, ColdSpotPlan) else np.asarray(H, dtype=bool)
        if mask.shape != (N,):
            raise ValidationError("H must cover positions 1..N")

    def block(rng, size):
        shuffled = sample_pi_g_batch(p, N, K, size, rng)
        uniform = np.argsort(rng.random((size, N)), axis=1)
        return np.stack([_statistic(statistic, shuffled, mask), _statistic(statistic, uniform, mask)], axis=1)

    rows = run_blocks(block, replicates, seed, threads)
    n = rows.shape[0]
    grid = np.arange(N + 2)
    a = np.searchsorted(np.sort(rows[:, 0]), grid, side="left")
    b = np.searchsorted(np.sort(rows[:, 1]), grid, side="left")
    gaps = np.abs(a - b) / n
    c = int(np.argmax(gaps))
    raw = float(gaps[c])
    eps = math.sqrt(math.log(2 / (alpha / 2)) / (2 * n))
    return TvLowerBound(raw, max(0.0, raw - 2 * eps), c, 2 * eps, n, seed)


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------


def cutoff_profile(p: ProbVector, N: int, Ks, replicates: int, seed: int = 0, threads: int = 1, statistic: str = "ascents") -> list:
    """One row per K: TV lower bound, shared-edge mean and exploration hazard.

    Every K reuses ``seed``, so nested strings give common random numbers across the sweep.
    """
    rows = []
    exact_ok = p.is_uniform and N <= 200
    for K in Ks:
        lb = tv_lower_mc(p, N, K, statistic, replicates, seed, threads)
        row = {"p": str(p), "N": N, "K": K, "K_over_logN": K / math.log(N), "tv_lower": lb.raw, "tv_lower_penalized": lb.penalized}
        if K >= 1:
            ei = mc_edge_intersection(p, N, K, replicates, seed, threads)
            hz = exploration_hazard(p, N, K, replicates, seed, threads)
            row.update(edges_mean=ei.total.mean, edges_se=ei.total.se, hazard=hz.mean, hazard_se=hz.se)
        else:
            row.update(edges_mean=float(N - 1), edges_se=0.0, hazard=float("nan"), hazard_se=float("nan"))
        row["tv_exact"] = float(tv_symmetric_eulerian(p.k, N, K)) if exact_ok else float("nan")
        row.update(provenance(seed, replicates))
        rows.append(row)
    return rows
