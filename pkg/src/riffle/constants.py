"""Closed-form cutoff constants for p-shuffles.

All logarithms are natural.  ``cutoff_constants(p).Cbar * log(N)`` is the
predicted mixing time of a deck of ``N`` cards.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .core import ProbVector, ValidationError

THETA_BRACKET = (2.0, 64.0)
THETA_TOL = 1e-12

TABLE1_DECKS = (52, 104, 208, 520)
TABLE1_PS = (0.5, 0.6, 0.7, 0.8, 0.9, 0.95)


def _check_t(t: float):
    if not t > 0:
        raise ValidationError(f"exponent t must be positive, got {t}")


def phi(p: ProbVector, t: float) -> float:
    _check_t(t)
    return float(np.sum(p.array ** t))


def psi(p: ProbVector, t: float) -> float:
    return -math.log(phi(p, t))


def tilt(p: ProbVector, t: float) -> ProbVector:
    """The tilted distribution with weights proportional to ``p_i ** t``."""
    _check_t(t)
    w = p.array ** t
    return ProbVector(tuple(w / w.sum()))


def tilt_array(p: ProbVector, t: float) -> np.ndarray:
    _check_t(t)
    w = p.array ** t
    return w / w.sum()


def entropy(a) -> float:
    """Entropy of the weights ``a / sum(a)``; zero for the all-zero tuple."""
    a = np.asarray(a, dtype=float)
    if np.any(a < 0):
        raise ValidationError("entropy weights must be non-negative")
    tot = a.sum()
    if tot == 0:
        return 0.0
    nz = a[a > 0]
    return float(np.sum(nz * np.log(tot / nz)) / tot)


def rate_I(p: ProbVector, t: float) -> float:
    """Mean of ``log(1/p_i)`` under the tilted distribution ``p^t``."""
    return float(np.sum(tilt_array(p, t) * -np.log(p.array)))


def theta(p: ProbVector) -> float:
    """Root of ``phi(theta) = phi(2)**2``, by bisection in log space."""
    logp = np.log(p.array)
    target = 2.0 * math.log(phi(p, 2.0))

    def g(t):
        # log phi(t) is strictly decreasing in t
        m = logp.max()
        return m * t + math.log(np.sum(np.exp(t * (logp - m)))) - target

    lo, hi = THETA_BRACKET
    glo, ghi = g(lo), g(hi)
    if not (glo > 0 > ghi):
        raise RuntimeError(f"theta root not bracketed for p={p}: g(lo)={glo}, g(hi)={ghi}")
    while hi - lo > THETA_TOL:
        mid = 0.5 * (lo + hi)
        if g(mid) > 0:
            lo = mid
        else:
            hi = mid
        if mid in (lo, hi) and hi - lo <= 4 * np.spacing(mid):
            break
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class CutoffConstants:
    phi2: float
    psi2: float
    theta: float
    C: float
    Ctilde: float
    Cbar: float
    Cunder: float

    def as_dict(self) -> dict:
        return asdict(self)


def cutoff_constants(p: ProbVector) -> CutoffConstants:
    phi2 = phi(p, 2.0)
    psi2 = -math.log(phi2)
    th = theta(p)
    C = (3.0 + th) / (4.0 * psi2)
    Ctilde = 1.0 / math.log(1.0 / p.p_max)
    edge = max(1.0 / math.log(1.0 / p.array[0]), 1.0 / math.log(1.0 / p.array[-1]))
    return CutoffConstants(
        phi2=phi2,
        psi2=psi2,
        theta=th,
        C=C,
        Ctilde=Ctilde,
        Cbar=max(C, Ctilde),
        Cunder=max(C, edge),
    )


def _two(q: float) -> ProbVector:
    return ProbVector(np.array([q, 1.0 - q]))


def _gap(q: float) -> float:
    c = cutoff_constants(_two(q))
    return c.C - c.Ctilde


def _bisect(f, lo: float, hi: float, tol: float) -> float:
    flo = f(lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def crossover_points(tol: float = 1e-9) -> tuple:
    """The two values of ``p`` where ``C = Ctilde`` for ``(p, 1-p)``."""
    lower = _bisect(_gap, 0.01, 0.5, tol)
    upper = _bisect(_gap, 0.5, 0.99, tol)
    return lower, upper


def mixing_time(p: ProbVector, N: int) -> float:
    return cutoff_constants(p).Cbar * math.log(N)


def mixing_table(ps=TABLE1_PS, decks=TABLE1_DECKS) -> list:
    """Rows ``(N, [Cbar * log N for each p])`` plus a final coefficient row ``(None, [Cbar])``."""
    cbars = [cutoff_constants(_two(q)).Cbar for q in ps]
    rows = [(N, [c * math.log(N) for c in cbars]) for N in decks]
    rows.append((None, cbars))
    return rows
