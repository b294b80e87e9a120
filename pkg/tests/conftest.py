from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from riffle.core import ProbVector

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@st.composite
def prob_vectors(draw, k_min=2, k_max=6, floor=1e-3):
    k = draw(st.integers(k_min, k_max))
    raw = draw(st.lists(st.floats(floor, 1.0), min_size=k, max_size=k))
    w = np.asarray(raw) / sum(raw)
    return ProbVector(tuple(float(x) for x in w))


def random_p(rng: np.random.Generator, k: int) -> ProbVector:
    w = rng.dirichlet(np.ones(k))
    w = np.maximum(w, 1e-3)
    return ProbVector(tuple(float(x) for x in w / w.sum()))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_KEY = pytest.StashKey[dict]()


@pytest.fixture
def acceptance(request):
    """``report(n, ok, detail)`` records one acceptance line and fails the test if ``ok`` is false."""
    lines = request.config.stash.setdefault(ACCEPTANCE_KEY, {})

    def report(n: int, ok: bool, detail: str):
        line = f"{'PASS' if ok else 'FAIL'} criterion {n:2d}: {detail}"
        lines[n] = line
        print(line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
