import numpy as np
import pytest
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays


def random_posteriors(rng, T, V, peaky=True):
    """Random simplex rows; ``peaky`` sharpens them so blank-dominant frames occur."""
    logits = rng.normal(size=(T, V)) * (3.0 if peaky else 1.0)
    e = np.exp(logits - logits.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


@st.composite
def posterior_seqs(draw, max_T=30, V=None):
    V = draw(st.integers(2, 6)) if V is None else V
    T = draw(st.integers(0, max_T))
    raw = draw(arrays(np.float64, (T, V), elements=st.floats(0.0, 1.0)))
    raw = raw + 1e-3
    return raw / raw.sum(axis=1, keepdims=True)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_configure(config):
    config._criteria = []


@pytest.fixture
def criterion(request, capsys):
    """Record one acceptance line: ``criterion(n, ok, detail)``; printed in the terminal summary."""
    def record(n, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}"
        request.config._criteria.append((n, line))
        with capsys.disabled():
            print("\n" + line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_criteria", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
