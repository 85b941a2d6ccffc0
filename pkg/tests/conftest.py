import numpy as np
import pytest

from robust_tr.moments import ScatterPair

# lines printed at the end of the run by the acceptance suite
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def make_pencil(rng, p=20, rank=10):
    a = rng.standard_normal((p, rank))
    a -= a.mean(axis=1, keepdims=True)
    w = np.diag(np.arange(1.0, p + 1))
    return ScatterPair(a @ a.T, w, w.copy(), None, "random")


def random_spd(rng, p, cond=10.0):
    q, _ = np.linalg.qr(rng.standard_normal((p, p)))
    lam = np.exp(rng.uniform(0, np.log(cond), p))
    return (q * lam) @ q.T


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
