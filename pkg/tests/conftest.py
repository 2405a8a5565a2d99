import math

import numpy as np
import pytest

from drise.model import LtvModel


def erf_series(x: float, terms: int = 80) -> float:
    """Maclaurin series of erf, summed term by term. Independent of math.erf."""
    total, term = 0.0, x
    for n in range(terms):
        total += term / (2 * n + 1)
        term *= -x * x / (n + 1)
    return 2.0 / math.sqrt(math.pi) * total


def phi_series(z: float) -> float:
    return 0.5 * (1.0 + erf_series(z / math.sqrt(2.0)))


def scalar_model(A=1.0, B=0.0, G=1.0, C=1.0, Q=1.0, R=1.0, p=1):
    G = np.array([[G]]) if p else np.zeros((1, 0))
    return LtvModel(A=[[A]], B=[[B]], G=G, C=[[C]], Q=[[Q]], R=[[R]])


def random_psd(rng, n, rank=None, scale=1.0):
    L = rng.standard_normal((n, rank or n))
    return scale * L @ L.T


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# One line per acceptance criterion, filled in by test_acceptance.py.
CRITERIA: dict = {}


def record_criterion(label, ok: bool, detail: str) -> None:
    line = f"criterion {str(label):>3}: {'PASS' if ok else 'FAIL'}  {detail}"
    CRITERIA[str(label)] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in CRITERIA.values():
            terminalreporter.write_line(line)
