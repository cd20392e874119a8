"""Shared helpers for the test suite."""

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


def random_complex(rng, shape, scale=1.0):
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def random_hermitian(rng, n, scale=1.0):
    Z = random_complex(rng, (n, n), scale)
    return 0.5 * (Z + Z.conj().T)


def random_psd(rng, n, rank=None, scale=1.0):
    rank = n if rank is None else rank
    Z = random_complex(rng, (n, rank), scale)
    return Z @ Z.conj().T


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# Acceptance criteria register their verdicts here; the terminal summary
# prints one line per criterion whether or not the test passed.
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
