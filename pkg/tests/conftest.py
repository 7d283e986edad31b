import functools

import numpy as np
import pytest

from boltzspec import collision, discretization, ekformula, landscape, potential, spectrum


@functools.lru_cache(maxsize=None)
def tilted():
    P = potential.tilted_double_well()
    crit, L = landscape.analyze(P)
    return P, crit, L


@functools.lru_cache(maxsize=None)
def triple():
    P = potential.triple_well()
    crit, L = landscape.analyze(P)
    return P, crit, L


@functools.lru_cache(maxsize=None)
def operator(name, h, nx=400, n_hermite=30, scheme="staggered"):
    P = {"tilted": tilted, "triple": triple}[name]()[0]
    return discretization.assemble(P, collision.CollisionModel.bgk(), h, nx, n_hermite, scheme)


@functools.lru_cache(maxsize=None)
def eigs(name, h, count=6):
    return spectrum.small_eigenvalues(operator(name, h), count)


@functools.lru_cache(maxsize=None)
def predictions(name):
    L = {"tilted": tilted, "triple": triple}[name]()[2]
    return ekformula.predict(L, collision.CollisionModel.bgk())


@pytest.fixture
def bgk():
    return collision.CollisionModel.bgk()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ------------------------------------------------------------------ acceptance report

ACCEPTANCE = {}


def record(criterion, ok, detail=""):
    """Store one acceptance outcome; a criterion fails if any of its parts fails."""
    prev_ok, prev = ACCEPTANCE.get(criterion, (True, []))
    ACCEPTANCE[criterion] = (prev_ok and bool(ok), prev + ([detail] if detail else []))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, details = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  " + "; ".join(details))
