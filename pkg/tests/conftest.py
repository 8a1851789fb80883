import numpy as np
import pytest

from lookback_ctmc.model import CEV, CGMY, BlackScholes, Kou, RegimeSwitchingBS
from lookback_ctmc.pricer import LookbackContract

R, D = 0.05, 0.02


@pytest.fixture
def bs():
    return BlackScholes(0.3, R, D)


@pytest.fixture
def rsbs():
    return RegimeSwitchingBS((0.2, 0.4), ((-0.75, 0.75), (0.25, -0.25)), R, D)


@pytest.fixture
def cev():
    return CEV(0.25, -0.5, 0.1, 0.0)


@pytest.fixture
def kou():
    return Kou(0.3, 3.0, 0.5, 0.5, 0.1, 0.1, R, D)


@pytest.fixture
def cgmy():
    return CGMY(1.0, 9.0, 8.0, 0.5, R, D)


@pytest.fixture
def put():
    return LookbackContract("floating_put", 1.0, 1.0, M=1.5, r=R, d=D)


@pytest.fixture
def cev_put():
    return LookbackContract("floating_put", 1.0, 0.5, M=1.0, r=0.1, d=0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_subgenerator(rng, n, conservative=False, density=0.6):
    """Random dense (sub)generator with nonnegative off-diagonal rates."""
    off = rng.exponential(1.0, (n, n)) * (rng.random((n, n)) < density)
    np.fill_diagonal(off, 0.0)
    kill = 0.0 if conservative else rng.exponential(0.5, n) * (rng.random(n) < 0.5)
    return off - np.diag(off.sum(axis=1) + kill)


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion."""
    lines = {}
    for key in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(key, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py::test_criterion_" not in nodeid:
                continue
            k = int(nodeid.split("test_criterion_")[1][:2])
            props = dict(getattr(rep, "user_properties", ()))
            if "criterion" in props:
                lines[k] = props["criterion"]
            elif rep.failed:
                lines[k] = f"FAIL  {rep.when} error: {str(rep.longrepr).splitlines()[-1]}"
    if lines:
        terminalreporter.section("acceptance criteria")
        for k in sorted(lines):
            terminalreporter.write_line(f"criterion {k}: {lines[k]}")
