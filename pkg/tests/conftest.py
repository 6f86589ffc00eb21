import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_F(rng, n=None, amp=0.25):
    """Deformation gradients near identity with det F > 0.3."""
    from gedamage.verify import random_deformation

    out = random_deformation(rng, 1 if n is None else n, amplitude=amp)
    return out[0] if n is None else out


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE = {}


def record(criterion, passed, detail):
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {criterion}: {detail}"
    ACCEPTANCE[criterion] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
