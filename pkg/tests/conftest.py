import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from npiv_indep.simulate import DgpSpec, generate, true_curve
from npiv_indep.smoothing import CurveEstimate

settings.register_profile(
    "default", max_examples=40, deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def dgp1_sample():
    """One DGP1 draw (n = 1000, seed 11) with the truth as a curve."""
    spec = DgpSpec("quadratic", n=1000, seed=11)
    sample, _ = generate(spec)
    grid = np.linspace(sample.z.min(), sample.z.max(), 101)
    truth = CurveEstimate.from_function(true_curve(spec), grid, sample.z)
    return sample, truth


@pytest.fixture(scope="session")
def small_sample():
    spec = DgpSpec("quadratic", n=150, seed=5)
    sample, _ = generate(spec)
    return sample


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = {}


@pytest.fixture(scope="session")
def acceptance_report():
    def report(k: int, ok: bool, detail: str) -> bool:
        line = f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES[k] = line
        print(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
