import math
import os

import numpy as np
import pytest
from hypothesis import settings

os.environ.setdefault("SDSM_WORKERS", "1")

settings.register_profile("sdsm", deadline=None, max_examples=60, derandomize=True)
settings.load_profile("sdsm")

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def report_line():
    def emit(number, title, passed, detail):
        line = f"criterion {number} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return emit


def brute_rho(h, x, lo=-30.0, hi=30.0, n=600001):
    """rho(x) = int h(y - x) h(y) dy by a dense trapezoid sum."""
    y = np.linspace(lo, hi, n)
    return float(np.trapezoid(h(y - x) * h(y), y))


def gauss_heat(amplitude, center, width, variance):
    """Heat semigroup applied to a gaussian bump, written out independently of the package."""
    w2 = width * width + variance
    return lambda y: amplitude * width / math.sqrt(w2) * np.exp(-0.5 * (np.asarray(y) - center) ** 2 / w2)


def sample_cov_z(samples, target):
    """Elementwise z-scores of the sample second moments of zero-mean draws against ``target``."""
    n = samples.shape[0]
    prods = samples[:, :, None] * samples[:, None, :]
    est = prods.mean(axis=0)
    se = prods.std(axis=0, ddof=1) / math.sqrt(n)
    se = np.where(se > 0, se, np.inf)
    return (est - target) / se


TINY_CONFIG = {
    "forward": {"theta": 20, "replicates": 40, "dt_max": 0.01, "snapshots": [0.1, 0.2], "horizon": 0.2},
    "dual": {"replicates": 60, "t": 0.2},
    "mass_check": {"replicates": 40, "times": [0.1]},
    "rescaling": {"theta_list": [1, 2], "replicates": 10, "particles_per_mass": 20, "dt_max": 0.01},
    "catalyst": {"k_list": [1, 2], "forward_replicates": 20, "dual_replicates": 40, "theta": 20},
    "kernel_info": {"points": 5},
}
