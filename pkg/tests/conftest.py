import sys
from pathlib import Path

import numpy as np
import pytest

from ultrafit import kernels
from ultrafit.dataset import PointSet, dedupe, load_csv, standardize

DATA = Path(__file__).resolve().parents[1] / "src" / "ultrafit" / "data"


def fixture_points(name: str) -> PointSet:
    """A bundled dataset, deduplicated and z-scored."""
    ps, _ = dedupe(load_csv(DATA / f"{name}.csv"))
    return standardize(ps)


@pytest.fixture
def collinear():
    return PointSet(np.array([[0.0], [1.0], [3.0]]))


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    prev = kernels.backend()
    kernels.use_backend(request.param)
    yield request.param
    kernels.use_backend(prev)


def pytest_report_header(config):
    return f"ultrafit kernels: {kernels.backend()} (available: {', '.join(kernels.available_backends())})"


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
