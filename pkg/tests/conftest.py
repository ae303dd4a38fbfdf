import importlib

import numpy as np
import pytest

from xover.design import OaSpec, construct_oa, parse_design
from xover.model import CovarianceSpec, StudyConfig

_ACCEPTANCE = pytest.StashKey[list]()


def _backend_modules():
    mods = [pytest.param(importlib.import_module("xover._pykernels"), id="python")]
    try:
        mods.append(pytest.param(importlib.import_module("xover._ckernels"), id="cython"))
    except ImportError:
        mods.append(pytest.param(None, id="cython", marks=pytest.mark.skip("compiled kernels not built")))
    return mods


@pytest.fixture(params=_backend_modules())
def kernels(request):
    """Each available kernel backend in turn."""
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def d0():
    """Three sequences ACB, BAC, CBA, each given to six subjects (n = 18)."""
    return parse_design("\n".join(["A,C,B", "B,A,C", "C,B,A"] * 6), 3)


@pytest.fixture(scope="session")
def oa3():
    return construct_oa(OaSpec(3, 1))


def bivariate(r: float) -> StudyConfig:
    """sigma^2 = (2, 1); AR(1) and equi-correlated covariances sharing r."""
    return StudyConfig.of((2.0, CovarianceSpec.ar1(r)), (1.0, CovarianceSpec.equicorr(r)))


@pytest.fixture(scope="session")
def study():
    return bivariate(0.3)


@pytest.fixture
def acceptance_record(request):
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(number: int, ok: bool, detail: str) -> None:
        lines.append(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
