"""Shared fixtures for the ProxScale test suite."""
import os
import sys

import numpy as np
import pytest

# Make `core` and `cli` importable when pytest runs from the project root
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.spectral import CovarianceSpec  # noqa: E402
from core.targets import PsiKind, TargetSpec, make_target  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(20240101)


@pytest.fixture
def sobolev_cov():
    return CovarianceSpec(kappa=1.0, s=0.25, dim=16)


@pytest.fixture
def zero_target():
    return make_target("zero", dim=16, kappa=1.0, s=0.0)


@pytest.fixture
def product_target():
    return make_target("zero", dim=16, product=True)


@pytest.fixture
def qs_target(sobolev_cov):
    return TargetSpec(cov=sobolev_cov, psi_kind=PsiKind.QUADRATIC_SOBOLEV)


@pytest.fixture
def logcosh_target(sobolev_cov):
    return TargetSpec(cov=sobolev_cov, psi_kind=PsiKind.LOG_COSH, weights=(1.0, 0.5, 0.25))


@pytest.fixture
def output_root(tmp_path, monkeypatch):
    monkeypatch.setenv("PROXSCALE_OUTPUT_ROOT", str(tmp_path))
    return tmp_path
