from __future__ import annotations

import pytest
from hypothesis import HealthCheck, settings

from evanecho.acceptance import reference_ensemble, reference_stack
from evanecho.waveguide import solve_te_fundamental

settings.register_profile(
    "ci",
    derandomize=True,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")


@pytest.fixture(scope="session")
def ref_stack():
    return reference_stack()


@pytest.fixture(scope="session")
def ref_mode(ref_stack):
    return solve_te_fundamental(ref_stack)


@pytest.fixture(scope="session")
def ref_ensemble():
    return reference_ensemble()
