import pytest

from ensemble_repeater.params import RepeaterParams


@pytest.fixture
def working_point():
    """Reference working point: 1000 km, 16 links, 90% memory and detector efficiency."""
    return RepeaterParams(alpha2=0.2, eta_m=0.9, eta_d=0.9, p=6e-3, r=60e6, L_total=1000.0, n=4)
