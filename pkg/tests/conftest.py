import pytest

from midpole.mid_design import design_two_delay


@pytest.fixture
def mid_012():
    """Two-delay MID design with a0 = 0 and delays 1, 2."""
    return design_two_delay(0.0, 1.0, 2.0)
