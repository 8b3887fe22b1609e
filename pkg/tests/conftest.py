import math

import pytest
from hypothesis import HealthCheck, settings

from cmcond.types import ConverterConfig, constant_off_time, constant_on_time, make_buck_config

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def table1():
    """Buck stage of the constant on-time prototype."""
    return make_buck_config(12.0, 2.0, 240e-9, 100e-6, 0.2, 0.01)


@pytest.fixture
def cot():
    return constant_on_time(100e-9)


@pytest.fixture
def coft():
    # off-time chosen so the nominal on-time is 100 ns at the table1 slopes
    return constant_off_time(500e-9, 80e-9)


@pytest.fixture
def unit_loop():
    """m1 = m2 = 1 A/s, constant off-time 1 s, so T_on = 1 s."""
    return ConverterConfig.from_slopes(1.0, 1.0), constant_off_time(1.0)


TWO_PI = 2 * math.pi
