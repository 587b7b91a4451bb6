import os

import hypothesis
import numpy as np
import pytest

from gmvp import random_instance
from qaoa import CircuitGeometry

np.seterr(all="warn")

hypothesis.settings.register_profile("fast", max_examples=5, deadline=None)
hypothesis.settings.register_profile("ci", max_examples=25, deadline=None)
hypothesis.settings.register_profile("debugger", report_multiple_bugs=False, deadline=None)
hypothesis.settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "ci"))

THETA_STAR = (0.0, 0.0, 0.14286, 0.85714)


@pytest.fixture(scope="session")
def default_instance():
    return random_instance(42, 4, 3, 3)


@pytest.fixture(scope="session")
def default_geometry():
    return CircuitGeometry.build(4, 3, 3, 2)


@pytest.fixture(scope="session")
def small_instance():
    return random_instance(5, 2, 2, 2)


@pytest.fixture(scope="session")
def small_geometry():
    return CircuitGeometry.build(2, 2, 2, 2)
