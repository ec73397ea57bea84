import math

import numpy as np
import pytest

from kornlab import geometry


@pytest.fixture(scope="session")
def cyl():
    return geometry.circular_cylinder()


@pytest.fixture(scope="session")
def cone():
    return geometry.cone_circle(math.pi / 4, 1.0, 2.0)


@pytest.fixture(scope="session")
def ellipse():
    return geometry.ellipse_cylinder(2.0, 1.0, n=512)


@pytest.fixture(scope="session")
def wavy():
    """Abstract surface with a = 1, b = 2 + sin(theta): not separable."""
    return geometry.build_surface("x", 1, "2 + sin(x)", 1, 2 * math.pi, (1.0, 2.0), name="wavy")


@pytest.fixture(scope="session")
def flat_patch():
    return geometry.cylinder_flat_patch()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
