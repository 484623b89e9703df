import numpy as np
import pytest

from vecmap.geometry import Polyline


@pytest.fixture
def gen():
    return np.random.default_rng(1234)


def random_chain(gen, n, step=(0.5, 2.0), turn=0.6):
    """A wandering open chain with no repeated vertices."""
    heading = np.cumsum(gen.uniform(-turn, turn, n - 1))
    lengths = gen.uniform(*step, n - 1)
    steps = lengths[:, None] * np.column_stack([np.cos(heading), np.sin(heading)])
    return np.vstack([[0.0, 0.0], np.cumsum(steps, axis=0)])


def random_polygon(gen, n, radius=(2.0, 4.0)):
    """A star-shaped simple polygon, counter-clockwise."""
    angles = np.sort(gen.uniform(0, 2 * np.pi, n))
    angles += np.linspace(0, 1e-3, n)  # keep angles distinct
    r = gen.uniform(*radius, n)
    return np.column_stack([r * np.cos(angles), r * np.sin(angles)])


@pytest.fixture
def unit_square():
    return Polyline([(0, 0), (1, 0), (1, 1), (0, 1)], closed=True)
