import numpy as np
import pytest

from voxmae.types import PointCloud


def make_cloud(coords, colors=None) -> PointCloud:
    coords = np.asarray(coords, dtype=np.float64)
    if colors is None:
        colors = np.full_like(coords, 0.5)
    else:
        colors = np.asarray(colors, dtype=np.float64)
    return PointCloud(points=np.hstack([coords, colors]))


def random_cloud(n: int, seed: int) -> PointCloud:
    rng = np.random.default_rng(seed)
    return PointCloud(points=rng.uniform(0.0, 1.0, size=(n, 6)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
