"""Deterministic synthetic point clouds for benchmarks and smoke training."""

from __future__ import annotations

import numpy as np

from .types import PointCloud, renormalize_cloud

PRIMITIVES = ("sphere", "box", "cylinder", "plane", "torus")


def uniform_cloud(n: int, seed: int) -> PointCloud:
    """n points uniform in the unit cube with uniform random colors."""
    rng = np.random.default_rng(seed)
    return PointCloud(points=rng.uniform(0.0, 1.0, size=(n, 6)))


def _surface(kind: str, n: int, rng: np.random.Generator) -> np.ndarray:
    u = rng.uniform(0.0, 2.0 * np.pi, size=n)
    if kind == "sphere":
        cos_t = rng.uniform(-1.0, 1.0, size=n)
        sin_t = np.sqrt(1.0 - cos_t**2)
        return np.column_stack([sin_t * np.cos(u), sin_t * np.sin(u), cos_t])
    if kind == "cylinder":
        z = rng.uniform(-1.0, 1.0, size=n)
        return np.column_stack([np.cos(u), np.sin(u), z])
    if kind == "torus":
        v = rng.uniform(0.0, 2.0 * np.pi, size=n)
        r_minor = 0.4
        return np.column_stack(
            [
                (1.0 + r_minor * np.cos(v)) * np.cos(u),
                (1.0 + r_minor * np.cos(v)) * np.sin(u),
                r_minor * np.sin(v),
            ]
        )
    if kind == "plane":
        xy = rng.uniform(-1.0, 1.0, size=(n, 2))
        ripple = 0.1 * np.sin(3.0 * xy[:, 0]) * np.cos(3.0 * xy[:, 1])
        return np.column_stack([xy, ripple])
    # box surface: pick a face, then a point on it
    face = rng.integers(0, 6, size=n)
    pts = rng.uniform(-1.0, 1.0, size=(n, 3))
    axis = face // 2
    sign = np.where(face % 2 == 0, -1.0, 1.0)
    pts[np.arange(n), axis] = sign
    return pts


def primitive_cloud(n: int, seed: int) -> PointCloud:
    """A random geometric primitive surface with a color gradient.

    The shape is scaled, rotated, and jittered, then renormalized into the
    cube; colors interpolate between two random endpoints along a random
    spatial direction.
    """
    rng = np.random.default_rng(seed)
    kind = PRIMITIVES[rng.integers(0, len(PRIMITIVES))]
    coords = _surface(kind, n, rng)
    coords *= rng.uniform(0.5, 1.5, size=3)
    theta = rng.uniform(0.0, 2.0 * np.pi)
    c, s = np.cos(theta), np.sin(theta)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    coords = coords @ rot.T
    coords += rng.normal(0.0, 0.01, size=coords.shape)

    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    t = coords @ direction
    t = (t - t.min()) / max(t.max() - t.min(), 1e-12)
    c0 = rng.uniform(0.0, 1.0, size=3)
    c1 = rng.uniform(0.0, 1.0, size=3)
    colors = c0 + t[:, None] * (c1 - c0)

    cloud = PointCloud(points=np.column_stack([coords, colors]))
    return renormalize_cloud(cloud)


def smoke_corpus(
    count: int = 64, seed: int = 0, min_points: int = 2000, max_points: int = 10000
) -> list[PointCloud]:
    """The small training corpus: primitives with 2k-10k points each."""
    rng = np.random.default_rng(seed)
    clouds = []
    for i in range(count):
        n = int(rng.integers(min_points, max_points + 1))
        clouds.append(primitive_cloud(n, seed + 1000 + i))
    return clouds
