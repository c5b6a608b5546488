"""Core domain types shared by every stage of the pipeline.

All geometry lives in a canonical unit cube: coordinates and colors are
float64 in [0, 1]. Types are plain numpy-backed dataclasses; treat them as
immutable value objects (no method mutates its receiver).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

POINT_FEATURES = 6  # x, y, z, r, g, b
PATCH_FEATURES = 12  # x, y, z, r, g, b, x', y', z', cx, cy, cz


@dataclass(frozen=True)
class PointCloud:
    """Variable-length point cloud with canonical coordinates and colors.

    points: (N, 6) float64 array, columns [x, y, z, r, g, b], all in [0, 1]
    for a valid cloud (see :func:`validate_cloud`).
    """

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != POINT_FEATURES:
            raise ValueError(f"points must be (N, 6), got {pts.shape}")
        object.__setattr__(self, "points", pts)

    @property
    def count(self) -> int:
        return self.points.shape[0]

    @property
    def coords(self) -> np.ndarray:
        return self.points[:, :3]

    @property
    def colors(self) -> np.ndarray:
        return self.points[:, 3:]


@dataclass(frozen=True)
class VoxelGrid:
    """Sparse voxel grid: one representative 6-feature point per occupied cell.

    coords: (M, 3) int64 discrete (m, n, q) triples, each in [0, space_size),
    unique rows, sorted lexicographically. features: (M, 6) float64 carrying
    the representative point of each voxel.
    """

    coords: np.ndarray
    features: np.ndarray
    voxel_size: float
    space_size: int

    def __post_init__(self):
        if self.coords.shape != (self.features.shape[0], 3):
            raise ValueError("coords must be (M, 3) aligned with features")
        if self.features.ndim != 2 or self.features.shape[1] != POINT_FEATURES:
            raise ValueError("features must be (M, 6)")

    @property
    def count(self) -> int:
        return self.coords.shape[0]


@dataclass(frozen=True)
class RawPatch:
    """One patch straight out of partitioning, before graph features.

    position is the patch's minimum corner (each component a multiple of the
    patch size); features is (L, 6); cells holds each voxel's within-patch
    flat index d in [0, a^3), pairwise distinct, sorted ascending.
    """

    position: np.ndarray
    features: np.ndarray
    cells: np.ndarray


@dataclass(frozen=True)
class Patch:
    """Patch with graph-augmented 12-feature voxels.

    Feature columns are [x, y, z, r, g, b, x', y', z', cx, cy, cz]: the raw
    point, its offset from the patch centroid, and the centroid itself (the
    last three columns are constant within a patch).
    """

    position: np.ndarray
    features: np.ndarray
    cells: np.ndarray

    @property
    def size(self) -> int:
        return self.features.shape[0]


@dataclass(frozen=True)
class TokenSet:
    """Embedded tokens for one sample.

    tokens: (P, C) float64; positions: (P, 3) int64 min corners;
    pos_embeddings: (P, C) float64 (zeros when no positional parameters were
    supplied); valid_mask: (P,) bool, all True for a single sample.
    """

    tokens: np.ndarray
    positions: np.ndarray
    pos_embeddings: np.ndarray
    valid_mask: np.ndarray

    @property
    def count(self) -> int:
        return self.tokens.shape[0]


@dataclass(frozen=True)
class WeightTable:
    """The a^3 shared trainable weight matrices of the sparse tokenizer.

    weights: (a^3, 12, C) float64; row d embeds any voxel whose within-patch
    flat index is d, so the table is shared across all patches.
    """

    weights: np.ndarray
    patch_size: int
    embed_dim: int

    def __post_init__(self):
        a3 = self.patch_size**3
        expect = (a3, PATCH_FEATURES, self.embed_dim)
        if self.weights.shape != expect:
            raise ValueError(f"weights must be {expect}, got {self.weights.shape}")

    @classmethod
    def random(cls, patch_size: int, embed_dim: int, seed: int = 0) -> "WeightTable":
        rng = np.random.default_rng(seed)
        w = rng.normal(0.0, 0.02, size=(patch_size**3, PATCH_FEATURES, embed_dim))
        return cls(weights=w, patch_size=patch_size, embed_dim=embed_dim)

    @classmethod
    def zeros(cls, patch_size: int, embed_dim: int) -> "WeightTable":
        w = np.zeros((patch_size**3, PATCH_FEATURES, embed_dim))
        return cls(weights=w, patch_size=patch_size, embed_dim=embed_dim)


@dataclass(frozen=True)
class ValidationResult:
    """Outcome of validate_cloud: ok, or up to the first 10 violations."""

    ok: bool
    violations: list[str] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.ok


MAX_REPORTED_VIOLATIONS = 10


def validate_cloud(pc: PointCloud) -> ValidationResult:
    """Check every PointCloud invariant; report the first 10 violations.

    A value is in range iff 0 <= v <= 1 (NaN therefore always violates).
    """
    violations: list[str] = []
    if pc.count < 1:
        violations.append("N must be >= 1 (empty cloud)")
        return ValidationResult(ok=False, violations=violations)

    names = ("x", "y", "z", "r", "g", "b")
    in_range = (pc.points >= 0.0) & (pc.points <= 1.0)
    bad_pts, bad_cols = np.nonzero(~in_range)
    for pt, col in zip(bad_pts, bad_cols):
        if len(violations) >= MAX_REPORTED_VIOLATIONS:
            break
        kind = "coordinate" if col < 3 else "color"
        violations.append(
            f"point {pt}: {kind} {names[col]} out of range ({pc.points[pt, col]!r})"
        )
    return ValidationResult(ok=not violations, violations=violations)


def renormalize_cloud(pc: PointCloud) -> PointCloud:
    """Min-max rescale each coordinate axis independently onto [0, 1].

    A constant axis maps to 0.5 (the cube center) to avoid dividing by zero.
    Colors pass through untouched. Idempotent.
    """
    if pc.count < 1:
        raise ValueError("cannot renormalize an empty cloud")
    pts = pc.points.copy()
    for axis in range(3):
        lo = pts[:, axis].min()
        hi = pts[:, axis].max()
        if hi == lo:
            pts[:, axis] = 0.5
        else:
            pts[:, axis] = (pts[:, axis] - lo) / (hi - lo)
    return PointCloud(points=pts)
