"""Lift an RGB image plus a dense depth map into a canonical point cloud.

Every pixel becomes one point. The image width maps to x, the image height
to z with row 0 at the top (so z is positive up), and depth to y (larger
depth = farther = larger y). All axes are min-max normalized into [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .types import PointCloud, renormalize_cloud


@dataclass(frozen=True)
class DepthImage:
    """An RGB image with per-pixel depth.

    rgb: (H, W, 3) float64 in [0, 1]; depth: (H, W) float64, finite,
    arbitrary scale with larger values meaning farther from the camera.
    """

    rgb: np.ndarray
    depth: np.ndarray

    def __post_init__(self):
        rgb = np.asarray(self.rgb, dtype=np.float64)
        depth = np.asarray(self.depth, dtype=np.float64)
        if rgb.ndim != 3 or rgb.shape[2] != 3:
            raise ValueError(f"rgb must be (H, W, 3), got {rgb.shape}")
        if depth.shape != rgb.shape[:2]:
            raise ValueError(
                f"depth shape {depth.shape} does not match image {rgb.shape[:2]}"
            )
        object.__setattr__(self, "rgb", rgb)
        object.__setattr__(self, "depth", depth)

    @property
    def width(self) -> int:
        return self.rgb.shape[1]

    @property
    def height(self) -> int:
        return self.rgb.shape[0]


def lift(img: DepthImage) -> PointCloud:
    """Turn each pixel into a point: x = column, z = flipped row, y = depth.

    Pixel (row r, column c) maps to x = c / max(W-1, 1) and
    z = (H-1-r) / max(H-1, 1); y is the min-max normalized depth (0.5 when
    depth is constant). Points are emitted in row-major pixel order and the
    result is renormalized, so degenerate axes land on 0.5.
    """
    h, w = img.height, img.width
    if h * w == 0:
        raise ValueError("image has no pixels")
    if not np.isfinite(img.depth).all():
        raise ValueError("depth map contains non-finite values")

    cols, rows = np.meshgrid(np.arange(w), np.arange(h))
    x = cols.ravel() / max(w - 1, 1)
    z = (h - 1 - rows.ravel()) / max(h - 1, 1)

    depth = img.depth.ravel().astype(np.float64)
    dmin, dmax = depth.min(), depth.max()
    if dmax == dmin:
        y = np.full(depth.shape, 0.5)
    else:
        y = (depth - dmin) / (dmax - dmin)

    colors = img.rgb.reshape(-1, 3)
    points = np.column_stack([x, y, z, colors])
    return renormalize_cloud(PointCloud(points=points))


def rotate_z(pc: PointCloud, angle: float, renormalize: bool = True) -> PointCloud:
    """Rotate the cloud about the vertical axis through the cube center.

    (x, y) rotates by ``angle`` radians around (0.5, 0.5); z and colors are
    untouched. With ``renormalize`` (the default) the result is min-max
    rescaled back into the unit cube; pass False to inspect the raw rotation
    (coordinates may then leave [0, 1]).
    """
    pts = pc.points.copy()
    c, s = np.cos(angle), np.sin(angle)
    # Snap trig roundoff at multiples of pi/2 to exact values: otherwise a
    # half turn leaves a constant axis with a ~1e-16 span that the min-max
    # renormalization would blow up to [0, 1].
    if abs(s) < 1e-15:
        s = 0.0
    if abs(c) < 1e-15:
        c = 0.0
    dx = pts[:, 0] - 0.5
    dy = pts[:, 1] - 0.5
    pts[:, 0] = 0.5 + c * dx - s * dy
    pts[:, 1] = 0.5 + s * dx + c * dy
    rotated = PointCloud(points=pts)
    return renormalize_cloud(rotated) if renormalize else rotated
