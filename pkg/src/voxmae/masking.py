"""Random token masking, padded-batch attention masks, and augmentation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .types import PointCloud


@dataclass(frozen=True)
class MaskPlan:
    """Disjoint visible/masked index partition of a token set.

    |masked| = round(ratio * P), clipped so at least one token stays
    visible. Both index lists are sorted ascending.
    """

    visible_indices: np.ndarray
    masked_indices: np.ndarray
    ratio: float

    @property
    def num_tokens(self) -> int:
        return self.visible_indices.size + self.masked_indices.size


@dataclass(frozen=True)
class AttentionMask:
    """Per-row validity of a padded batch plus the derived allow-matrix."""

    valid: np.ndarray  # (B, Tmax) bool

    @property
    def allow(self) -> np.ndarray:
        """(B, Tmax, Tmax) bool: allow[b, i, j] iff both i and j are valid."""
        return self.valid[:, :, None] & self.valid[:, None, :]


def mask_count(num_tokens: int, ratio: float) -> int:
    """round(ratio * P), clipped to keep at least one token visible."""
    return min(round(ratio * num_tokens), num_tokens - 1)


def random_mask(num_tokens: int, ratio: float, seed: int) -> MaskPlan:
    """Mask a uniformly random subset of tokens; deterministic given seed."""
    if num_tokens < 1:
        raise ValueError("need at least one token")
    if not 0.0 <= ratio < 1.0:
        raise ValueError(f"ratio must be in [0, 1), got {ratio}")
    n_masked = mask_count(num_tokens, ratio)
    perm = np.random.default_rng(seed).permutation(num_tokens)
    return MaskPlan(
        visible_indices=np.sort(perm[n_masked:]),
        masked_indices=np.sort(perm[:n_masked]),
        ratio=ratio,
    )


def build_attention_mask(lengths: list[int], max_tokens: int) -> AttentionMask:
    """Row b gets lengths[b] leading True entries, then False padding."""
    lengths = list(lengths)
    for b, n in enumerate(lengths):
        if n < 1:
            raise ValueError(f"sample {b} is empty")
        if n > max_tokens:
            raise ValueError(f"sample {b} has {n} tokens > max {max_tokens}")
    valid = np.zeros((len(lengths), max_tokens), dtype=bool)
    for b, n in enumerate(lengths):
        valid[b, :n] = True
    return AttentionMask(valid=valid)


def scale_translate(
    pc: PointCloud,
    scales,
    offsets,
    clamp: bool = True,
) -> PointCloud:
    """Scale per axis about the cube center, then translate; colors untouched."""
    pts = pc.points.copy()
    scales = np.asarray(scales, dtype=np.float64)
    offsets = np.asarray(offsets, dtype=np.float64)
    pts[:, :3] = 0.5 + scales * (pts[:, :3] - 0.5) + offsets
    if clamp:
        np.clip(pts[:, :3], 0.0, 1.0, out=pts[:, :3])
    return PointCloud(points=pts)


def augment(
    pc: PointCloud,
    ratio: float,
    seed: int,
    scale: bool = True,
    translate: bool = True,
) -> PointCloud:
    """Random per-axis scaling and global translation, clamped to the cube.

    Scale factors are uniform in [ratio, 1/ratio] about the cube center;
    translation offsets are uniform in +-(1 - ratio)/2 per axis, so
    ratio = 1 is the identity. Six uniforms are always drawn (three scales,
    then three offsets) so the same seed lines up across flag settings.
    """
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"ratio must be in (0, 1], got {ratio}")
    rng = np.random.default_rng(seed)
    scales = rng.uniform(ratio, 1.0 / ratio, size=3)
    half = (1.0 - ratio) / 2.0
    offsets = rng.uniform(-half, half, size=3)
    if not scale:
        scales = np.ones(3)
    if not translate:
        offsets = np.zeros(3)
    return scale_translate(pc, scales, offsets, clamp=True)
