"""The sparse voxel tokenizer: voxelize, partition, embed.

The pipeline turns a point cloud into tokens in three linear-time steps:

1. voxelize: floor-divide coordinates by the voxel size, keep one
   representative point per occupied cell.
2. partition: group voxels into a*a*a patches keyed by their minimum corner.
3. embed: augment each voxel with graph features (centroid + offset), index
   one of a^3 shared 12xC weight matrices by the voxel's within-patch cell,
   and mean-reduce each patch into a single token.

Positional embeddings map each patch's minimum corner through a small
linear-GELU-linear MLP. Stages accept an optional duck-typed counter with
an ``add(stage, flops)`` method; counts follow the published accounting
rules (multiply-accumulate = 2 FLOPs, integer hashing and comparisons = 0).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .types import (
    PATCH_FEATURES,
    Patch,
    PointCloud,
    RawPatch,
    TokenSet,
    VoxelGrid,
    WeightTable,
)

SQRT2 = np.sqrt(2.0)


def gelu(x: np.ndarray) -> np.ndarray:
    """Exact (erf-based) GELU."""
    return 0.5 * x * (1.0 + erf(x / SQRT2))


@dataclass(frozen=True)
class TokenizerConfig:
    """Geometry and embedding dimensions of the sparse tokenizer."""

    voxel_size: float = 1.0 / 224.0
    space_size: int = 224
    patch_size: int = 16
    embed_dim: int = 384
    posembed_hidden: int = 128

    def __post_init__(self):
        if self.patch_size < 1:
            raise ValueError("patch_size must be >= 1")
        if self.embed_dim < 1:
            raise ValueError("embed_dim must be >= 1")
        if self.space_size % self.patch_size != 0:
            raise ValueError(
                f"space_size {self.space_size} not divisible by patch_size {self.patch_size}"
            )
        if abs(self.voxel_size * self.space_size - 1.0) > 1e-9:
            raise ValueError("voxel_size * space_size must equal 1")

    @property
    def cells_per_patch(self) -> int:
        return self.patch_size**3

    @property
    def patches_per_axis(self) -> int:
        return self.space_size // self.patch_size

    @classmethod
    def desk(cls, embed_dim: int = 32) -> "TokenizerConfig":
        """Small configuration for fast tests and CPU training."""
        return cls(
            voxel_size=1.0 / 32.0,
            space_size=32,
            patch_size=4,
            embed_dim=embed_dim,
            posembed_hidden=32,
        )


def voxel_indices(coords: np.ndarray, voxel_size: float) -> np.ndarray:
    """Unclamped discrete indices floor(coord / voxel_size)."""
    return np.floor(np.asarray(coords, dtype=np.float64) / voxel_size).astype(np.int64)


def voxelize(pc: PointCloud, cfg: TokenizerConfig, counter=None) -> VoxelGrid:
    """Discretize a cloud, keeping one representative point per voxel.

    Indices are clamped to [0, S-1] so coordinate 1.0 stays inside the grid.
    When several points fall in one voxel the representative is the point
    with the largest feature sum x+y+z+r+g+b, ties broken by smallest
    original point index.
    """
    n = pc.count
    idx = voxel_indices(pc.coords, cfg.voxel_size)
    np.clip(idx, 0, cfg.space_size - 1, out=idx)
    if counter is not None:
        counter.add("voxelize", 6 * n)  # divide + floor per coordinate

    flat = (idx[:, 0] * cfg.space_size + idx[:, 1]) * cfg.space_size + idx[:, 2]
    feature_sum = pc.points.sum(axis=1)
    # Within each voxel: descending feature sum, then ascending point index.
    order = np.lexsort((np.arange(n), -feature_sum, flat))
    flat_sorted = flat[order]
    first = np.ones(n, dtype=bool)
    first[1:] = flat_sorted[1:] != flat_sorted[:-1]
    keep = order[first]

    return VoxelGrid(
        coords=idx[keep],
        features=pc.points[keep],
        voxel_size=cfg.voxel_size,
        space_size=cfg.space_size,
    )


def partition(grid: VoxelGrid, patch_size: int) -> list[RawPatch]:
    """Split the grid into non-empty a*a*a patches keyed by minimum corner.

    Patches come out in lexicographic order of their positions; voxels
    within a patch are ordered by their within-patch cell index d.
    """
    a = patch_size
    if grid.space_size % a != 0:
        raise ValueError("space_size must be divisible by patch_size")
    if grid.count == 0:
        return []

    corners = (grid.coords // a) * a
    cells = swi_index(grid.coords[:, 0], grid.coords[:, 1], grid.coords[:, 2], a)
    blocks = grid.space_size // a
    patch_key = (
        (corners[:, 0] // a) * blocks + corners[:, 1] // a
    ) * blocks + corners[:, 2] // a

    order = np.lexsort((cells, patch_key))
    key_sorted = patch_key[order]
    starts = np.flatnonzero(np.r_[True, key_sorted[1:] != key_sorted[:-1]])
    bounds = np.r_[starts, key_sorted.size]

    patches = []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        rows = order[lo:hi]
        patches.append(
            RawPatch(
                position=corners[rows[0]],
                features=grid.features[rows],
                cells=cells[rows],
            )
        )
    return patches


def graph_features(raw: RawPatch, counter=None) -> Patch:
    """Append graph knowledge: per-patch centroid and per-voxel offsets.

    Output feature order is [x, y, z, r, g, b, x', y', z', cx, cy, cz] where
    (x', y', z') = point - centroid and (cx, cy, cz) is the centroid.
    """
    coords = raw.features[:, :3]
    size = coords.shape[0]
    center = coords.mean(axis=0)
    edges = coords - center
    feats = np.hstack([raw.features, edges, np.broadcast_to(center, (size, 3))])
    if counter is not None:
        counter.add("graph", 6 * size + 3)  # sums + subtractions, 3 divides
    return Patch(position=raw.position, features=feats, cells=raw.cells)


def build_patches(grid: VoxelGrid, patch_size: int, counter=None) -> list[Patch]:
    """partition + graph_features in one call."""
    return [graph_features(raw, counter) for raw in partition(grid, patch_size)]


def swi_index(m, n, q, patch_size: int):
    """Flat within-patch cell index d = (m%a) + (n%a)*a + (q%a)*a^2.

    Works on scalars and arrays alike; d is a bijection from a patch's a^3
    cells onto [0, a^3).
    """
    a = patch_size
    return (m % a) + (n % a) * a + (q % a) * a * a


@dataclass(frozen=True)
class PosEmbedParams:
    """Parameters of the positional MLP: affine 3->h, GELU, affine h->C.

    Min-corner coordinates are scaled by 1/space_size before the first
    affine. Encoder and decoder each own an independent instance.
    """

    w1: np.ndarray  # (3, h)
    b1: np.ndarray  # (h,)
    w2: np.ndarray  # (h, C)
    b2: np.ndarray  # (C,)
    space_size: int

    @property
    def hidden(self) -> int:
        return self.w1.shape[1]

    @property
    def embed_dim(self) -> int:
        return self.w2.shape[1]

    @classmethod
    def random(cls, cfg: TokenizerConfig, seed: int = 0) -> "PosEmbedParams":
        rng = np.random.default_rng(seed)
        h, c = cfg.posembed_hidden, cfg.embed_dim
        return cls(
            w1=rng.normal(0.0, 0.02, size=(3, h)),
            b1=np.zeros(h),
            w2=rng.normal(0.0, 0.02, size=(h, c)),
            b2=np.zeros(c),
            space_size=cfg.space_size,
        )

    @classmethod
    def zeros(cls, cfg: TokenizerConfig) -> "PosEmbedParams":
        h, c = cfg.posembed_hidden, cfg.embed_dim
        return cls(
            w1=np.zeros((3, h)),
            b1=np.zeros(h),
            w2=np.zeros((h, c)),
            b2=np.zeros(c),
            space_size=cfg.space_size,
        )


def positional_embed(position, params: PosEmbedParams) -> np.ndarray:
    """Embed one min-corner position into a C-vector."""
    return positional_embed_batch(np.asarray(position)[None, :], params)[0]


def positional_embed_batch(
    positions: np.ndarray, params: PosEmbedParams, counter=None
) -> np.ndarray:
    """Embed (P, 3) min-corner positions into (P, C)."""
    x = np.asarray(positions, dtype=np.float64) / params.space_size
    hidden = gelu(x @ params.w1 + params.b1)
    out = hidden @ params.w2 + params.b2
    if counter is not None:
        p = positions.shape[0]
        counter.add("posembed", p * (2 * 3 * params.hidden + 2 * params.hidden * params.embed_dim))
    return out


def embed_tokens(
    patches: list[Patch],
    table: WeightTable,
    pos_params: PosEmbedParams | None = None,
    counter=None,
) -> TokenSet:
    """Embed patches into tokens by Sparse Weight Indexing.

    Each voxel's 12-vector is multiplied by the weight matrix its cell index
    selects; the patch token is the mean over its voxels, accumulated in
    sorted cell order. Positional embeddings are computed when pos_params is
    given, otherwise left at zero.
    """
    tokens_list = embed_tokens_batch([patches], table, counter)
    tokens = tokens_list[0]
    if not np.isfinite(tokens).all():
        raise ValueError("non-finite token produced")
    positions = (
        np.stack([p.position for p in patches])
        if patches
        else np.zeros((0, 3), dtype=np.int64)
    )
    if pos_params is not None:
        pos_emb = positional_embed_batch(positions, pos_params, counter)
    else:
        pos_emb = np.zeros_like(tokens)
    return TokenSet(
        tokens=tokens,
        positions=positions,
        pos_embeddings=pos_emb,
        valid_mask=np.ones(len(patches), dtype=bool),
    )


def embed_tokens_batch(
    samples: list[list[Patch]], table: WeightTable, counter=None
) -> list[np.ndarray]:
    """Embed several samples at once; per-sample results match one-at-a-time.

    All voxels are flattened into one array (sample index acting as an extra
    hashing key) and segment-reduced, so a batched call performs the same
    sorted accumulation as sequential calls.
    """
    a3 = table.patch_size**3
    c = table.embed_dim
    counts = [len(s) for s in samples]
    all_patches = [p for s in samples for p in s]
    if not all_patches:
        return [np.zeros((0, c)) for _ in samples]

    feats = np.concatenate([p.features for p in all_patches], axis=0)
    cells = np.concatenate([p.cells for p in all_patches])
    lengths = np.array([p.size for p in all_patches])
    if cells.size and (cells.min() < 0 or cells.max() >= a3):
        raise ValueError(f"cell index out of range [0, {a3})")

    per_voxel = np.matmul(feats[:, None, :], table.weights[cells])[:, 0, :]
    offsets = np.r_[0, np.cumsum(lengths)[:-1]]
    tokens = np.add.reduceat(per_voxel, offsets, axis=0) / lengths[:, None]
    if counter is not None:
        m = feats.shape[0]
        counter.add("swi", 24 * m * c + lengths.size * c)

    out = []
    start = 0
    for n in counts:
        out.append(tokens[start : start + n])
        start += n
    return out


def dense_reference_embed(
    dense_features: np.ndarray, occupied: np.ndarray, table: WeightTable
) -> np.ndarray:
    """Oracle: embed a fully occupied patch the dense ViT/MAE way.

    Cells are flattened in d-order, each multiplied by its own weight
    matrix, and averaged. Defined only for dense patches; raises if any
    cell is unoccupied.
    """
    a3 = table.patch_size**3
    feats = np.asarray(dense_features, dtype=np.float64)
    occ = np.asarray(occupied, dtype=bool)
    if feats.shape != (a3, PATCH_FEATURES) or occ.shape != (a3,):
        raise ValueError(f"dense patch must be ({a3}, 12) with ({a3},) flags")
    if not occ.all():
        raise ValueError("dense reference embedding requires all cells occupied")
    per_cell = np.matmul(feats[:, None, :], table.weights)[:, 0, :]
    return per_cell.mean(axis=0)


def tokenize(
    pc: PointCloud,
    cfg: TokenizerConfig,
    table: WeightTable,
    pos_params: PosEmbedParams | None = None,
    counter=None,
) -> TokenSet:
    """Full pipeline: voxelize -> partition -> graph features -> embed."""
    grid = voxelize(pc, cfg, counter)
    patches = build_patches(grid, cfg.patch_size, counter)
    return embed_tokens(patches, table, pos_params, counter)
