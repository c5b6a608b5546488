"""The F-K-P baseline tokenizer: FPS centers, KNN groups, PointNet embed.

This is the fixed-token-count tokenizer the sparse pipeline is benchmarked
against. It exists for correctness tests and the FLOPs comparison, not for
training, so parameters are plain numpy arrays.

FLOP counting convention (normative for the benchmark): a squared distance
costs 8 FLOPs plus 1 comparison, a multiply-accumulate costs 2, pooling and
extra sort comparisons cost 0. The final projection to the token dimension
is applied after max-pooling (once per group), matching the published
per-stage accounting.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tokenizer import voxel_indices
from .types import PointCloud, TokenSet

# Below this many points KNN uses a full stable argsort, which honors the
# smallest-index tie rule exactly; larger clouds use argpartition first.
_EXACT_SORT_LIMIT = 8192


@dataclass(frozen=True)
class FKPConfig:
    """Baseline tokenizer settings.

    Centers come from either a fixed count (num_centers) or a coverage rule
    G = max(1, N // center_ratio). point_dims is the per-point MLP, whose
    output is max-pooled and concatenated back onto each point before the
    global stage; the global stage's last affine runs once per group.
    """

    neighbors: int = 32
    embed_dim: int = 384
    num_centers: int | None = None
    center_ratio: int = 32
    point_dims: tuple[int, ...] = (3, 128, 256)
    global_dims: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.neighbors < 1:
            raise ValueError("neighbors must be >= 1")
        if self.num_centers is not None and self.num_centers < 1:
            raise ValueError("num_centers must be >= 1")
        if self.global_dims is None:
            object.__setattr__(self, "global_dims", (512, 512, self.embed_dim))
        if self.global_dims[0] != 2 * self.point_dims[-1]:
            raise ValueError("global stage input must be twice the point stage output")
        if self.global_dims[-1] != self.embed_dim:
            raise ValueError("global stage must end at embed_dim")

    def resolve_centers(self, n: int) -> int:
        if self.num_centers is not None:
            return self.num_centers
        return max(1, n // self.center_ratio)


def _affine_stack(dims: tuple[int, ...], rng: np.random.Generator | None):
    layers = []
    for din, dout in zip(dims[:-1], dims[1:]):
        if rng is None:
            w = np.zeros((din, dout))
        else:
            w = rng.normal(0.0, 0.02, size=(din, dout))
        layers.append((w, np.zeros(dout)))
    return layers


@dataclass(frozen=True)
class FKPParams:
    """Affine weights of the mini-PointNet, one (W, b) pair per layer."""

    point_layers: list = field(default_factory=list)
    global_layers: list = field(default_factory=list)

    @classmethod
    def random(cls, cfg: FKPConfig, seed: int = 0) -> "FKPParams":
        rng = np.random.default_rng(seed)
        return cls(
            point_layers=_affine_stack(cfg.point_dims, rng),
            global_layers=_affine_stack(cfg.global_dims, rng),
        )

    @classmethod
    def zeros(cls, cfg: FKPConfig) -> "FKPParams":
        return cls(
            point_layers=_affine_stack(cfg.point_dims, None),
            global_layers=_affine_stack(cfg.global_dims, None),
        )


def fps(pc: PointCloud, num_centers: int, start_index: int = 0, counter=None) -> np.ndarray:
    """Farthest point sampling on (x, y, z); returns selected point indices.

    Starts at start_index and repeatedly adds the point maximizing the
    minimum squared distance to the selected set, ties broken by smallest
    index. Deterministic.
    """
    n = pc.count
    if num_centers > n:
        raise ValueError(f"cannot sample {num_centers} centers from {n} points")
    coords = pc.coords
    selected = np.empty(num_centers, dtype=np.int64)
    selected[0] = start_index
    min_dist = np.full(n, np.inf)
    for i in range(num_centers):
        delta = coords - coords[selected[i]]
        dist = np.einsum("ij,ij->i", delta, delta)
        np.minimum(min_dist, dist, out=min_dist)
        if counter is not None:
            counter.add("fps", 9 * n)
        if i + 1 < num_centers:
            min_dist[selected[i]] = -1.0  # never re-select
            selected[i + 1] = np.argmax(min_dist)
    return selected


def knn_group(pc: PointCloud, centers: np.ndarray, k: int, counter=None) -> np.ndarray:
    """Group the k nearest points of each center, re-centered on it.

    Returns (G, k, 3) coordinates with the center subtracted. Nearness is
    squared Euclidean distance, ties broken by smallest point index (exact
    for clouds up to a few thousand points; beyond that an argpartition
    pre-pass resolves boundary ties by distance only).
    """
    n = pc.count
    if k > n:
        raise ValueError(f"cannot group {k} neighbors from {n} points")
    coords = pc.coords
    centers = np.asarray(centers, dtype=np.float64)
    g = centers.shape[0]
    groups = np.empty((g, k, 3))
    chunk = max(1, int(2**24 // max(n, 1)))
    for lo in range(0, g, chunk):
        hi = min(g, lo + chunk)
        delta = coords[None, :, :] - centers[lo:hi, None, :]
        dist = np.einsum("gij,gij->gi", delta, delta)
        if counter is not None:
            counter.add("knn", 9 * n * (hi - lo))
        for row in range(hi - lo):
            d = dist[row]
            if n <= _EXACT_SORT_LIMIT:
                nearest = np.argsort(d, kind="stable")[:k]
            else:
                cand = np.argpartition(d, k - 1)[:k]
                nearest = cand[np.argsort(d[cand], kind="stable")]
            groups[lo + row] = coords[nearest] - centers[lo + row]
    return groups


def _pointnet(groups: np.ndarray, cfg: FKPConfig, params: FKPParams, counter=None):
    """Shared MLP -> max-pool -> concat -> global MLP -> max-pool -> project."""
    g, k, _ = groups.shape

    def run_stack(x, layers, last_activation):
        for i, (w, b) in enumerate(layers):
            if counter is not None:
                counter.add("pointnet", 2 * w.shape[0] * w.shape[1] * x.shape[0])
            x = x @ w + b
            if i + 1 < len(layers) or last_activation:
                x = np.maximum(x, 0.0)
        return x

    pointwise = run_stack(groups.reshape(g * k, -1), params.point_layers, False)
    pointwise = pointwise.reshape(g, k, -1)
    pooled = pointwise.max(axis=1)
    combined = np.concatenate(
        [np.broadcast_to(pooled[:, None, :], pointwise.shape), pointwise], axis=2
    )
    hidden = run_stack(
        combined.reshape(g * k, -1), params.global_layers[:-1], True
    ).reshape(g, k, -1)
    features = hidden.max(axis=1)
    return run_stack(features, params.global_layers[-1:], False)


def fkp_tokenize(
    pc: PointCloud,
    cfg: FKPConfig,
    params: FKPParams,
    start_index: int = 0,
    counter=None,
    voxel_size: float = 1.0 / 224.0,
    space_size: int = 224,
) -> TokenSet:
    """Run FPS -> KNN -> PointNet, one token per group.

    Token positions are the center coordinates discretized by voxel_size
    (the convention the sparse tokenizer uses for patch corners).
    """
    g = cfg.resolve_centers(pc.count)
    center_idx = fps(pc, g, start_index, counter)
    centers = pc.coords[center_idx]
    groups = knn_group(pc, centers, cfg.neighbors, counter)
    tokens = _pointnet(groups, cfg, params, counter)
    positions = np.clip(voxel_indices(centers, voxel_size), 0, space_size - 1)
    return TokenSet(
        tokens=tokens,
        positions=positions,
        pos_embeddings=np.zeros_like(tokens),
        valid_mask=np.ones(g, dtype=bool),
    )
