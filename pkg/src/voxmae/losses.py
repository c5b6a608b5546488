"""Reconstruction losses: cellwise MSE, Chamfer distance, occupancy BCE.

All three operate on torch tensors (numpy arrays and lists are converted)
and return 0-dim float64 tensors so they can sit inside an autograd graph;
call float() on the result for a plain number. Each is deliberately simple
enough to check against a brute-force double loop.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .types import Patch

OCC_CLAMP = 1e-7

# HeadOutput column layout per cell: absolute xyz, 9 e-features, occupancy logit.
HEAD_COORD = slice(0, 3)
HEAD_EFEAT = slice(3, 12)
HEAD_LOGIT = 12
HEAD_CHANNELS = 13


@dataclass(frozen=True)
class PatchTarget:
    """Ground truth for one patch's reconstruction.

    cells: (L,) distinct occupied cell indices < a^3; coords: (L, 3)
    absolute xyz per occupied cell; efeatures: (L, 9) the remaining
    [r, g, b, x', y', z', cx, cy, cz] features; occupancy: (a^3,) 0/1 dense
    grid consistent with cells.
    """

    cells: np.ndarray
    coords: np.ndarray
    efeatures: np.ndarray
    occupancy: np.ndarray

    def __post_init__(self):
        if self.cells.size < 1:
            raise ValueError("a patch target needs at least one occupied cell")
        occupied = np.zeros_like(self.occupancy)
        occupied[self.cells] = 1
        if not np.array_equal(occupied, self.occupancy):
            raise ValueError("occupancy grid inconsistent with cell indices")


def patch_target(patch: Patch, cells_per_patch: int) -> PatchTarget:
    """Build the reconstruction target for a tokenized patch."""
    occupancy = np.zeros(cells_per_patch, dtype=np.int64)
    occupancy[patch.cells] = 1
    return PatchTarget(
        cells=patch.cells,
        coords=patch.features[:, :3],
        efeatures=patch.features[:, 3:12],
        occupancy=occupancy,
    )


def _as_tensor(x) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x.double()
    return torch.as_tensor(np.asarray(x), dtype=torch.float64)


def mse_loss(target: PatchTarget, pred) -> torch.Tensor:
    """Mean over occupied cells of squared L2 error on the 9 e-features.

    pred is an (a^3, 13) head output; predictions are read at the ground
    truth cell indices (cellwise correspondence).
    """
    pred = _as_tensor(pred)
    if pred.shape != (target.occupancy.size, HEAD_CHANNELS):
        raise ValueError(
            f"pred must be ({target.occupancy.size}, {HEAD_CHANNELS}), got {tuple(pred.shape)}"
        )
    gt = _as_tensor(target.efeatures)
    at_cells = pred[torch.as_tensor(target.cells, dtype=torch.int64), HEAD_EFEAT]
    return ((gt - at_cells) ** 2).sum(dim=1).mean()


def chamfer_loss(gt_points, pred_points) -> torch.Tensor:
    """Symmetric mean of nearest-neighbor squared distances between two sets."""
    gt = _as_tensor(gt_points)
    pred = _as_tensor(pred_points)
    if gt.numel() == 0 or pred.numel() == 0:
        raise ValueError("Chamfer distance is undefined for empty sets")
    diff = gt[:, None, :] - pred[None, :, :]
    dist = (diff**2).sum(dim=2)
    return dist.min(dim=1).values.mean() + dist.min(dim=0).values.mean()


def occupancy_loss(occupancy, logits) -> torch.Tensor:
    """Binary cross-entropy over every cell of the patch grid.

    Predicted occupancy is sigmoid(logit) clamped to [1e-7, 1 - 1e-7] so
    saturated logits cannot produce infinities.
    """
    occ = _as_tensor(occupancy)
    logits = _as_tensor(logits)
    if occ.shape != logits.shape:
        raise ValueError(f"shape mismatch: {tuple(occ.shape)} vs {tuple(logits.shape)}")
    prob = torch.sigmoid(logits).clamp(OCC_CLAMP, 1.0 - OCC_CLAMP)
    return -(occ * torch.log(prob) + (1.0 - occ) * torch.log(1.0 - prob)).mean()


def decode_predicted_points(pred) -> torch.Tensor:
    """Extract the predicted point set of a head output for Chamfer.

    Cells whose predicted occupancy exceeds 0.5 contribute their predicted
    xyz; when none does, the single highest-logit cell is used so the set
    is never empty.
    """
    pred = _as_tensor(pred)
    keep = torch.sigmoid(pred[:, HEAD_LOGIT]) > 0.5
    if not bool(keep.any()):
        keep = torch.zeros_like(keep)
        keep[pred[:, HEAD_LOGIT].argmax()] = True
    return pred[keep][:, HEAD_COORD]


def reconstruction_loss(target: PatchTarget, pred) -> tuple[torch.Tensor, ...]:
    """(mse, chamfer, occupancy) for one masked patch."""
    pred = _as_tensor(pred)
    mse = mse_loss(target, pred)
    cd = chamfer_loss(target.coords, decode_predicted_points(pred))
    occ = occupancy_loss(target.occupancy, pred[:, HEAD_LOGIT])
    return mse, cd, occ


def total_loss(mse, cd, occ, weights=(1.0, 1.0, 1.0)):
    """Plain (optionally weighted) sum of the three terms; defaults to 1,1,1."""
    return weights[0] * mse + weights[1] * cd + weights[2] * occ
