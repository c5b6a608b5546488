"""Masked-autoencoder transformer over sparse voxel tokens.

Everything runs in float64 on CPU: the scale is small (desk defaults are
two encoder and two decoder blocks at width 32) and double precision keeps
the finite-difference gradient oracle tight. Gradients come from autograd;
the finite-difference check below validates the whole wiring end to end.

The encoder sees only visible tokens. The decoder receives the projected
encoded tokens at their original patch slots, a shared learnable mask token
everywhere else, fresh positional embeddings for all slots, and predicts an
(a^3, 13) grid per masked patch: absolute xyz, the 9 remaining patch
features, and an occupancy logit per cell.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .exceptions import NonFiniteLossError
from .losses import HEAD_CHANNELS, OCC_CLAMP
from .masking import MaskPlan
from .tokenizer import TokenizerConfig
from .types import Patch

_FAR = 1.0e8  # finite sentinel distance for padded Chamfer lanes


def _pairwise_sq_dists(gt: torch.Tensor, pred: torch.Tensor) -> torch.Tensor:
    """(J, L, 3) x (J, D, 3) -> (J, L, D) squared distances.

    Uses |a|^2 + |b|^2 - 2ab so the big (J, L, D, 3) broadcast tensor is
    never materialized; clamped at zero against cancellation roundoff.
    """
    gt2 = (gt**2).sum(dim=2)
    pred2 = (pred**2).sum(dim=2)
    cross = torch.bmm(gt, pred.transpose(1, 2))
    return (gt2[:, :, None] + pred2[:, None, :] - 2.0 * cross).clamp_min(0.0)


@dataclass(frozen=True)
class ModelConfig:
    """Transformer dimensions; defaults are the desk scale used in tests.

    Head counts default to dim/16 (minimum 1). paper_small() gives the
    full-scale encoder/decoder the defaults are shrunk from.
    """

    enc_blocks: int = 2
    enc_dim: int = 32
    dec_blocks: int = 2
    dec_dim: int = 32
    enc_heads: int | None = None
    dec_heads: int | None = None
    patch_size: int = 4
    mlp_ratio: float = 4.0
    use_class_token: bool = False

    def __post_init__(self):
        if self.enc_heads is None:
            object.__setattr__(self, "enc_heads", max(self.enc_dim // 16, 1))
        if self.dec_heads is None:
            object.__setattr__(self, "dec_heads", max(self.dec_dim // 16, 1))
        if self.enc_dim % self.enc_heads != 0:
            raise ValueError("enc_dim must be divisible by enc_heads")
        if self.dec_dim % self.dec_heads != 0:
            raise ValueError("dec_dim must be divisible by dec_heads")

    @classmethod
    def paper_small(cls) -> "ModelConfig":
        return cls(enc_blocks=12, enc_dim=384, dec_blocks=8, dec_dim=512, patch_size=16)

    @property
    def head_channels(self) -> int:
        return self.patch_size**3 * HEAD_CHANNELS


class Attention(nn.Module):
    """Multi-head self-attention with key-validity masking.

    Invalid keys get -inf scores (their softmax weight is exactly zero, so
    padded content can never leak into valid outputs); rows belonging to
    invalid queries are overwritten with uniform scores to keep them finite.
    """

    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.heads = heads
        self.scale = (dim // heads) ** -0.5
        self.qkv = nn.Linear(dim, dim * 3)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x: torch.Tensor, valid: torch.Tensor) -> torch.Tensor:
        b, t, d = x.shape
        qkv = self.qkv(x).reshape(b, t, 3, self.heads, d // self.heads)
        q, k, v = qkv.permute(2, 0, 3, 1, 4)
        scores = (q @ k.transpose(-2, -1)) * self.scale
        scores = scores.masked_fill(~valid[:, None, None, :], float("-inf"))
        scores = scores.masked_fill(~valid[:, None, :, None], 0.0)
        attn = scores.softmax(dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(b, t, d)
        return self.proj(out)


class Mlp(nn.Module):
    def __init__(self, dim: int, hidden: int):
        super().__init__()
        self.fc1 = nn.Linear(dim, hidden)
        self.act = nn.GELU()
        self.fc2 = nn.Linear(hidden, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(self.act(self.fc1(x)))


class Block(nn.Module):
    """Pre-normalization transformer block."""

    def __init__(self, dim: int, heads: int, mlp_ratio: float):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = Attention(dim, heads)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = Mlp(dim, int(dim * mlp_ratio))

    def forward(self, x: torch.Tensor, valid: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.norm1(x), valid)
        x = x + self.mlp(self.norm2(x))
        return x


class PosEmbedMlp(nn.Module):
    """linear-GELU-linear positional embedding of patch min corners."""

    def __init__(self, space_size: int, hidden: int, dim: int):
        super().__init__()
        self.space_size = space_size
        self.fc1 = nn.Linear(3, hidden)
        self.act = nn.GELU()
        self.fc2 = nn.Linear(hidden, dim)

    def forward(self, positions: torch.Tensor) -> torch.Tensor:
        x = positions.double() / self.space_size
        return self.fc2(self.act(self.fc1(x)))


class SparseWeightEmbed(nn.Module):
    """Trainable a^3 x 12 x C weight table with scatter-mean token reduction."""

    def __init__(self, patch_size: int, embed_dim: int):
        super().__init__()
        self.patch_size = patch_size
        self.weights = nn.Parameter(torch.zeros(patch_size**3, 12, embed_dim))

    def forward(
        self,
        feats: torch.Tensor,  # (M, 12) voxel features, cell-sorted per token
        cells: torch.Tensor,  # (M,) within-patch cell indices
        token_index: torch.Tensor,  # (M,) which token each voxel belongs to
        num_tokens: int,
    ) -> torch.Tensor:
        per_voxel = torch.bmm(feats.unsqueeze(1), self.weights[cells]).squeeze(1)
        dim = per_voxel.shape[1]
        sums = per_voxel.new_zeros(num_tokens, dim)
        sums = sums.index_add(0, token_index, per_voxel)
        counts = torch.zeros(num_tokens, dtype=torch.float64)
        counts.index_add_(0, token_index, torch.ones_like(token_index, dtype=torch.float64))
        return sums / counts.clamp(min=1.0).unsqueeze(1)


@dataclass(frozen=True)
class TrainingSample:
    """One tokenized cloud, flattened for collation.

    feats/cells hold every voxel of every patch (cell-sorted within each
    patch); patch_ids maps voxels to patch slots 0..P-1 in lexicographic
    patch order; positions/lengths are per patch; plan partitions the P
    patches into visible and masked.
    """

    feats: np.ndarray
    cells: np.ndarray
    patch_ids: np.ndarray
    positions: np.ndarray
    lengths: np.ndarray
    plan: MaskPlan

    @property
    def num_patches(self) -> int:
        return self.positions.shape[0]


def sample_from_patches(patches: list[Patch], plan: MaskPlan) -> TrainingSample:
    if len(patches) != plan.num_tokens:
        raise ValueError("mask plan size does not match patch count")
    feats = np.concatenate([p.features for p in patches], axis=0)
    cells = np.concatenate([p.cells for p in patches])
    lengths = np.array([p.size for p in patches], dtype=np.int64)
    patch_ids = np.repeat(np.arange(len(patches), dtype=np.int64), lengths)
    positions = np.stack([p.position for p in patches]).astype(np.int64)
    return TrainingSample(
        feats=feats,
        cells=cells,
        patch_ids=patch_ids,
        positions=positions,
        lengths=lengths,
        plan=plan,
    )


@dataclass
class Batch:
    """Collated tensors for one training step (see collate())."""

    # encoder inputs
    vis_feats: torch.Tensor
    vis_cells: torch.Tensor
    vis_token_index: torch.Tensor
    vis_positions: torch.Tensor
    vis_batch_row: torch.Tensor
    vis_batch_col: torch.Tensor
    vis_valid: torch.Tensor
    slot_grid: torch.Tensor
    # decoder inputs
    positions_full: torch.Tensor
    full_valid: torch.Tensor
    masked_sel: torch.Tensor
    # reconstruction targets, ordered like masked_sel.nonzero()
    gt_cells: torch.Tensor
    gt_patch_of_cell: torch.Tensor
    gt_efeats: torch.Tensor
    gt_coords_pad: torch.Tensor
    gt_coord_valid: torch.Tensor
    gt_lengths: torch.Tensor
    sample_of_patch: torch.Tensor
    batch_size: int
    num_masked: int


def collate(samples: list[TrainingSample], cells_per_patch: int) -> Batch:
    """Pad a list of samples into one batch; masked patches keep sample order."""
    b = len(samples)
    vmax = max(s.plan.visible_indices.size for s in samples)
    pmax = max(s.num_patches for s in samples)

    vis_feats, vis_cells, vis_tok, vis_pos = [], [], [], []
    rows, cols = [], []
    vis_valid = np.zeros((b, vmax), dtype=bool)
    slot_grid = np.zeros((b, vmax), dtype=np.int64)
    positions_full = np.zeros((b, pmax, 3), dtype=np.int64)
    full_valid = np.zeros((b, pmax), dtype=bool)
    masked_sel = np.zeros((b, pmax), dtype=bool)

    gt_cells, gt_patch, gt_efeats, gt_coords, gt_len, sample_of = [], [], [], [], [], []
    token_base = 0
    patch_base = 0
    for i, s in enumerate(samples):
        vis = s.plan.visible_indices
        vis_valid[i, : vis.size] = True
        slot_grid[i, : vis.size] = vis
        positions_full[i, : s.num_patches] = s.positions
        full_valid[i, : s.num_patches] = True
        masked_sel[i, s.plan.masked_indices] = True

        keep = np.isin(s.patch_ids, vis)
        rank_of_patch = np.full(s.num_patches, -1, dtype=np.int64)
        rank_of_patch[vis] = np.arange(vis.size)
        vis_feats.append(s.feats[keep])
        vis_cells.append(s.cells[keep])
        vis_tok.append(token_base + rank_of_patch[s.patch_ids[keep]])
        vis_pos.append(s.positions[vis])
        rows.append(np.full(vis.size, i, dtype=np.int64))
        cols.append(np.arange(vis.size, dtype=np.int64))
        token_base += vis.size

        for j, slot in enumerate(s.plan.masked_indices):
            sel = s.patch_ids == slot
            cells = s.cells[sel]
            gt_cells.append(cells)
            gt_patch.append(np.full(cells.size, patch_base + j, dtype=np.int64))
            gt_efeats.append(s.feats[sel][:, 3:12])
            gt_coords.append(s.feats[sel][:, :3])
            gt_len.append(cells.size)
            sample_of.append(i)
        patch_base += s.plan.masked_indices.size

    num_masked = patch_base
    lmax = max(gt_len, default=1)
    coords_pad = np.zeros((num_masked, lmax, 3))
    coord_valid = np.zeros((num_masked, lmax), dtype=bool)
    for j, coords in enumerate(gt_coords):
        coords_pad[j, : coords.shape[0]] = coords
        coord_valid[j, : coords.shape[0]] = True

    def cat(parts, dtype, width=None):
        if parts:
            return np.concatenate(parts, axis=0)
        shape = (0,) if width is None else (0, width)
        return np.zeros(shape, dtype=dtype)

    t = torch.as_tensor
    return Batch(
        vis_feats=t(cat(vis_feats, np.float64, 12), dtype=torch.float64),
        vis_cells=t(cat(vis_cells, np.int64), dtype=torch.int64),
        vis_token_index=t(cat(vis_tok, np.int64), dtype=torch.int64),
        vis_positions=t(cat(vis_pos, np.int64, 3), dtype=torch.float64),
        vis_batch_row=t(cat(rows, np.int64), dtype=torch.int64),
        vis_batch_col=t(cat(cols, np.int64), dtype=torch.int64),
        vis_valid=t(vis_valid),
        slot_grid=t(slot_grid),
        positions_full=t(positions_full, dtype=torch.float64),
        full_valid=t(full_valid),
        masked_sel=t(masked_sel),
        gt_cells=t(cat(gt_cells, np.int64), dtype=torch.int64),
        gt_patch_of_cell=t(cat(gt_patch, np.int64), dtype=torch.int64),
        gt_efeats=t(cat(gt_efeats, np.float64, 9), dtype=torch.float64),
        gt_coords_pad=t(coords_pad, dtype=torch.float64),
        gt_coord_valid=t(coord_valid),
        gt_lengths=t(np.asarray(gt_len, dtype=np.float64), dtype=torch.float64),
        sample_of_patch=t(np.asarray(sample_of, dtype=np.int64), dtype=torch.int64),
        batch_size=b,
        num_masked=num_masked,
    )


@dataclass(frozen=True)
class FrozenSelection:
    """A pinned Chamfer branch: kept cells and both nearest-neighbor maps."""

    keep: torch.Tensor  # (J, a^3) bool
    to_pred: torch.Tensor  # (J, Lmax) index of nearest kept cell per gt point
    to_gt: torch.Tensor  # (J, a^3) index of nearest gt point per cell


@dataclass(frozen=True)
class LossBreakdown:
    total: torch.Tensor
    mse: torch.Tensor
    chamfer: torch.Tensor
    occupancy: torch.Tensor

    def floats(self) -> tuple[float, float, float, float]:
        return (
            float(self.total.detach()),
            float(self.mse.detach()),
            float(self.chamfer.detach()),
            float(self.occupancy.detach()),
        )


class MaskedAutoencoder(nn.Module):
    """Sparse-token MAE: SWI embedding, masked encoder, reconstructing decoder."""

    def __init__(self, cfg: ModelConfig, tok_cfg: TokenizerConfig, seed: int = 0):
        super().__init__()
        if tok_cfg.embed_dim != cfg.enc_dim:
            raise ValueError("tokenizer embed_dim must match enc_dim")
        if tok_cfg.patch_size != cfg.patch_size:
            raise ValueError("tokenizer and model patch_size differ")
        self.cfg = cfg
        self.tok_cfg = tok_cfg

        torch.manual_seed(seed)
        self.swi = SparseWeightEmbed(cfg.patch_size, cfg.enc_dim)
        self.enc_pos = PosEmbedMlp(tok_cfg.space_size, tok_cfg.posembed_hidden, cfg.enc_dim)
        self.dec_pos = PosEmbedMlp(tok_cfg.space_size, tok_cfg.posembed_hidden, cfg.dec_dim)
        self.enc_blocks = nn.ModuleList(
            Block(cfg.enc_dim, cfg.enc_heads, cfg.mlp_ratio) for _ in range(cfg.enc_blocks)
        )
        self.proj = nn.Linear(cfg.enc_dim, cfg.dec_dim)
        self.mask_token = nn.Parameter(torch.zeros(cfg.dec_dim))
        if cfg.use_class_token:
            self.cls_token = nn.Parameter(torch.zeros(cfg.enc_dim))
        self.dec_blocks = nn.ModuleList(
            Block(cfg.dec_dim, cfg.dec_heads, cfg.mlp_ratio) for _ in range(cfg.dec_blocks)
        )
        self.head = nn.Linear(cfg.dec_dim, cfg.head_channels)

        self.double()
        self._init_weights()

    def _init_weights(self):
        for module in self.modules():
            if isinstance(module, nn.Linear):
                nn.init.trunc_normal_(module.weight, std=0.02)
                nn.init.zeros_(module.bias)
        nn.init.trunc_normal_(self.swi.weights, std=0.02)
        nn.init.trunc_normal_(self.mask_token, std=0.02)
        if self.cfg.use_class_token:
            nn.init.trunc_normal_(self.cls_token, std=0.02)

    # ------------------------------------------------------------------
    # forward pieces
    # ------------------------------------------------------------------

    def encoder_forward(
        self, tokens: torch.Tensor, pos: torch.Tensor, valid: torch.Tensor
    ) -> torch.Tensor:
        """Run visible tokens + positional embeddings through the encoder.

        With zero blocks the trunk is the identity, so the output equals
        tokens + pos. The optional class token is prepended and always valid.
        """
        x = tokens + pos
        if self.cfg.use_class_token:
            cls = self.cls_token.expand(x.shape[0], 1, -1)
            x = torch.cat([cls, x], dim=1)
            valid = torch.cat(
                [torch.ones(x.shape[0], 1, dtype=torch.bool), valid], dim=1
            )
        for block in self.enc_blocks:
            x = block(x, valid)
        return x

    def decoder_forward(
        self,
        encoded: torch.Tensor,  # (B, Vmax, enc_dim), class token stripped
        vis_valid: torch.Tensor,  # (B, Vmax)
        slot_grid: torch.Tensor,  # (B, Vmax) patch slot of each visible token
        positions_full: torch.Tensor,  # (B, Pmax, 3)
        full_valid: torch.Tensor,  # (B, Pmax)
        masked_sel: torch.Tensor,  # (B, Pmax)
    ) -> torch.Tensor:
        """Fill masked slots with the shared mask token and reconstruct.

        Returns one (a^3, 13) grid per masked patch, stacked in the
        row-major order of masked_sel.
        """
        b, pmax = full_valid.shape
        projected = self.proj(encoded)
        seq = self.mask_token.expand(b, pmax, -1).clone()
        rb, rc = vis_valid.nonzero(as_tuple=True)
        seq = seq.index_put((rb, slot_grid[rb, rc]), projected[rb, rc])
        seq = seq + self.dec_pos(positions_full)
        for block in self.dec_blocks:
            seq = block(seq, full_valid)
        mb, mslot = masked_sel.nonzero(as_tuple=True)
        out = self.head(seq[mb, mslot])
        a3 = self.cfg.patch_size**3
        return out.view(-1, a3, HEAD_CHANNELS)

    def head_output(self, batch: Batch) -> torch.Tensor:
        """Embed, encode, and decode a batch into per-masked-patch grids."""
        tokens_flat = self.swi(
            batch.vis_feats,
            batch.vis_cells,
            batch.vis_token_index,
            int(batch.vis_valid.sum()),
        )
        pos_flat = self.enc_pos(batch.vis_positions)
        b, vmax = batch.vis_valid.shape
        grid = tokens_flat.new_zeros(b, vmax, self.cfg.enc_dim)
        tokens = grid.index_put((batch.vis_batch_row, batch.vis_batch_col), tokens_flat)
        pos = grid.index_put((batch.vis_batch_row, batch.vis_batch_col), pos_flat)

        encoded = self.encoder_forward(tokens, pos, batch.vis_valid)
        if self.cfg.use_class_token:
            encoded = encoded[:, 1:]
        return self.decoder_forward(
            encoded,
            batch.vis_valid,
            batch.slot_grid,
            batch.positions_full,
            batch.full_valid,
            batch.masked_sel,
        )

    def forward(self, batch: Batch, frozen: "FrozenSelection | None" = None) -> LossBreakdown:
        return self.reconstruction_losses(self.head_output(batch), batch, frozen)

    def freeze_selection(self, batch: Batch) -> "FrozenSelection | None":
        """Record the Chamfer branch (kept cells + correspondences) at the current point."""
        if batch.num_masked == 0:
            return None
        with torch.no_grad():
            head_out = self.head_output(batch)
            keep = self.chamfer_keep(head_out)
            dist = _pairwise_sq_dists(batch.gt_coords_pad, head_out[:, :, 0:3])
            to_pred = (dist + _FAR * (~keep[:, None, :])).argmin(dim=2)
            to_gt = (dist + _FAR * (~batch.gt_coord_valid[:, :, None])).argmin(dim=1)
        return FrozenSelection(keep=keep, to_pred=to_pred, to_gt=to_gt)

    # ------------------------------------------------------------------
    # losses (vectorized across every masked patch in the batch)
    # ------------------------------------------------------------------

    @staticmethod
    def chamfer_keep(head_out: torch.Tensor) -> torch.Tensor:
        """Which cells contribute predicted points to the Chamfer term.

        Cells with predicted occupancy above 0.5; when a patch has none,
        its single highest-logit cell.
        """
        keep = torch.sigmoid(head_out[:, :, 12]) > 0.5
        fallback = ~keep.any(dim=1)
        if bool(fallback.any()):
            keep[fallback, head_out[fallback, :, 12].argmax(dim=1)] = True
        return keep

    def reconstruction_losses(
        self,
        head_out: torch.Tensor,
        batch: Batch,
        frozen: "FrozenSelection | None" = None,
    ) -> LossBreakdown:
        """Per-patch MSE + Chamfer + occupancy, averaged per sample then batch.

        frozen pins the Chamfer cell selection and nearest-neighbor
        assignment (the discrete branches of the piecewise-smooth loss);
        the finite-difference oracle passes it so both loss evaluations sit
        on the branch the analytic gradient belongs to.
        """
        j = batch.num_masked
        if j == 0:
            zero = torch.zeros((), dtype=torch.float64)
            return LossBreakdown(zero, zero.clone(), zero.clone(), zero.clone())

        a3 = self.cfg.patch_size**3
        # MSE at ground-truth cells
        pred_e = head_out[batch.gt_patch_of_cell, batch.gt_cells, 3:12]
        sq = ((batch.gt_efeats - pred_e) ** 2).sum(dim=1)
        mse_per = head_out.new_zeros(j).index_add(0, batch.gt_patch_of_cell, sq)
        mse_per = mse_per / batch.gt_lengths

        # occupancy BCE over the dense grid
        occ_target = torch.zeros(j, a3, dtype=torch.float64)
        occ_target[batch.gt_patch_of_cell, batch.gt_cells] = 1.0
        prob = torch.sigmoid(head_out[:, :, 12]).clamp(OCC_CLAMP, 1.0 - OCC_CLAMP)
        bce = -(occ_target * prob.log() + (1.0 - occ_target) * (1.0 - prob).log())
        occ_per = bce.mean(dim=1)

        # Chamfer between occupied-cell coordinates and predicted points
        keep = self.chamfer_keep(head_out) if frozen is None else frozen.keep
        pred_xyz = head_out[:, :, 0:3]
        dist = _pairwise_sq_dists(batch.gt_coords_pad, pred_xyz)
        if frozen is None:
            dist_to_pred = dist + _FAR * (~keep[:, None, :])
            nearest_pred = dist_to_pred.min(dim=2).values
            dist_to_gt = dist + _FAR * (~batch.gt_coord_valid[:, :, None])
            nearest_gt = dist_to_gt.min(dim=1).values
        else:
            nearest_pred = dist.gather(2, frozen.to_pred.unsqueeze(2)).squeeze(2)
            nearest_gt = dist.gather(1, frozen.to_gt.unsqueeze(1)).squeeze(1)
        gt_term = (nearest_pred * batch.gt_coord_valid).sum(dim=1) / batch.gt_lengths
        pred_term = (nearest_gt * keep).sum(dim=1) / keep.sum(dim=1)
        cd_per = gt_term + pred_term

        def per_sample_mean(per_patch: torch.Tensor) -> torch.Tensor:
            sums = per_patch.new_zeros(batch.batch_size)
            sums = sums.index_add(0, batch.sample_of_patch, per_patch)
            counts = torch.zeros(batch.batch_size, dtype=torch.float64)
            counts.index_add_(
                0, batch.sample_of_patch, torch.ones(j, dtype=torch.float64)
            )
            return (sums / counts.clamp(min=1.0)).mean()

        mse = per_sample_mean(mse_per)
        cd = per_sample_mean(cd_per)
        occ = per_sample_mean(occ_per)
        for name, value in (("mse", mse), ("chamfer", cd), ("occupancy", occ)):
            if not torch.isfinite(value):
                raise NonFiniteLossError(name)
        return LossBreakdown(total=mse + cd + occ, mse=mse, chamfer=cd, occupancy=occ)

    # ------------------------------------------------------------------
    # parameter I/O
    # ------------------------------------------------------------------

    def parameter_arrays(self) -> dict[str, np.ndarray]:
        """Named parameters as float64 numpy arrays (checkpoint payload)."""
        return {
            name: p.detach().numpy().astype(np.float64, copy=True)
            for name, p in self.named_parameters()
        }

    def load_parameter_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        missing = sorted(set(params) - set(arrays))
        extra = sorted(set(arrays) - set(params))
        if missing or extra:
            raise ValueError(f"parameter mismatch: missing {missing}, extra {extra}")
        with torch.no_grad():
            for name, p in params.items():
                arr = arrays[name]
                if tuple(arr.shape) != tuple(p.shape):
                    raise ValueError(f"shape mismatch for {name}")
                p.copy_(torch.as_tensor(arr, dtype=torch.float64))


def loss_and_grad(
    model: MaskedAutoencoder, batch: Batch
) -> tuple[LossBreakdown, dict[str, torch.Tensor]]:
    """Total loss and the gradient of every parameter."""
    model.zero_grad(set_to_none=True)
    losses = model(batch)
    if losses.total.requires_grad:
        losses.total.backward()
    grads = {
        name: (
            p.grad.detach().clone()
            if p.grad is not None
            else torch.zeros_like(p)
        )
        for name, p in model.named_parameters()
    }
    return losses, grads


@dataclass
class OptimizerConfig:
    """AdamW + cosine schedule; defaults follow the published recipe."""

    kind: str = "adamw"
    lr: float = 5e-4
    weight_decay: float = 0.05
    betas: tuple[float, float] = (0.9, 0.95)
    warmup_steps: int = 0
    cosine: bool = True
    batch_size: int = 16

    def __post_init__(self):
        if self.kind != "adamw":
            raise ValueError(f"unsupported optimizer kind {self.kind!r}")


@dataclass
class TrainState:
    model: MaskedAutoencoder
    optimizer: torch.optim.Optimizer
    opt_cfg: OptimizerConfig
    total_steps: int
    step: int = 0
    loss_weights: tuple[float, float, float] = (1.0, 1.0, 1.0)


def make_train_state(
    model: MaskedAutoencoder, opt_cfg: OptimizerConfig, total_steps: int
) -> TrainState:
    optimizer = torch.optim.AdamW(
        model.parameters(),
        lr=opt_cfg.lr,
        betas=opt_cfg.betas,
        weight_decay=opt_cfg.weight_decay,
    )
    return TrainState(model=model, optimizer=optimizer, opt_cfg=opt_cfg, total_steps=max(total_steps, 1))


def learning_rate_at(step: int, cfg: OptimizerConfig, total_steps: int) -> float:
    """Cosine decay to zero over total_steps, with optional linear warmup."""
    if cfg.warmup_steps > 0 and step < cfg.warmup_steps:
        return cfg.lr * (step + 1) / cfg.warmup_steps
    if not cfg.cosine:
        return cfg.lr
    span = max(total_steps - cfg.warmup_steps, 1)
    progress = (step - cfg.warmup_steps) / span
    return cfg.lr * 0.5 * (1.0 + math.cos(math.pi * progress))


def train_step(state: TrainState, batch: Batch) -> LossBreakdown:
    """One optimizer update; deterministic given the batch and state."""
    lr = learning_rate_at(state.step, state.opt_cfg, state.total_steps)
    for group in state.optimizer.param_groups:
        group["lr"] = lr
    state.model.zero_grad(set_to_none=True)
    losses = state.model(batch)
    w = state.loss_weights
    total = w[0] * losses.mse + w[1] * losses.chamfer + w[2] * losses.occupancy
    if total.requires_grad:
        total.backward()
        state.optimizer.step()
    state.step += 1
    return LossBreakdown(
        total=total.detach(),
        mse=losses.mse.detach(),
        chamfer=losses.chamfer.detach(),
        occupancy=losses.occupancy.detach(),
    )


@dataclass(frozen=True)
class GradCheckReport:
    max_rel_error: float
    worst_param: str
    checked: list[tuple[str, int, float]] = field(default_factory=list)

    def passed(self, tolerance: float) -> bool:
        return self.max_rel_error < tolerance


# Relative error denominator floor. Central differences at step 1e-5 on a
# double-precision loss of magnitude ~1 carry ~1e-10 absolute noise (loss
# roundoff / 2h), so gradients below ~1e-5 cannot be resolved to 1e-4
# relative accuracy; for them the comparison degrades gracefully into
# |fd - g| / FD_FLOOR, still far tighter than any real wiring bug.
FD_FLOOR = 1e-5


def finite_difference_check(
    model: MaskedAutoencoder,
    batch: Batch,
    num_params: int = 20,
    step: float = 1e-5,
    seed: int = 0,
) -> GradCheckReport:
    """Central-difference check of autograd on randomly sampled parameters.

    Samples num_params scalar entries uniformly over the whole parameter
    vector and compares (L(p+h) - L(p-h)) / 2h with the analytic gradient
    via rel = |fd - g| / max(|fd|, |g|, FD_FLOOR). The Chamfer selection
    (kept cells and nearest-neighbor maps) is frozen at the base point so
    both loss evaluations stay on the piecewise-smooth branch the analytic
    gradient differentiates; the gradient itself is unaffected because the
    selection is constant to autograd as well.
    """
    frozen = model.freeze_selection(batch)
    _, grads = loss_and_grad(model, batch)
    names = [n for n, _ in model.named_parameters()]
    params = dict(model.named_parameters())
    sizes = np.array([params[n].numel() for n in names])
    offsets = np.r_[0, np.cumsum(sizes)]
    rng = np.random.default_rng(seed)
    flat_picks = rng.choice(offsets[-1], size=min(num_params, offsets[-1]), replace=False)

    checked = []
    worst = (0.0, names[0])
    for flat in sorted(flat_picks.tolist()):
        which = int(np.searchsorted(offsets, flat, side="right") - 1)
        name = names[which]
        local = flat - offsets[which]
        p = params[name]
        with torch.no_grad():
            original = p.view(-1)[local].item()
            p.view(-1)[local] = original + step
            up = float(model(batch, frozen=frozen).total)
            p.view(-1)[local] = original - step
            down = float(model(batch, frozen=frozen).total)
            p.view(-1)[local] = original
        fd = (up - down) / (2.0 * step)
        analytic = float(grads[name].view(-1)[local])
        rel = abs(fd - analytic) / max(abs(fd), abs(analytic), FD_FLOOR)
        checked.append((name, int(local), rel))
        if rel > worst[0]:
            worst = (rel, name)
    return GradCheckReport(max_rel_error=worst[0], worst_param=worst[1], checked=checked)
