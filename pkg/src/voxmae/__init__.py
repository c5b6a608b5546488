"""voxmae: pseudo-3D lifting, sparse voxel tokenization, MAE pre-training."""

from .exceptions import ConfigError, FormatError, NonFiniteLossError
from .fkp import FKPConfig, FKPParams, fkp_tokenize, fps, knn_group
from .lift import DepthImage, lift, rotate_z
from .losses import (
    PatchTarget,
    chamfer_loss,
    mse_loss,
    occupancy_loss,
    patch_target,
    total_loss,
)
from .masking import (
    AttentionMask,
    MaskPlan,
    augment,
    build_attention_mask,
    random_mask,
)
from .model import (
    MaskedAutoencoder,
    ModelConfig,
    OptimizerConfig,
    collate,
    finite_difference_check,
    loss_and_grad,
    sample_from_patches,
    train_step,
)
from .tokenizer import (
    PosEmbedParams,
    TokenizerConfig,
    build_patches,
    dense_reference_embed,
    embed_tokens,
    embed_tokens_batch,
    graph_features,
    partition,
    positional_embed,
    swi_index,
    tokenize,
    voxelize,
)
from .types import (
    Patch,
    PointCloud,
    RawPatch,
    TokenSet,
    ValidationResult,
    VoxelGrid,
    WeightTable,
    renormalize_cloud,
    validate_cloud,
)

__version__ = "0.1.0"

__all__ = [
    "AttentionMask",
    "ConfigError",
    "DepthImage",
    "FKPConfig",
    "FKPParams",
    "FormatError",
    "MaskPlan",
    "MaskedAutoencoder",
    "ModelConfig",
    "NonFiniteLossError",
    "OptimizerConfig",
    "Patch",
    "PatchTarget",
    "PointCloud",
    "PosEmbedParams",
    "RawPatch",
    "TokenSet",
    "TokenizerConfig",
    "ValidationResult",
    "VoxelGrid",
    "WeightTable",
    "augment",
    "build_attention_mask",
    "build_patches",
    "chamfer_loss",
    "collate",
    "dense_reference_embed",
    "embed_tokens",
    "embed_tokens_batch",
    "finite_difference_check",
    "fkp_tokenize",
    "fps",
    "graph_features",
    "knn_group",
    "lift",
    "loss_and_grad",
    "mse_loss",
    "occupancy_loss",
    "partition",
    "patch_target",
    "positional_embed",
    "random_mask",
    "renormalize_cloud",
    "rotate_z",
    "sample_from_patches",
    "swi_index",
    "tokenize",
    "total_loss",
    "train_step",
    "validate_cloud",
    "voxelize",
]
