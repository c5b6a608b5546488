"""Pre-training loop: augment -> tokenize -> mask -> encode/decode -> update."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import NonFiniteLossError
from .lift import rotate_z
from .masking import augment, random_mask
from .model import (
    MaskedAutoencoder,
    ModelConfig,
    OptimizerConfig,
    TrainingSample,
    collate,
    make_train_state,
    sample_from_patches,
    train_step,
)
from .tokenizer import TokenizerConfig, build_patches, voxelize
from .types import PointCloud


def derive_seed(master: int, *tags: int) -> int:
    """Stable child seed from a master seed and integer tags."""
    return int(np.random.SeedSequence((master,) + tags).generate_state(1)[0])


@dataclass(frozen=True)
class AugmentSettings:
    """Which augmentations the training loop applies each step."""

    ratio: float = 0.5
    scale: bool = True
    translate: bool = True
    rotate: bool = False


def prepare_sample(
    pc: PointCloud,
    tok_cfg: TokenizerConfig,
    mask_ratio: float,
    seed: int,
    aug: AugmentSettings | None = None,
) -> TrainingSample:
    """Augment, tokenize, and mask one cloud into a training sample."""
    if aug is not None:
        if aug.rotate:
            angle = np.random.default_rng(derive_seed(seed, 0)).uniform(0.0, 2.0 * np.pi)
            pc = rotate_z(pc, angle)
        if aug.scale or aug.translate:
            pc = augment(
                pc,
                aug.ratio,
                derive_seed(seed, 1),
                scale=aug.scale,
                translate=aug.translate,
            )
    patches = build_patches(voxelize(pc, tok_cfg), tok_cfg.patch_size)
    plan = random_mask(len(patches), mask_ratio, derive_seed(seed, 2))
    return sample_from_patches(patches, plan)


@dataclass
class StepLog:
    step: int
    total: float
    mse: float
    chamfer: float
    occupancy: float


def run_pretraining(
    clouds: list[PointCloud],
    tok_cfg: TokenizerConfig,
    model_cfg: ModelConfig,
    opt_cfg: OptimizerConfig,
    steps: int,
    seed: int,
    mask_ratio: float = 0.6,
    aug: AugmentSettings | None = AugmentSettings(),
    loss_weights: tuple[float, float, float] = (1.0, 1.0, 1.0),
) -> tuple[MaskedAutoencoder, list[StepLog]]:
    """Train a fresh model for the given number of steps; fully seeded.

    Each step samples a batch of clouds with replacement, re-augments and
    re-tokenizes them, and applies one optimizer update. Step numbering in
    the log is 1-based. Raises NonFiniteLossError (with the step number)
    if any loss term degenerates.
    """
    if not clouds:
        raise ValueError("need at least one training cloud")
    model = MaskedAutoencoder(model_cfg, tok_cfg, seed=derive_seed(seed, 10))
    state = make_train_state(model, opt_cfg, total_steps=steps)
    state.loss_weights = loss_weights

    history: list[StepLog] = []
    for step in range(steps):
        rng = np.random.default_rng(derive_seed(seed, 20, step))
        picks = rng.integers(0, len(clouds), size=opt_cfg.batch_size)
        samples = [
            prepare_sample(
                clouds[int(c)],
                tok_cfg,
                mask_ratio,
                derive_seed(seed, 30, step, slot),
                aug,
            )
            for slot, c in enumerate(picks)
        ]
        batch = collate(samples, tok_cfg.cells_per_patch)
        try:
            losses = train_step(state, batch)
        except NonFiniteLossError as err:
            raise NonFiniteLossError(err.term, step=step + 1) from err
        total, mse, cd, occ = losses.floats()
        history.append(StepLog(step + 1, total, mse, cd, occ))
    return model, history
