"""Strict JSON run configuration.

Unknown keys are rejected at every level: a silently ignored typo in the
tokenizer geometry or learning rate would invalidate an experiment.
Defaults are the published best settings (masking ratio 0.6, augmentation
ratio 1/2, AdamW starting at 5e-4 with cosine decay); the model defaults to
the desk scale so the CLI is usable on a laptop.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .exceptions import ConfigError
from .fkp import FKPConfig
from .model import ModelConfig, OptimizerConfig
from .tokenizer import TokenizerConfig
from .training import AugmentSettings


@dataclass(frozen=True)
class RunConfig:
    tokenizer: TokenizerConfig = field(default_factory=TokenizerConfig.desk)
    mask_ratio: float = 0.6
    augment: AugmentSettings = field(default_factory=AugmentSettings)
    model: ModelConfig = field(default_factory=ModelConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    loss_weights: tuple[float, float, float] = (1.0, 1.0, 1.0)
    seed: int = 0
    data_dir: str | None = None
    out_path: str | None = None
    log_path: str | None = None


def _take(section: dict, name: str, keys: dict):
    """Pop known keys with defaults; reject anything left over."""
    unknown = set(section) - set(keys)
    if unknown:
        raise ConfigError(f"unknown key(s) in '{name}': {sorted(unknown)}")
    return {k: section.get(k, default) for k, default in keys.items()}


def parse_run_config(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    top = _take(
        doc,
        "config",
        {
            "tokenizer": {},
            "masking": {},
            "augment": {},
            "model": {},
            "optimizer": {},
            "loss_weights": [1.0, 1.0, 1.0],
            "seed": 0,
            "io": {},
        },
    )

    tok = _take(
        top["tokenizer"],
        "tokenizer",
        {"s": 1.0 / 32.0, "S": 32, "a": 4, "C": 32, "h": 32},
    )
    masking = _take(top["masking"], "masking", {"ratio": 0.6})
    aug = _take(
        top["augment"],
        "augment",
        {"r": 0.5, "scale": True, "translate": True, "rotate": False},
    )
    model = _take(
        top["model"],
        "model",
        {
            "enc_blocks": 2,
            "enc_dim": None,
            "dec_blocks": 2,
            "dec_dim": 32,
            "enc_heads": None,
            "dec_heads": None,
            "mlp_ratio": 4.0,
            "use_class_token": False,
        },
    )
    opt = _take(
        top["optimizer"],
        "optimizer",
        {
            "kind": "adamw",
            "lr": 5e-4,
            "weight_decay": 0.05,
            "betas": [0.9, 0.95],
            "warmup_steps": 0,
            "cosine": True,
            "batch_size": 16,
        },
    )
    io = _take(top["io"], "io", {"data": None, "out": None, "log": None})

    try:
        tok_cfg = TokenizerConfig(
            voxel_size=float(tok["s"]),
            space_size=int(tok["S"]),
            patch_size=int(tok["a"]),
            embed_dim=int(tok["C"]),
            posembed_hidden=int(tok["h"]),
        )
        enc_dim = tok_cfg.embed_dim if model["enc_dim"] is None else int(model["enc_dim"])
        model_cfg = ModelConfig(
            enc_blocks=int(model["enc_blocks"]),
            enc_dim=enc_dim,
            dec_blocks=int(model["dec_blocks"]),
            dec_dim=int(model["dec_dim"]),
            enc_heads=model["enc_heads"],
            dec_heads=model["dec_heads"],
            patch_size=tok_cfg.patch_size,
            mlp_ratio=float(model["mlp_ratio"]),
            use_class_token=bool(model["use_class_token"]),
        )
        opt_cfg = OptimizerConfig(
            kind=str(opt["kind"]),
            lr=float(opt["lr"]),
            weight_decay=float(opt["weight_decay"]),
            betas=tuple(float(b) for b in opt["betas"]),
            warmup_steps=int(opt["warmup_steps"]),
            cosine=bool(opt["cosine"]),
            batch_size=int(opt["batch_size"]),
        )
        aug_cfg = AugmentSettings(
            ratio=float(aug["r"]),
            scale=bool(aug["scale"]),
            translate=bool(aug["translate"]),
            rotate=bool(aug["rotate"]),
        )
        ratio = float(masking["ratio"])
        if not 0.0 <= ratio < 1.0:
            raise ValueError(f"masking ratio must be in [0, 1), got {ratio}")
        weights = tuple(float(w) for w in top["loss_weights"])
        if len(weights) != 3:
            raise ValueError("loss_weights must have exactly 3 entries")
    except (ValueError, TypeError) as err:
        raise ConfigError(str(err)) from err

    if model_cfg.enc_dim != tok_cfg.embed_dim:
        raise ConfigError(
            f"model enc_dim {model_cfg.enc_dim} must match tokenizer C {tok_cfg.embed_dim}"
        )
    return RunConfig(
        tokenizer=tok_cfg,
        mask_ratio=ratio,
        augment=aug_cfg,
        model=model_cfg,
        optimizer=opt_cfg,
        loss_weights=weights,
        seed=int(top["seed"]),
        data_dir=io["data"],
        out_path=io["out"],
        log_path=io["log"],
    )


def load_run_config(path) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: invalid JSON: {err}") from err
    return parse_run_config(doc)


def fkp_config_for(run: RunConfig) -> FKPConfig:
    """Baseline tokenizer settings matched to a run's embedding width."""
    return FKPConfig(embed_dim=run.tokenizer.embed_dim)
