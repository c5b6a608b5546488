"""Command-line interface.

Commands: lift, tokenize, pretrain, gradcheck, bench. Every command takes
--seed and is deterministic given it (benchmark wall-time columns aside).
Exit codes: 0 success, 1 validation/config failure, 2 I/O failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import checkpoint, formats
from .config import RunConfig, load_run_config
from .exceptions import ConfigError, FormatError, NonFiniteLossError
from .flops import scaling_bench
from .lift import lift, rotate_z
from .model import MaskedAutoencoder, collate, finite_difference_check
from .synth import primitive_cloud
from .tokenizer import PosEmbedParams, WeightTable, build_patches, embed_tokens, voxelize
from .training import derive_seed, prepare_sample, run_pretraining

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_IO = 2


def _load_config(path: str | None) -> RunConfig:
    return load_run_config(path) if path else RunConfig()


def cmd_lift(args) -> int:
    img = formats.load_depth_image(args.image, args.depth)
    cloud = lift(img)
    if args.rotate_seed is not None:
        angle = np.random.default_rng(args.rotate_seed).uniform(0.0, 2.0 * np.pi)
        cloud = rotate_z(cloud, angle)
    formats.write_ply(args.out, cloud)
    print(f"wrote {cloud.count} points to {args.out}")
    return EXIT_OK


def cmd_tokenize(args) -> int:
    run = _load_config(args.config)
    tok = run.tokenizer
    cloud = formats.read_ply(getattr(args, "in"))
    table = WeightTable.random(tok.patch_size, tok.embed_dim, derive_seed(args.seed, 1))
    pos_params = PosEmbedParams.random(tok, derive_seed(args.seed, 2))
    grid = voxelize(cloud, tok)
    patches = build_patches(grid, tok.patch_size)
    tokens = embed_tokens(patches, table, pos_params)
    checkpoint.write_arrays(
        args.out,
        {
            "positions": tokens.positions.astype(np.float64),
            "tokens": tokens.tokens,
            "lengths": np.array([p.size for p in patches], dtype=np.float64),
        },
    )
    print(
        f"N={cloud.count} M={grid.count} P={len(patches)} "
        f"weights={tok.cells_per_patch} C={tok.embed_dim}"
    )
    return EXIT_OK


def cmd_pretrain(args) -> int:
    run = _load_config(args.config)
    seed = args.seed if args.seed is not None else run.seed
    data_dir = Path(args.data or run.data_dir or "")
    ply_files = sorted(data_dir.glob("*.ply")) if data_dir.is_dir() else []
    if not ply_files:
        raise ConfigError(f"no PLY files found in {data_dir or '<unset>'}")
    clouds = [formats.read_ply(p) for p in ply_files]

    model, history = run_pretraining(
        clouds,
        run.tokenizer,
        run.model,
        run.optimizer,
        steps=args.steps,
        seed=seed,
        mask_ratio=run.mask_ratio,
        aug=run.augment,
        loss_weights=run.loss_weights,
    )
    out = args.out or run.out_path
    if out is None:
        raise ConfigError("no checkpoint output path given (--out)")
    checkpoint.write_arrays(out, model.parameter_arrays())

    log_path = args.log or run.log_path or f"{out}.loss.csv"
    lines = ["step,loss_total,loss_mse,loss_cd,loss_occ"]
    for row in history:
        lines.append(f"{row.step},{row.total!r},{row.mse!r},{row.chamfer!r},{row.occupancy!r}")
    Path(log_path).write_text("\n".join(lines) + "\n")
    if history:
        print(
            f"{len(history)} steps: loss {history[0].total:.6f} -> {history[-1].total:.6f}"
        )
    print(f"checkpoint: {out}")
    print(f"loss log: {log_path}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    run = _load_config(args.config)
    seed = args.seed if args.seed is not None else run.seed
    model = MaskedAutoencoder(run.model, run.tokenizer, seed=derive_seed(seed, 10))
    clouds = [primitive_cloud(400, derive_seed(seed, 40, i)) for i in range(2)]
    samples = [
        prepare_sample(pc, run.tokenizer, run.mask_ratio, derive_seed(seed, 41, i), aug=None)
        for i, pc in enumerate(clouds)
    ]
    batch = collate(samples, run.tokenizer.cells_per_patch)
    report = finite_difference_check(
        model, batch, num_params=args.samples, step=1e-5, seed=derive_seed(seed, 42)
    )
    ok = report.passed(args.tolerance)
    print(f"max relative error: {report.max_rel_error:.3e} (worst: {report.worst_param})")
    print(f"{'PASS' if ok else 'FAIL'} (tolerance {args.tolerance:g}, {len(report.checked)} parameters)")
    return EXIT_OK if ok else EXIT_INVALID


def cmd_bench(args) -> int:
    sizes = [int(s) for s in args.sizes.split(",") if s]
    if not sizes:
        raise ConfigError("no sizes given")
    if sizes != sorted(sizes):
        raise ConfigError("sizes must be ascending")
    result = scaling_bench(sizes, seed=args.seed)
    Path(args.out).write_text(result.csv())
    if len(sizes) < 2:
        print("warning: need at least two sizes to fit slopes")
    print(f"vps slope (total ops): {result.vps_slope:.3f}")
    print(f"fkp slope (fps+knn ops): {result.fkp_cluster_slope:.3f}")
    print(f"fkp slope (total ops): {result.fkp_total_slope:.3f}")
    print(f"csv: {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="voxmae",
        description="Pseudo-3D lifting, sparse voxel tokenization, and MAE pre-training.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("lift", help="lift a PPM image + depth map to a PLY cloud")
    p.add_argument("--image", required=True, help="binary PPM (P6) image")
    p.add_argument("--depth", required=True, help="PFM or 16-bit PGM depth map")
    p.add_argument("--out", required=True, help="output ASCII PLY path")
    p.add_argument("--rotate-seed", type=int, default=None, help="apply a random z-rotation drawn from this seed")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_lift)

    p = sub.add_parser("tokenize", help="tokenize a PLY cloud into a binary dump")
    p.add_argument("--in", required=True, help="input PLY cloud")
    p.add_argument("--config", default=None, help="JSON run configuration")
    p.add_argument("--out", required=True, help="output token dump")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_tokenize)

    p = sub.add_parser("pretrain", help="masked-autoencoder pre-training on a PLY directory")
    p.add_argument("--data", default=None, help="directory of PLY files")
    p.add_argument("--config", default=None, help="JSON run configuration")
    p.add_argument("--out", default=None, help="output checkpoint path")
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--log", default=None, help="loss CSV path (default: <out>.loss.csv)")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("gradcheck", help="finite-difference check of analytic gradients")
    p.add_argument("--config", default=None, help="JSON run configuration")
    p.add_argument("--samples", type=int, default=20)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("bench", help="tokenizer FLOPs scaling benchmark")
    p.add_argument("--sizes", required=True, help="comma-separated ascending cloud sizes")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FormatError, FileNotFoundError, IsADirectoryError, PermissionError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_IO
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, NonFiniteLossError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
