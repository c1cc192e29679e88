"""Command-line entry point.

    ctma <command> --config <path> [--set key=value]... [--run-name <s>] [--seed <int>]

Commands: train, eval, predict, synth, ablate, plot. Exit codes: 0 success,
2 configuration error, 3 data error, 4 numeric failure, 1 anything else.
"""

import argparse
import math
import os
import sys

import torch

from .checkpoint import load_checkpoint
from .config import RunConfig, parse_config, parse_config_text, snapshot
from .data import DatasetLayout, load_dataset, save_image, write_pair
from .errors import ConfigError, CTMAError, DataError, NonFiniteLossError
from .metrics import MetricsReport
from .model import STANDARD_ABLATION_ROWS
from .spatial_encoder import binarize
from .synthetic import generate_synthetic
from .temporal_encoder import threshold_mask
from .tiling import TileIndex, stitch_predictions, tile_image
from .train import (
    CSV_HEADER,
    EpochRecord,
    RunHistory,
    evaluate,
    format_ablation_table,
    predict_probability,
    run_ablation,
    train_loop,
)
from .viz import plot_metrics, render_overlays


def _run_dir(cfg: RunConfig) -> str:
    return os.path.join("runs", cfg.run_name)


def _require_data_root(cfg: RunConfig) -> DatasetLayout:
    if not cfg.data_root:
        raise ConfigError("data_root is not set (use --set data_root=<path>)")
    return DatasetLayout(cfg.data_root)


def _load_split(cfg: RunConfig, split: str):
    pairs = list(load_dataset(_require_data_root(cfg), split))
    if not pairs:
        raise DataError(f"split {split!r} under {cfg.data_root} is empty")
    return pairs


def _load_model(cfg: RunConfig, ckpt_path: str):
    ckpt = load_checkpoint(ckpt_path)
    model_cfg = parse_config_text(ckpt.config_text) if ckpt.config_text.strip() else cfg
    model = model_cfg.build_model()
    ckpt.load_into(model)
    model.eval()
    return model, ckpt, model_cfg


def _default_checkpoint(cfg: RunConfig) -> str:
    ckpt_dir = os.path.join(_run_dir(cfg), "checkpoints")
    for name in ("best.ckpt", "last.ckpt"):
        p = os.path.join(ckpt_dir, name)
        if os.path.exists(p):
            return p
    raise DataError(f"no checkpoint found under {ckpt_dir} (pass --checkpoint)")


def _print_report(prefix: str, report: MetricsReport):
    print(f"{prefix} precision={report.precision:.4f} recall={report.recall:.4f} "
          f"f1={report.f1:.4f} oa={report.oa:.4f}")


def cmd_synth(cfg: RunConfig, args) -> int:
    out = args.out or cfg.data_root
    if not out:
        raise ConfigError("synth needs an output root (--out or --set data_root=...)")
    counts = {
        "train": cfg.synth_count,
        "val": max(1, cfg.synth_count // 4),
        "test": max(1, cfg.synth_count // 4),
    }
    offsets = {"train": 0, "val": 100000, "test": 200000}
    for split, count in counts.items():
        for k in range(count):
            pair = generate_synthetic(cfg.synth, cfg.seed + offsets[split] + k)
            write_pair(pair, out, split)
    print(f"wrote synthetic dataset to {out} "
          f"({counts['train']} train / {counts['val']} val / {counts['test']} test)")
    return 0


def cmd_train(cfg: RunConfig, args) -> int:
    train_pairs = _load_split(cfg, "train")
    val_pairs = list(load_dataset(_require_data_root(cfg), "val")) or None
    run_dir = _run_dir(cfg)
    os.makedirs(run_dir, exist_ok=True)
    text = snapshot(cfg)
    with open(os.path.join(run_dir, "config.snapshot"), "w") as f:
        f.write(text)
    torch.manual_seed(cfg.seed)
    model = cfg.build_model()
    ckpt, history = train_loop(
        model, train_pairs, cfg.schedule, cfg.loss, seed=cfg.seed,
        val_pairs=val_pairs, run_dir=run_dir, augment=cfg.augment_enabled,
        translate_frac=cfg.augment_translate, config_text=text,
    )
    print(f"trained {ckpt.step} iterations; run directory: {run_dir}")
    if history.records:
        last = history.records[-1]
        print(f"final {last.split} loss {last.loss:.4f}, best F1 {ckpt.best_val_f1:.4f}")
    return 0


def cmd_eval(cfg: RunConfig, args) -> int:
    ckpt_path = args.checkpoint or _default_checkpoint(cfg)
    model, ckpt, model_cfg = _load_model(cfg, ckpt_path)
    pairs = _load_split(cfg, args.split)
    report = evaluate(model, pairs, spec=cfg.tile,
                      threshold=model_cfg.se.fusion.binarize_threshold,
                      batch_size=cfg.schedule.batch_size)
    _print_report(f"eval[{args.split}]", report)
    run_dir = _run_dir(cfg)
    os.makedirs(run_dir, exist_ok=True)
    csv_path = os.path.join(run_dir, "metrics.csv")
    rec = EpochRecord(ckpt.step, args.split, math.nan, report.precision,
                      report.recall, report.f1, report.oa, 0.0)
    if os.path.exists(csv_path):
        with open(csv_path, "a") as f:
            f.write(rec.csv_row() + "\n")
    else:
        with open(csv_path, "w") as f:
            f.write(CSV_HEADER + "\n" + rec.csv_row() + "\n")
    print(f"appended metrics row to {csv_path}")
    return 0


def _predict_pair(model, model_cfg, pair, spec):
    """(mask, p2) at full resolution, tiling when the pair exceeds one tile."""
    h, w = pair.height, pair.width
    if spec is None or h < spec.tile_size or w < spec.tile_size:
        with torch.no_grad():
            out = model(pair.i1.unsqueeze(0), pair.i2.unsqueeze(0))
        return out.mask, out.p2
    if spec.tile_size % 4 or spec.stride % 4:
        raise ConfigError("tiled prediction needs tile_size and stride divisible by 4")
    tiles1, index = tile_image(pair.i1, spec)
    tiles2, _ = tile_image(pair.i2, spec)
    p2_tiles = []
    coarse_tiles = []
    with torch.no_grad():
        for s in range(0, tiles1.shape[0], 8):
            out = model(tiles1[s:s + 8], tiles2[s:s + 8])
            p2_tiles.append(out.p2)
            coarse_tiles.append(out.coarse)
    p2 = stitch_predictions(torch.cat(p2_tiles, dim=0), index).unsqueeze(0)
    quarter = TileIndex(
        origins=[(r // 4, c // 4) for r, c in index.origins],
        tile_size=index.tile_size // 4,
        source_hw=(h // 4, w // 4),
    )
    coarse = stitch_predictions(torch.cat(coarse_tiles, dim=0), quarter).unsqueeze(0)
    mask = threshold_mask(coarse, model.te_cfg.mask_threshold, (h, w))
    return mask, p2


def cmd_predict(cfg: RunConfig, args) -> int:
    ckpt_path = args.checkpoint or _default_checkpoint(cfg)
    model, _, model_cfg = _load_model(cfg, ckpt_path)
    pairs = _load_split(cfg, args.split)
    out_dir = args.out or os.path.join(_run_dir(cfg), "predictions")
    os.makedirs(out_dir, exist_ok=True)
    thr = model_cfg.se.fusion.binarize_threshold
    for pair in pairs:
        mask, p2 = _predict_pair(model, model_cfg, pair, cfg.tile)
        save_image(mask[0], os.path.join(out_dir, f"{pair.id}_coarse_mask.png"))
        save_image(p2[0], os.path.join(out_dir, f"{pair.id}_prob.png"))
        save_image(binarize(p2, thr)[0], os.path.join(out_dir, f"{pair.id}_change.png"))
    print(f"wrote {3 * len(pairs)} files to {out_dir}")
    return 0


def cmd_ablate(cfg: RunConfig, args) -> int:
    train_pairs = _load_split(cfg, "train")
    results = run_ablation(cfg.te, cfg.se, list(STANDARD_ABLATION_ROWS), train_pairs,
                           cfg.schedule, cfg.loss, seed=cfg.seed)
    table = format_ablation_table(results)
    run_dir = _run_dir(cfg)
    os.makedirs(run_dir, exist_ok=True)
    with open(os.path.join(run_dir, "config.snapshot"), "w") as f:
        f.write(snapshot(cfg))
    out_path = os.path.join(run_dir, "ablation.txt")
    with open(out_path, "w") as f:
        f.write(table)
    print(table, end="")
    print(f"wrote {out_path}")
    return 0


def cmd_plot(cfg: RunConfig, args) -> int:
    run_dir = args.run_dir or _run_dir(cfg)
    csv_path = os.path.join(run_dir, "metrics.csv")
    if not os.path.exists(csv_path):
        raise DataError(f"no metrics.csv under {run_dir}")
    history = RunHistory.from_csv(csv_path)
    curve_path = plot_metrics(history, os.path.join(run_dir, "curves.png"))
    print(f"wrote {curve_path}")
    if args.checkpoint or cfg.data_root:
        try:
            ckpt_path = args.checkpoint or _default_checkpoint(cfg)
        except DataError:
            return 0
        model, _, model_cfg = _load_model(cfg, ckpt_path)
        pairs = _load_split(cfg, args.split)[: args.limit]
        overlay_dir = os.path.join(run_dir, "overlays")
        for pair in pairs:
            mask, p2 = _predict_pair(model, model_cfg, pair, cfg.tile)
            paths = render_overlays(pair, p2, mask, overlay_dir,
                                    threshold=model_cfg.se.fusion.binarize_threshold)
            for p in paths:
                print(f"wrote {p}")
    return 0


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "synth": cmd_synth,
    "ablate": cmd_ablate,
    "plot": cmd_plot,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctma",
        description="Bi-temporal change detection: training, evaluation, and tooling.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="config file of key = value lines")
        p.add_argument("--set", dest="sets", action="append", default=[],
                       metavar="KEY=VALUE", help="override one config key")
        p.add_argument("--run-name", default=None)
        p.add_argument("--seed", type=int, default=None)
        if name in ("eval", "predict", "plot"):
            p.add_argument("--checkpoint", default=None)
            p.add_argument("--split", default="test")
        if name == "synth":
            p.add_argument("--out", default=None, help="dataset root to write")
        if name == "predict":
            p.add_argument("--out", default=None, help="directory for output images")
        if name == "plot":
            p.add_argument("--run-dir", default=None)
            p.add_argument("--limit", type=int, default=4,
                           help="overlay at most this many pairs")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = list(args.sets)
    if args.run_name is not None:
        overrides.append(f"run_name={args.run_name}")
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    try:
        cfg = parse_config(args.config, overrides)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except NonFiniteLossError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 4
    except CTMAError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
