"""``mdba`` command line: one entry point, one subcommand per pipeline stage.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical abort.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np
from PIL import Image

from .config import TrainConfig, load_config, save_config
from .data import IGNORE, load_dataset, load_meta, split_dataset, write_label
from .denoise_pixel import ThresholdSchedule, current_threshold, noise_mask, pixel_losses
from .exceptions import ConfigError, DataError, NumericalError
from .metrics import write_report

logger = logging.getLogger("mdba")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4

# background black, IGNORE white, foreground from a fixed palette
PALETTE = np.array(
    [
        (0, 0, 0), (230, 25, 75), (60, 180, 75), (255, 225, 25), (0, 130, 200),
        (245, 130, 48), (145, 30, 180), (70, 240, 240), (240, 50, 230), (210, 245, 60),
        (250, 190, 190), (0, 128, 128), (230, 190, 255), (170, 110, 40), (255, 250, 200),
        (128, 0, 0), (170, 255, 195), (128, 128, 0), (255, 215, 180), (0, 0, 128), (128, 128, 128),
    ],
    dtype=np.uint8,
)


def _config_help():
    lines = ["configuration keys (file entries or --set key=value):"]
    for f in fields(TrainConfig):
        lines.append(f"  {f.name:<24} default {f.default!r}")
    lines.append("  preset                   'desk' for fixture-scale schedules")
    lines.append("  n_simple                 dataset size used by the desk preset")
    lines.append("environment: MDBA_SEED overrides seed")
    return "\n".join(lines)


def _add_train_args(p):
    p.add_argument("--config", help="JSON or key=value config file")
    p.add_argument("--dataset-root", dest="dataset_root")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--alpha", type=float, help="class threshold margin")
    p.add_argument("--lambda-adv", dest="lambda_adv", type=float, help="adversarial loss weight")
    p.add_argument("--seed", type=int)
    p.add_argument("--t-max", dest="t_max", type=int)
    p.add_argument("--preset", choices=("desk", "full"))
    p.add_argument("--ablate", help="comma-separated mechanisms to disable: onf,pnd,s2c,c2s")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="any config key")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mdba",
        description="Weakly supervised segmentation from tags and saliency maps.",
        epilog=_config_help(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare-labels", help="binarize saliency into pseudo labels for single-tag images")
    p.add_argument("dataset_root")
    p.add_argument("out_dir")
    p.add_argument("--threshold", type=float, default=0.5)

    p = sub.add_parser("train", help="train a segmentation network",
                       epilog=_config_help(), formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_train_args(p)
    p.add_argument("--resume", help="checkpoint to resume from")
    p.add_argument("--stop-at", dest="stop_at", type=int, help="stop after this step (for later resumption)")

    p = sub.add_parser("evaluate", help="per-class IoU report of a checkpoint on a split")
    p.add_argument("checkpoint")
    p.add_argument("dataset_root")
    p.add_argument("--split", default="val")
    p.add_argument("--out", help="report file (default <checkpoint dir>/report_<split>.txt)")

    p = sub.add_parser("export-labels", help="write checkpoint predictions as label PNGs")
    p.add_argument("checkpoint")
    p.add_argument("dataset_root")
    p.add_argument("out_dir")
    p.add_argument("--split", default="train")
    p.add_argument("--restrict-to-tags", action="store_true", help="argmax over background and image tags only")

    p = sub.add_parser("retrain", help="second-step training on exported labels",
                       epilog=_config_help(), formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_train_args(p)
    p.add_argument("--labels", required=True, help="directory written by export-labels")

    p = sub.add_parser("make-fixture", help="generate the synthetic shapes dataset")
    p.add_argument("out_dir")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--spec", help="JSON file or inline JSON overriding fixture parameters")

    p = sub.add_parser("visualize", help="input / pseudo label / prediction / noise mask panels")
    p.add_argument("checkpoint")
    p.add_argument("dataset_root")
    p.add_argument("ids", nargs="+")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--split", default="train")
    p.add_argument("--threshold", type=float,
                   help="pixel loss threshold (default: the schedule value at the checkpoint step; 'inf' keeps all)")
    return parser


# helpers


def _overrides(args):
    out = {}
    for key in ("dataset_root", "alpha", "lambda_adv", "seed", "t_max", "preset", "ablate"):
        value = getattr(args, key, None)
        if value is not None:
            out[key] = value
    for item in args.set:
        if "=" not in item:
            raise ConfigError(item, "expected KEY=VALUE")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _resolve_config(args, n_simple=None):
    overrides = _overrides(args)
    if n_simple is not None and "n_simple" not in overrides:
        overrides["n_simple"] = n_simple
    cfg = load_config(args.config, overrides)
    if not cfg.dataset_root:
        raise ConfigError("dataset_root", "no dataset path given (config key or --dataset-root)")
    if not Path(cfg.dataset_root).is_dir():
        raise ConfigError("dataset_root", f"no such directory {cfg.dataset_root}")
    return cfg


def _peek_dataset_root(args):
    """Dataset root from flags or config file, before full validation."""
    if getattr(args, "dataset_root", None):
        return args.dataset_root
    for item in args.set:
        if item.startswith("dataset_root="):
            return item.split("=", 1)[1]
    if args.config and Path(args.config).is_file():
        cfg = load_config(args.config, env={})
        return cfg.dataset_root
    return None


def _count_images(root, simple_only=True):
    """Training-set size for the desk preset; ``None`` if the layout is unreadable.

    Layout problems surface later, after the config has been validated.
    """
    from .data import index_path, parse_index

    try:
        meta = load_meta(root)
        path = index_path(root, "train")
        entries = parse_index(path.read_text().splitlines(), meta.num_classes, source=path.name)
    except (DataError, OSError):
        return None
    return sum(1 for _, tags in entries if len(tags) == 1 or not simple_only)


def colorize(label):
    label = np.asarray(label)
    rgb = PALETTE[np.minimum(label, len(PALETTE) - 1) % len(PALETTE)]
    rgb[label == IGNORE] = 255
    return rgb


# commands


def cmd_prepare_labels(args):
    meta = load_meta(args.dataset_root)
    records = load_dataset(args.dataset_root, "train")
    split = split_dataset(records, args.threshold)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    counts = np.zeros(meta.num_labels, dtype=np.int64)
    for rec in split.simple:
        write_label(out / f"{rec.id}.png", rec.pseudo_label)
        counts += np.bincount(rec.pseudo_label.ravel(), minlength=256)[: meta.num_labels]
    total = max(int(counts.sum()), 1)
    print(f"{len(split.simple)} pseudo labels written to {out}; {len(split.complex)} multi-tag images skipped")
    for name, n in zip(meta.class_names, counts):
        print(f"{name} {int(n)} {n / total:.4f}")
    return EXIT_OK


def _load_training_data(cfg):
    meta = load_meta(cfg.dataset_root)
    num_fg = cfg.num_classes or meta.num_classes
    val = []
    if cfg.val_split:
        try:
            val = load_dataset(cfg.dataset_root, cfg.val_split)
        except FileNotFoundError:
            logger.warning("no %s split under %s; skipping validation", cfg.val_split, cfg.dataset_root)
    return meta, num_fg, val


def cmd_train(args):
    from .trainer import run_training

    root = _peek_dataset_root(args)
    n_simple = _count_images(root) if root else None
    cfg = _resolve_config(args, n_simple)
    meta, num_fg, val = _load_training_data(cfg)
    split = split_dataset(load_dataset(cfg.dataset_root, "train"), cfg.binarize_threshold)
    run_dir = Path(args.run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    save_config(cfg, run_dir / "config.json")
    print(json.dumps(cfg.to_dict(), sort_keys=True))
    trainer = run_training(cfg, split, num_fg, val, run_dir, resume_from=args.resume, stop_at=args.stop_at, meta=meta)
    if trainer.state.t < cfg.t_max:
        path = trainer.save(run_dir / f"ckpt_{trainer.state.t:06d}.pt")
        print(f"stopped at t={trainer.state.t}; checkpoint {path}")
    elif val:
        report = trainer.evaluate(val)
        write_report(report, run_dir / f"report_{cfg.val_split}.txt", meta.class_names)
        print(f"mIoU {report.miou:.6f}")
    return EXIT_OK


def cmd_evaluate(args):
    from .trainer import backbone_from_checkpoint, evaluate_backbone, load_checkpoint

    ckpt = load_checkpoint(args.checkpoint)
    meta = load_meta(args.dataset_root)
    records = load_dataset(args.dataset_root, args.split)
    missing = [r.id for r in records if r.gt is None]
    if missing or not records:
        raise DataError(f"{len(missing)} image(s) in split {args.split!r} lack ground truth (e.g. {missing[:3]})"
                        if missing else f"split {args.split!r} is empty")
    net = backbone_from_checkpoint(ckpt)
    report = evaluate_backbone(net, records, int(ckpt["num_classes"]) + 1)
    out = Path(args.out) if args.out else Path(args.checkpoint).parent / f"report_{args.split}.txt"
    write_report(report, out, meta.class_names)
    print(f"mIoU {report.miou:.6f}")
    print(f"report written to {out}")
    return EXIT_OK


def cmd_export_labels(args):
    from .trainer import backbone_from_checkpoint, export_pseudo_labels

    net = backbone_from_checkpoint(args.checkpoint)
    records = load_dataset(args.dataset_root, args.split, require_saliency=False)
    paths = export_pseudo_labels(net, records, args.out_dir, restrict_to_tags=args.restrict_to_tags)
    print(f"{len(paths)} labels written to {args.out_dir}")
    return EXIT_OK


def cmd_retrain(args):
    from .trainer import attach_exported_labels, retrain_second_step

    root = _peek_dataset_root(args)
    n_simple = _count_images(root, simple_only=False) if root else None
    cfg = _resolve_config(args, n_simple)
    meta, num_fg, val = _load_training_data(cfg)
    records = attach_exported_labels(load_dataset(cfg.dataset_root, "train", require_saliency=False), args.labels)
    run_dir = Path(args.run_dir)
    trainer = retrain_second_step(cfg, records, num_fg, val, run_dir, meta)
    if val:
        report = trainer.evaluate(val)
        write_report(report, run_dir / f"report_{cfg.val_split}.txt", meta.class_names)
        print(f"mIoU {report.miou:.6f}")
    return EXIT_OK


def cmd_make_fixture(args):
    from .synthetic import FixtureSpec, make_synthetic_dataset

    spec = FixtureSpec()
    if args.spec:
        path = Path(args.spec)
        raw = json.loads(path.read_text()) if path.is_file() else json.loads(args.spec)
        spec = FixtureSpec.from_dict(raw)
    summary = make_synthetic_dataset(spec, args.seed, args.out_dir)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_visualize(args):
    from .trainer import backbone_from_checkpoint, load_checkpoint, predict_proba

    ckpt = load_checkpoint(args.checkpoint)
    cfg = TrainConfig.from_dict(ckpt["config"])
    net = backbone_from_checkpoint(ckpt)
    if args.threshold is not None:
        T = args.threshold
    elif cfg.pnd:
        t = max(1, min(int(ckpt["state"]["t"]), cfg.t_max))
        sched = ThresholdSchedule(cfg.t_w, cfg.t_max, cfg.t_s, cfg.T_h, cfg.T_l, cfg.schedule_mode)
        T = current_threshold(sched, t)
    else:
        T = math.inf
    records = {r.id: r for r in load_dataset(args.dataset_root, args.split, require_saliency=False)}
    wanted = []
    for image_id in args.ids:
        if image_id not in records:
            logger.warning("unknown image id %r; skipped", image_id)
            continue
        wanted.append(records[image_id])
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if not wanted:
        return EXIT_OK
    split = split_dataset([r for r in wanted if r.is_simple and r.saliency is not None], cfg.binarize_threshold)
    pseudo = {r.id: r.pseudo_label for r in split.simple}
    probs = predict_proba(net, [r.image for r in wanted])
    for rec, p in zip(wanted, probs):
        H, W = p.shape[1:]
        label = pseudo.get(rec.id)
        if label is None:
            label = np.full((H, W), IGNORE, dtype=np.uint8)
        keep = noise_mask(pixel_losses(p[None].astype(np.float64), label[None].astype(np.int64)), T)[0].numpy()
        keep = np.where(label == IGNORE, 1.0, keep)
        panels = [
            (np.asarray(rec.image) * 255).round().astype(np.uint8),
            colorize(label),
            colorize(p.argmax(axis=0)),
            np.repeat((keep * 255).astype(np.uint8)[..., None], 3, axis=2),
        ]
        gap = np.full((H, 2, 3), 128, dtype=np.uint8)
        strip = np.concatenate([x for panel in panels for x in (panel, gap)][:-1], axis=1)
        Image.fromarray(strip).save(out_dir / f"{rec.id}.png")
        print(out_dir / f"{rec.id}.png")
    return EXIT_OK


COMMANDS = {
    "prepare-labels": cmd_prepare_labels,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "export-labels": cmd_export_labels,
    "retrain": cmd_retrain,
    "make-fixture": cmd_make_fixture,
    "visualize": cmd_visualize,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
