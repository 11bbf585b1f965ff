"""Command line entry point: ``python -m fedn <subcommand>``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import torch

from .config import load_config, save_config
from .evaluation import GroundTruth, emit_report, evaluate, render_reports, save_report_json
from .geometry import Interval
from .network import load_checkpoint, save_checkpoint
from .pipeline import detect_video, load_predictions, save_predictions
from .synthetic import Dataset, load_annotations, load_features
from .training import VARIANTS, ablate, ablation_table, loso, train

log = logging.getLogger("fedn")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise SystemExit(f"{self.prog}: error: {message}")


def _common(p):
    p.add_argument("--config", type=Path, help="experiment config file")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config field, e.g. network.d=64")
    p.add_argument("--seed", type=int, help="seed for data generation, initialization and sampling")


def _config(args):
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides += [f"train.seed={args.seed}", f"data.seed={args.seed}"]
    return load_config(args.config, overrides)


def _ground_truth(annotations):
    return {a.video_id: [GroundTruth(Interval(e.onset, e.offset), e.category) for e in a.events]
            for a in annotations}


def cmd_gen_data(args):
    cfg = _config(args)
    Dataset.generate(cfg.data).save(args.out)
    save_config(cfg, Path(args.out) / "config.ini")
    print(f"wrote {args.out}")


def cmd_train(args):
    cfg = _config(args)
    dataset = Dataset.load(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model, manifest = train(cfg, dataset)
    save_checkpoint(model, out / "model.fedn", extra={"seed": cfg.seed})
    (out / "manifest.json").write_text(json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n")
    save_config(cfg, out / "config.ini")
    log.info("training took %.1f s", manifest.wall_clock)
    print(f"final loss {manifest.epoch_losses[-1]:.4f}" if manifest.epoch_losses else "no epochs run")


def cmd_detect(args):
    cfg = _config(args)
    model, _ = load_checkpoint(args.checkpoint)
    data = Path(args.data)
    ann_path = data / "annotations.tsv"
    if ann_path.exists():
        ids = [a.video_id for a in load_annotations(ann_path)]
    else:
        ids = sorted(p.stem for p in data.glob("*.feat"))
    if not ids:
        raise FileNotFoundError(f"no feature files in {data}")
    preds = {}
    for vid in ids:
        feats = load_features(data / f"{vid}.feat", vid).features
        preds[vid] = detect_video(feats, model, cfg.detect)
    save_predictions(preds, args.out)
    print(f"{sum(len(v) for v in preds.values())} detections written to {args.out}")


def cmd_score(args):
    cfg = _config(args)
    annotations = load_annotations(args.annotations)
    preds = load_predictions(args.predictions)
    report = evaluate(preds, _ground_truth(annotations), cfg.data.num_classes, cfg.network.spotting_only)
    text = render_reports([report], args.format)
    if args.out:
        emit_report(report, args.out, args.format)
    if args.json:
        save_report_json(report, args.json)
    sys.stdout.write(text)


def cmd_ablate(args):
    cfg = _config(args)
    dataset = Dataset.load(args.data)
    variants = args.variants or list(VARIANTS)
    reports = ablate(cfg, dataset, variants)
    text = ablation_table(reports, args.format)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)


def cmd_loso(args):
    cfg = _config(args)
    dataset = Dataset.load(args.data)
    result = loso(cfg, dataset)
    reports = list(result.fold_reports.values()) + [result.pooled]
    text = render_reports(reports, args.format)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)


def cmd_plot(args):
    from .evaluation import map_range
    from .plotting import plot_ap_vs_iou, plot_loss_curve

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if args.manifest:
        manifest = json.loads(Path(args.manifest).read_text())
        written.append(plot_loss_curve(manifest["epoch_losses"], out / "loss_curve.png", manifest.get("step_losses")))
    if args.predictions and args.annotations:
        gts = _ground_truth(load_annotations(args.annotations))
        preds = load_predictions(args.predictions)
        for mode, aware in (("spotting", False), ("detection", True)):
            ap, _ = map_range(preds, gts, class_aware=aware)
            if ap is None:
                continue
            written.append(plot_ap_vs_iou({args.label: ap}, out / f"ap_vs_iou_{mode}.png", f"{mode} AP vs. IoU"))
    elif args.predictions or args.annotations:
        raise ValueError("--predictions and --annotations must be given together")
    if not written:
        raise ValueError("nothing to plot: pass --manifest and/or --predictions with --annotations")
    for p in written:
        print(p)


def build_parser():
    parser = _Parser(prog="python -m fedn", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    _common(p)
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train on a dataset directory")
    _common(p)
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("detect", help="run a checkpoint over feature files")
    _common(p)
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("score", help="score predictions against annotations")
    _common(p)
    p.add_argument("--predictions", required=True, type=Path)
    p.add_argument("--annotations", required=True, type=Path)
    p.add_argument("--format", choices=("text_table", "delimited"), default="text_table")
    p.add_argument("--out", type=Path)
    p.add_argument("--json", type=Path, help="also write the full report as JSON")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("loso", help="leave-one-subject-out evaluation")
    _common(p)
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--format", choices=("text_table", "delimited"), default="text_table")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_loso)

    p = sub.add_parser("ablate", help="LOSO for each architecture/loss variant")
    _common(p)
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--variants", nargs="+", choices=sorted(VARIANTS))
    p.add_argument("--format", choices=("text_table", "delimited"), default="text_table")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("plot", help="loss curves and AP-vs-IoU figures")
    p.add_argument("--manifest", type=Path)
    p.add_argument("--predictions", type=Path)
    p.add_argument("--annotations", type=Path)
    p.add_argument("--label", default="FEDN")
    p.add_argument("--seed", type=int, help="accepted for symmetry; plotting uses no randomness")
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if isinstance(exc.code, str):
            print(exc.code, file=sys.stderr)
            return 2
        return exc.code or 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    torch.set_num_threads(1)
    try:
        args.func(args)
    except (OSError, ValueError) as exc:
        print(f"fedn {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
