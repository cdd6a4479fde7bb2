"""Command-line entry point.

Subcommands: generate, train, run, bench, fetch, cost.  Every subcommand
takes --config pointing at a TOML file (schema in the README); flags
override individual settings.  Exit codes: 0 success, 2 validation error,
1 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import harness
from .base import build_base, extract, save_feature_cache
from .errors import FrameFilterError, ValidationError
from .mc import default_tap, make_spec_for_shape, save_spec
from .stream import FrameStreamReader
from .synth import BlobTask, generate_synthetic
from .train import TrainConfig, build_feature_dataset, dataset_from_cache, load_labels_csv, train


def _cmd_generate(args) -> int:
    config = harness.load_config(args.config)
    s = config.synthetic
    out_stream = Path(args.out_stream) if args.out_stream else s.out_stream
    out_labels = Path(args.out_labels) if args.out_labels else s.out_labels
    task = BlobTask(
        prevalence=s.prevalence,
        min_event_len=s.min_event_len,
        max_event_len=s.max_event_len,
        background_level=s.background_level,
        blob_min_intensity=s.blob_min_intensity,
        blob_max_intensity=s.blob_max_intensity,
        blob_radius_frac=s.blob_radius_frac,
    )
    summary = generate_synthetic(
        s.seed, s.frames, (s.height, s.width), task, out_stream, out_labels
    )
    print(json.dumps({
        "stream": str(out_stream),
        "labels": str(out_labels),
        "frames": summary["frame_count"],
        "positive_frames": summary["positive_frames"],
        "realized_prevalence": summary["realized_prevalence"],
        "events": len(summary["events"]),
    }, indent=2, sort_keys=True))
    return 0


def _training_features(config, settings):
    """Feature dataset from the cache if present, else extracted from the stream."""
    if settings.feature_cache is not None and settings.feature_cache.exists():
        if settings.labels is None:
            raise ValidationError("train.labels: required to pair cached features")
        tap = settings.tap
        if tap is None:
            raise ValidationError("train.tap: required when training from a feature cache")
        return dataset_from_cache(
            settings.feature_cache, settings.labels, tap,
            settings.crop, settings.arch, settings.window,
        ), None
    if settings.stream is None or settings.labels is None:
        raise ValidationError("train.stream and train.labels: required to extract features")
    with FrameStreamReader(settings.stream) as reader:
        dims = (reader.header.height, reader.header.width)
        net = build_base(config.base_seed, dims, config.base_depth, config.base_widths)
        featsets = []
        for start, frames in reader.iter_batches(config.batch_size):
            floats = [f.astype("float32") / 255.0 for f in frames]
            featsets.extend(extract(net, floats, start_index=start))
    if settings.feature_cache is not None:
        save_feature_cache(settings.feature_cache, featsets)
    labels = load_labels_csv(settings.labels)
    tap = settings.tap
    if tap is None:
        tap = default_tap(settings.arch, net)
    data = build_feature_dataset(
        featsets, labels, tap, settings.crop, settings.arch, settings.window
    )
    return data, net


def _cmd_train(args) -> int:
    config = harness.load_config(args.config)
    settings = config.train
    if args.out:
        settings = replace(settings, out_weights=Path(args.out))
    data, net = _training_features(config, settings)
    if not data.examples:
        raise ValidationError("train: no labeled examples found")
    first = data.examples[0][0]
    shape = tuple(first.shape[1:]) if settings.arch == "wlbc" else tuple(first.shape)
    spec = make_spec_for_shape(
        settings.name, settings.arch, data.tap, shape, settings.weight_seed,
        crop_rect=settings.crop, threshold=settings.threshold, window=settings.window,
    )
    result = train(spec, data, TrainConfig(
        learning_rate=settings.learning_rate,
        momentum=settings.momentum,
        epochs=settings.epochs,
        batch_size=settings.batch_size,
        seed=settings.seed,
    ))
    save_spec(settings.out_weights, result.spec)
    print(json.dumps({
        "weights": str(settings.out_weights),
        "examples": len(data.examples),
        "epoch_mean_losses": result.epoch_mean_losses,
    }, indent=2, sort_keys=True))
    return 0


def _cmd_run(args) -> int:
    config = harness.load_config(args.config)
    if args.output_dir:
        config = replace(config, output_dir=Path(args.output_dir))
    result = harness.run(config)
    print(result.report_path)
    return 0


def _cmd_bench(args) -> int:
    config = harness.load_config(args.config)
    counts = [int(v) for v in args.counts.split(",")] if args.counts else None
    rows = harness.bench(config, counts=counts, frame_budget=args.frames, out_csv=args.out)
    for row in rows:
        print(f"{row['mode']:>14} n={row['n']:<3} fps={row['fps']:9.2f} "
              f"macs/frame={row['macs_per_frame']}")
    return 0


def _cmd_fetch(args) -> int:
    archive_dir = Path(args.archive) if args.archive else None
    if archive_dir is None:
        config = harness.load_config(args.config)
        archive_dir = Path(config.output_dir) / "archive"
    start, end = harness.fetch(archive_dir, args.mc, args.event, args.context, args.out)
    print(f"{args.out}: frames {start}..{end}")
    return 0


def _cmd_cost(args) -> int:
    config = harness.load_config(args.config)
    breakdown = harness.cost_breakdown(args.model, (args.height, args.width), config)
    print(json.dumps(breakdown, indent=2, sort_keys=True))
    return 0


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="framefilter", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic labeled stream")
    p.add_argument("--config", required=True)
    p.add_argument("--out-stream", default=None)
    p.add_argument("--out-labels", default=None)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("train", help="train a microclassifier on labeled frames")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="weight file to write")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("run", help="filter a stream end to end")
    p.add_argument("--config", required=True)
    p.add_argument("--output-dir", default=None)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("bench", help="throughput and cost vs classifier count")
    p.add_argument("--config", required=True)
    p.add_argument("--counts", default=None, help="comma-separated classifier counts")
    p.add_argument("--frames", type=int, default=None, help="frame budget per point")
    p.add_argument("--out", default=None, help="CSV output path")
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("fetch", help="extract an archived event's frames")
    p.add_argument("--config", default=None)
    p.add_argument("--archive", default=None, help="archive directory (default: run output)")
    p.add_argument("--mc", required=True, help="classifier name")
    p.add_argument("--event", required=True, type=int, help="event id")
    p.add_argument("--context", type=int, default=0, help="context frames on each side")
    p.add_argument("--out", required=True, help="stream file to write")
    p.set_defaults(func=_cmd_fetch)

    p = sub.add_parser("cost", help="multiply-add breakdown for a model")
    p.add_argument("--config", required=True)
    p.add_argument("--model", required=True,
                   help=f"one of {harness.BUILTIN_MODELS} or a weight file path")
    p.add_argument("--height", type=int, default=1080)
    p.add_argument("--width", type=int, default=1920)
    p.set_defaults(func=_cmd_cost)
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FrameFilterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
