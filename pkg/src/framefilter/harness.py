"""End-to-end runner, baselines, and the benchmark harness.

A run executes in phases per batch: phase 1 decodes frames and (in
filterforward mode) evaluates the shared base network; phase 2 evaluates the
classifiers on the resulting feature maps.  The two phases never interleave
within a batch.  After the stream is exhausted, per-frame verdicts are
smoothed into events, the original stream is archived with an index for
demand fetching, and the report accounts uplink bits against the
full-upload baseline.

Two reference filter families are provided for comparison:

* discrete classifiers (``discrete`` mode): pixel-input CNNs with no
  computation sharing, one full network per task;
* full-network clones (``full-dnn`` mode): one copy of the base network
  plus a 1-unit fully-connected head per task.
"""

from __future__ import annotations

import csv
import json
import os
import shutil
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .base import BaseNetwork, FeatureMapSet, build_base, extract, tap_dims
from .errors import (
    FrameFilterError,
    InvalidSpecError,
    NotFoundError,
    ValidationError,
)
from .events import (
    Archive,
    EVENTS_FILE,
    EventSegment,
    STREAM_FILE,
    VotingPolicy,
    annotate,
    demand_fetch,
    k_vote_smooth,
    segment_events,
    write_events_csv,
    write_metadata_csv,
)
from .mc import (
    FrameVerdict,
    MicroclassifierSpec,
    WlbcState,
    clone_spec,
    evaluate_all,
    load_spec,
    make_spec,
    validate_spec,
    wlbc_flush,
    _sigmoid_scalar,
)
from .metrics import (
    BitrateModel,
    CostParams,
    RecallWeights,
    bandwidth_report,
    break_even,
    event_f1,
    event_recall,
    frame_precision,
    layer_cost_table,
    model_cost,
    multiply_adds,
    render_report,
)
from .rng import WeightStream
from .stream import FrameStreamReader, FrameStreamWriter
from .synth import BlobTask, generate_synthetic
from .tensor import ConvParams, CropRect, FcParams, activation, conv2d, conv_out_dim, fully_connected, separable_conv2d
from .train import load_labels_csv

__all__ = [
    "DiscreteClassifierSpec",
    "FullDnnClassifier",
    "OracleClassifier",
    "PipelineConfig",
    "RunResult",
    "load_config",
    "make_discrete",
    "forward_discrete",
    "discrete_cost_layers",
    "make_full_dnn",
    "forward_full_dnn",
    "run",
    "bench",
    "fetch",
    "cost_breakdown",
]

MODES = ("filterforward", "discrete", "full-dnn")
KERNEL = 3
DC_STRIDE = 2


# ---------------------------------------------------------------------------
# Discrete (pixel-input) reference classifier
# ---------------------------------------------------------------------------

@dataclass
class DiscreteClassifierSpec:
    """Per-task pixel classifier with no shared computation.

    Fixed stack: conv(3x3, s2) -> relu -> two separable(3x3, s2) -> relu ->
    1-unit fully-connected -> sigmoid.  Widths are configurable; the default
    (16, (32, 32)) is a representative point between lightweight and
    full-network filters.
    """

    name: str
    input_height: int
    input_width: int
    conv_filters: int
    sep_filters: tuple[int, int]
    weights: dict[str, np.ndarray]
    threshold: float = 0.5

    def cost_layers(self, input_dims):
        return discrete_cost_layers(input_dims, self.conv_filters, self.sep_filters)


def discrete_cost_layers(
    input_dims: tuple[int, int], conv_filters: int = 16, sep_filters: tuple[int, int] = (32, 32)
) -> list[CostParams]:
    h, w = input_dims
    m = 3
    out = [CostParams("conv", h, w, m, kernel_size=KERNEL, stride=DC_STRIDE, filters=conv_filters)]
    h, w, m = conv_out_dim(h, DC_STRIDE), conv_out_dim(w, DC_STRIDE), conv_filters
    for f in sep_filters:
        out.append(CostParams("separable", h, w, m, kernel_size=KERNEL, stride=DC_STRIDE, filters=f))
        h, w, m = conv_out_dim(h, DC_STRIDE), conv_out_dim(w, DC_STRIDE), f
    out.append(CostParams("fc", h, w, m, hidden_units=1))
    return out


def make_discrete(
    name: str,
    input_dims: tuple[int, int],
    seed: int,
    conv_filters: int = 16,
    sep_filters: tuple[int, int] = (32, 32),
    threshold: float = 0.5,
) -> DiscreteClassifierSpec:
    h, w = input_dims
    ws = WeightStream(seed)
    weights: dict[str, np.ndarray] = {}
    weights["conv0.weight"] = ws.block((KERNEL, KERNEL, 3, conv_filters), fan_in=KERNEL * KERNEL * 3)
    weights["conv0.bias"] = np.zeros(conv_filters, dtype=np.float32)
    cin = conv_filters
    hh, ww = conv_out_dim(h, DC_STRIDE), conv_out_dim(w, DC_STRIDE)
    for i, f in enumerate(sep_filters, start=1):
        weights[f"sep{i}.depthwise"] = ws.block((KERNEL, KERNEL, cin), fan_in=KERNEL * KERNEL)
        weights[f"sep{i}.pointwise"] = ws.block((cin, f), fan_in=cin)
        weights[f"sep{i}.bias"] = np.zeros(f, dtype=np.float32)
        cin = f
        hh, ww = conv_out_dim(hh, DC_STRIDE), conv_out_dim(ww, DC_STRIDE)
    flat = hh * ww * cin
    weights["fc.weight"] = ws.block((1, flat), fan_in=flat)
    weights["fc.bias"] = np.zeros(1, dtype=np.float32)
    return DiscreteClassifierSpec(name, h, w, conv_filters, tuple(sep_filters), weights, threshold)


def forward_discrete(dc: DiscreteClassifierSpec, frame: np.ndarray, frame_index: int = 0) -> FrameVerdict:
    """Pixel-input forward pass; frame must be (H, W, 3) floats in [0, 1]."""
    w = dc.weights
    x = conv2d(frame, ConvParams(KERNEL, DC_STRIDE, dc.conv_filters, False, w["conv0.weight"], w["conv0.bias"]))
    x = activation(x, "relu")
    for i, f in enumerate(dc.sep_filters, start=1):
        x = separable_conv2d(
            x, ConvParams(KERNEL, DC_STRIDE, f, True, (w[f"sep{i}.depthwise"], w[f"sep{i}.pointwise"]), w[f"sep{i}.bias"])
        )
        x = activation(x, "relu")
    logit = float(fully_connected(x, FcParams(1, w["fc.weight"], w["fc.bias"]))[0])
    p = _sigmoid_scalar(logit)
    return FrameVerdict(frame_index, dc.name, p, p >= dc.threshold)


# ---------------------------------------------------------------------------
# Full-network baseline: one base copy plus a tiny head per task
# ---------------------------------------------------------------------------

@dataclass
class FullDnnClassifier:
    name: str
    net: BaseNetwork
    fc_weight: np.ndarray
    fc_bias: np.ndarray
    threshold: float = 0.5

    def cost_layers(self, input_dims):
        layers = self.net.cost_layers(input_dims)
        h, w, c = tap_dims(self.net, self.net.tap_names[-1])
        return layers + [CostParams("fc", h, w, c, hidden_units=1)]


def make_full_dnn(
    name: str, input_dims: tuple[int, int], seed: int, depth: int = 4, widths=(8, 16, 32, 64)
) -> FullDnnClassifier:
    net = build_base(seed, input_dims, depth, widths)
    h, w, c = tap_dims(net, net.tap_names[-1])
    ws = WeightStream(seed ^ 0xFFFF)
    flat = h * w * c
    return FullDnnClassifier(name, net, ws.block((1, flat), fan_in=flat), np.zeros(1, dtype=np.float32))


def forward_full_dnn(fd: FullDnnClassifier, frame: np.ndarray, frame_index: int = 0) -> FrameVerdict:
    fs = extract(fd.net, [frame], start_index=frame_index)[0]
    deepest = fs.maps[fd.net.tap_names[-1]]
    logit = float(fully_connected(deepest, FcParams(1, fd.fc_weight, fd.fc_bias))[0])
    p = _sigmoid_scalar(logit)
    return FrameVerdict(frame_index, fd.name, p, p >= fd.threshold)


# ---------------------------------------------------------------------------
# Oracle classifier (test hook): verdicts copied from a label file
# ---------------------------------------------------------------------------

@dataclass
class OracleClassifier:
    """Perfect filter driven by ground-truth labels; costs zero compute.

    Exists so the bandwidth and event machinery can be exercised with an
    ideal filter; never deployable.
    """

    name: str
    labels: dict[int, int]

    def verdict(self, frame_index: int) -> FrameVerdict:
        label = int(self.labels.get(frame_index, 0))
        return FrameVerdict(frame_index, self.name, float(label), label == 1)


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass
class ClassifierRef:
    """One [[microclassifier]] entry: a weight file or an oracle hook."""

    weights: Optional[Path] = None
    oracle_labels: Optional[Path] = None
    name: Optional[str] = None


@dataclass
class BenchSettings:
    frames: int = 32
    counts: tuple[int, ...] = (1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12)
    modes: tuple[str, ...] = ("filterforward", "discrete")
    height: int = 256
    width: int = 256
    base_seed: int = 7
    # Wider than the run default so the shared network costs a realistic
    # multiple of one classifier (roughly 35 default classifiers here).
    base_widths: tuple[int, ...] = (32, 64, 128, 128)
    classifier: str = "lbc"
    classifier_seed: int = 21
    noise_seed: int = 99
    out_csv: str = "bench.csv"


@dataclass
class TrainSettings:
    name: str = "mc"
    arch: str = "lbc"
    tap: Optional[str] = None
    crop: Optional[CropRect] = None
    threshold: float = 0.5
    window: int = 5
    weight_seed: int = 101
    learning_rate: float = 0.05
    momentum: float = 0.9
    epochs: float = 0.5
    batch_size: int = 16
    seed: int = 5
    stream: Optional[Path] = None
    labels: Optional[Path] = None
    feature_cache: Optional[Path] = None
    out_weights: Path = Path("mc.ffmc")


@dataclass
class SynthSettings:
    frames: int = 2000
    height: int = 64
    width: int = 64
    seed: int = 3
    prevalence: float = 0.1
    min_event_len: int = 10
    max_event_len: int = 30
    background_level: int = 80
    blob_min_intensity: int = 130
    blob_max_intensity: int = 200
    blob_radius_frac: float = 0.18
    out_stream: Path = Path("stream.ffvs")
    out_labels: Path = Path("labels.csv")


@dataclass
class PipelineConfig:
    mode: str = "filterforward"
    batch_size: int = 8
    workers: int = 1
    base_seed: int = 7
    base_depth: int = 4
    base_widths: tuple[int, ...] = (8, 16, 32, 64)
    stream: Optional[Path] = None
    labels: Optional[Path] = None
    output_dir: Path = Path("out")
    classifiers: list[ClassifierRef] = field(default_factory=list)
    baseline_count: int = 1
    discrete_seed: int = 11
    discrete_conv_filters: int = 16
    discrete_sep_filters: tuple[int, int] = (32, 32)
    voting: VotingPolicy = field(default_factory=VotingPolicy)
    bitrate: BitrateModel = field(default_factory=BitrateModel)
    recall_weights: RecallWeights = field(default_factory=RecallWeights)
    bench: BenchSettings = field(default_factory=BenchSettings)
    train: TrainSettings = field(default_factory=TrainSettings)
    synthetic: SynthSettings = field(default_factory=SynthSettings)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValidationError(f"run.mode: unknown mode {self.mode!r}; choose from {MODES}")
        if self.batch_size < 1:
            raise ValidationError(f"run.batch_size: must be >= 1, got {self.batch_size}")
        if self.baseline_count < 0:
            raise ValidationError(f"run.classifiers: must be >= 0, got {self.baseline_count}")

    def effective_workers(self) -> int:
        env = os.environ.get("FF_WORKERS")
        if env is not None:
            try:
                value = int(env)
            except ValueError:
                raise ValidationError(f"FF_WORKERS must be an integer, got {env!r}")
            if value < 1:
                raise ValidationError(f"FF_WORKERS must be >= 1, got {value}")
            return value
        return self.workers


def _take(table: dict, key: str, default, cast=None, context: str = ""):
    value = table.get(key, default)
    if cast is not None and value is not None:
        try:
            value = cast(value)
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"{context}{key}: {exc}") from exc
    return value


def _parse_crop(value, context: str) -> Optional[CropRect]:
    if value is None:
        return None
    if not (isinstance(value, (list, tuple)) and len(value) == 4):
        raise ValidationError(f"{context}crop: expected [row0, col0, row1, col1], got {value!r}")
    return CropRect(*[int(v) for v in value])


def load_config(path) -> PipelineConfig:
    """Parse the TOML config file; relative paths resolve against its folder."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"config file not found: {path}")
    try:
        doc = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ValidationError(f"{path}: {exc}") from exc
    base_dir = path.parent

    def resolve(p):
        return None if p is None else (base_dir / p)

    base = doc.get("base", {})
    runt = doc.get("run", {})
    voting = doc.get("voting", {})
    bitrate = doc.get("bitrate", {})
    bench = doc.get("bench", {})
    train = doc.get("train", {})
    synth = doc.get("synthetic", {})

    classifiers = []
    for i, entry in enumerate(doc.get("microclassifier", [])):
        ref = ClassifierRef(
            weights=resolve(entry.get("weights")),
            oracle_labels=resolve(entry.get("oracle_labels")),
            name=entry.get("name"),
        )
        if (ref.weights is None) == (ref.oracle_labels is None):
            raise ValidationError(
                f"microclassifier[{i}]: exactly one of 'weights' or 'oracle_labels' required"
            )
        if ref.oracle_labels is not None and ref.name is None:
            raise ValidationError(f"microclassifier[{i}]: oracle entries need a 'name'")
        classifiers.append(ref)

    widths = tuple(int(v) for v in base.get("widths", (8, 16, 32, 64)))
    config = PipelineConfig(
        mode=_take(runt, "mode", "filterforward", str, "run."),
        batch_size=_take(runt, "batch_size", 8, int, "run."),
        workers=_take(runt, "workers", 1, int, "run."),
        base_seed=_take(base, "seed", 7, int, "base."),
        base_depth=_take(base, "depth", len(widths), int, "base."),
        base_widths=widths,
        stream=resolve(runt.get("stream")),
        labels=resolve(runt.get("labels")),
        output_dir=base_dir / runt.get("output_dir", "out"),
        classifiers=classifiers,
        baseline_count=_take(runt, "classifiers", 1, int, "run."),
        discrete_seed=_take(doc.get("discrete", {}), "seed", 11, int, "discrete."),
        discrete_conv_filters=_take(doc.get("discrete", {}), "conv_filters", 16, int, "discrete."),
        discrete_sep_filters=tuple(
            int(v) for v in doc.get("discrete", {}).get("sep_filters", (32, 32))
        ),
        voting=VotingPolicy(
            window_size=_take(voting, "window", 5, int, "voting."),
            votes_required=_take(voting, "votes_required", 2, int, "voting."),
        ),
        bitrate=BitrateModel(
            frame_rate=_take(bitrate, "frame_rate", 15.0, float, "bitrate."),
            full_stream_bps=_take(bitrate, "full_stream_bps", 2e6, float, "bitrate."),
            event_bps=_take(bitrate, "event_bps", 5e5, float, "bitrate."),
        ),
        bench=BenchSettings(
            frames=_take(bench, "frames", 32, int, "bench."),
            counts=tuple(int(v) for v in bench.get("counts", range(1, 13))),
            modes=tuple(bench.get("modes", ("filterforward", "discrete"))),
            height=_take(bench, "height", 256, int, "bench."),
            width=_take(bench, "width", 256, int, "bench."),
            base_seed=_take(bench, "base_seed", 7, int, "bench."),
            base_widths=tuple(int(v) for v in bench.get("base_widths", (32, 64, 128, 128))),
            classifier=_take(bench, "classifier", "lbc", str, "bench."),
            classifier_seed=_take(bench, "classifier_seed", 21, int, "bench."),
            noise_seed=_take(bench, "noise_seed", 99, int, "bench."),
            out_csv=_take(bench, "out_csv", "bench.csv", str, "bench."),
        ),
        train=TrainSettings(
            name=_take(train, "name", "mc", str, "train."),
            arch=_take(train, "arch", "lbc", str, "train."),
            tap=train.get("tap"),
            crop=_parse_crop(train.get("crop"), "train."),
            threshold=_take(train, "threshold", 0.5, float, "train."),
            window=_take(train, "window", 5, int, "train."),
            weight_seed=_take(train, "weight_seed", 101, int, "train."),
            learning_rate=_take(train, "learning_rate", 0.05, float, "train."),
            momentum=_take(train, "momentum", 0.9, float, "train."),
            epochs=_take(train, "epochs", 0.5, float, "train."),
            batch_size=_take(train, "batch_size", 16, int, "train."),
            seed=_take(train, "seed", 5, int, "train."),
            stream=resolve(train.get("stream")),
            labels=resolve(train.get("labels")),
            feature_cache=resolve(train.get("feature_cache")),
            out_weights=base_dir / train.get("out_weights", "mc.ffmc"),
        ),
        synthetic=SynthSettings(
            frames=_take(synth, "frames", 2000, int, "synthetic."),
            height=_take(synth, "height", 64, int, "synthetic."),
            width=_take(synth, "width", 64, int, "synthetic."),
            seed=_take(synth, "seed", 3, int, "synthetic."),
            prevalence=_take(synth, "prevalence", 0.1, float, "synthetic."),
            min_event_len=_take(synth, "min_event_len", 10, int, "synthetic."),
            max_event_len=_take(synth, "max_event_len", 30, int, "synthetic."),
            background_level=_take(synth, "background_level", 80, int, "synthetic."),
            blob_min_intensity=_take(synth, "blob_min_intensity", 130, int, "synthetic."),
            blob_max_intensity=_take(synth, "blob_max_intensity", 200, int, "synthetic."),
            blob_radius_frac=_take(synth, "blob_radius_frac", 0.18, float, "synthetic."),
            out_stream=base_dir / synth.get("out_stream", "stream.ffvs"),
            out_labels=base_dir / synth.get("out_labels", "labels.csv"),
        ),
    )
    return config


# ---------------------------------------------------------------------------
# Run
# ---------------------------------------------------------------------------

@dataclass
class RunResult:
    output_dir: Path
    report_path: Path
    events_path: Path
    metadata_path: Path
    archive_dir: Path
    report: dict
    segments: list[EventSegment]


def _load_run_classifiers(config: PipelineConfig, net: Optional[BaseNetwork]):
    """(mc specs, oracles) per the config, validated against the network."""
    specs: list[MicroclassifierSpec] = []
    oracles: list[OracleClassifier] = []
    for i, ref in enumerate(config.classifiers):
        if ref.oracle_labels is not None:
            if not ref.oracle_labels.exists():
                raise ValidationError(f"microclassifier[{i}]: labels file {ref.oracle_labels} missing")
            oracles.append(OracleClassifier(ref.name, load_labels_csv(ref.oracle_labels)))
            continue
        if config.mode != "filterforward":
            raise ValidationError(
                f"microclassifier[{i}]: weight-file classifiers require filterforward mode"
            )
        if not ref.weights.exists():
            raise ValidationError(f"microclassifier[{i}]: weight file {ref.weights} missing")
        spec = load_spec(ref.weights)
        if ref.name:
            spec = clone_spec(spec, ref.name)
        specs.append(validate_spec(spec, net))
    names = [s.name for s in specs] + [o.name for o in oracles]
    if len(set(names)) != len(names):
        raise ValidationError(f"classifier names must be unique, got {names}")
    return specs, oracles


def _spec_batch_verdicts(spec, featsets, states) -> list[FrameVerdict]:
    out = []
    for fs in featsets:
        out.extend(evaluate_all([spec], fs, states))
    return out


def run(config: PipelineConfig, trace: Optional[list] = None) -> RunResult:
    """Execute the full pipeline and write report.json / events.csv /
    metadata.csv plus the demand-fetch archive.

    ``trace``, when given, receives ("extract" | "classify", batch_index,
    detail) tuples in execution order so phase discipline is observable.
    """
    if config.stream is None:
        raise ValidationError("run.stream: no input stream configured")
    workers = config.effective_workers()
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    archive_dir = out_dir / "archive"
    archive_dir.mkdir(exist_ok=True)

    with FrameStreamReader(config.stream) as reader:
        header = reader.header
        dims = (header.height, header.width)
        net = None
        specs: list[MicroclassifierSpec] = []
        if config.mode == "filterforward":
            net = build_base(config.base_seed, dims, config.base_depth, config.base_widths)
        specs, oracles = _load_run_classifiers(config, net)
        discretes: list[DiscreteClassifierSpec] = []
        fulls: list[FullDnnClassifier] = []
        if config.mode == "discrete":
            proto = make_discrete(
                "dc0", dims, config.discrete_seed,
                config.discrete_conv_filters, config.discrete_sep_filters,
            )
            discretes = [proto] + [replace(proto, name=f"dc{i}") for i in range(1, config.baseline_count)]
        elif config.mode == "full-dnn":
            proto = make_full_dnn("full0", dims, config.base_seed, config.base_depth, config.base_widths)
            fulls = [proto] + [replace(proto, name=f"full{i}") for i in range(1, config.baseline_count)]

        states = {s.name: WlbcState(s.window) for s in specs if s.arch == "wlbc"}
        verdicts: dict[str, dict[int, FrameVerdict]] = {
            name: {} for name in (
                [s.name for s in specs] + [d.name for d in discretes]
                + [f.name for f in fulls] + [o.name for o in oracles]
            )
        }
        base_evaluations = 0

        pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
        try:
            for batch_index, (start, frames) in enumerate(reader.iter_batches(config.batch_size)):
                floats = [np.asarray(f, dtype=np.float32) / np.float32(255.0) for f in frames]
                # phase 1: shared per-frame model
                featsets: list[FeatureMapSet] = []
                if net is not None:
                    featsets = extract(net, floats, start_index=start)
                    base_evaluations += len(featsets)
                if trace is not None:
                    trace.append(("extract", batch_index, len(floats)))
                # phase 2: classifiers only after phase 1 completed
                if config.mode == "filterforward":
                    if pool is not None:
                        batches = list(pool.map(
                            lambda s: _spec_batch_verdicts(s, featsets, states), specs
                        ))
                    else:
                        batches = [_spec_batch_verdicts(s, featsets, states) for s in specs]
                    for spec, vs in zip(specs, batches):
                        for v in vs:
                            verdicts[spec.name][v.frame_index] = v
                        if trace is not None:
                            trace.append(("classify", batch_index, spec.name))
                else:
                    models = discretes if config.mode == "discrete" else fulls
                    forward = forward_discrete if config.mode == "discrete" else forward_full_dnn
                    def eval_model(model):
                        return [forward(model, f, start + i) for i, f in enumerate(floats)]
                    results = list(pool.map(eval_model, models)) if pool is not None \
                        else [eval_model(m) for m in models]
                    for model, vs in zip(models, results):
                        for v in vs:
                            verdicts[model.name][v.frame_index] = v
                        if trace is not None:
                            trace.append(("classify", batch_index, model.name))
                for oracle in oracles:
                    for i in range(len(floats)):
                        v = oracle.verdict(start + i)
                        verdicts[oracle.name][v.frame_index] = v
        finally:
            if pool is not None:
                pool.shutdown()

        for spec in specs:
            if spec.arch == "wlbc":
                for v in wlbc_flush(spec, states[spec.name]):
                    verdicts[spec.name][v.frame_index] = v

        frame_count = header.frame_count

        # archive the original stream for demand fetching
        shutil.copyfile(config.stream, archive_dir / STREAM_FILE)
        archive = Archive(archive_dir / STREAM_FILE, frame_count, {})
        archive.save_index(archive_dir, header.width, header.height)

    # smoothing, segmentation, metadata
    ordered_names = list(verdicts.keys())
    positives: dict[str, np.ndarray] = {}
    all_segments: list[EventSegment] = []
    for name in ordered_names:
        vec = np.zeros(frame_count, dtype=np.uint8)
        for idx, v in verdicts[name].items():
            vec[idx] = 1 if v.positive else 0
        smoothed = k_vote_smooth(vec, config.voting)
        positives[name] = smoothed
        all_segments.extend(segment_events(smoothed, name))
    metadata = annotate(all_segments, frame_count)

    events_path = out_dir / "events.csv"
    metadata_path = out_dir / "metadata.csv"
    write_events_csv(events_path, all_segments)
    write_events_csv(archive_dir / EVENTS_FILE, all_segments)
    write_metadata_csv(metadata_path, metadata)

    # bandwidth: a frame is uploaded once no matter how many classifiers match
    if positives:
        union = np.zeros(frame_count, dtype=np.uint8)
        for vec in positives.values():
            union |= vec
    else:
        union = np.zeros(frame_count, dtype=np.uint8)
    matched = int(union.sum())
    bandwidth = bandwidth_report(matched, frame_count, config.bitrate)

    # metrics against ground truth, when provided
    metrics = None
    if config.labels is not None:
        truth_map = load_labels_csv(config.labels)
        truth_vec = np.zeros(frame_count, dtype=np.uint8)
        for idx, label in truth_map.items():
            if 0 <= idx < frame_count and label:
                truth_vec[idx] = 1
        truth_segments = segment_events(truth_vec, "truth")
        if truth_segments:
            combined = segment_events(union, "combined")
            truth_frames = {i for i in range(frame_count) if truth_vec[i]}
            union_frames = {i for i in range(frame_count) if union[i]}
            mean_recall = sum(
                event_recall(t, combined, config.recall_weights) for t in truth_segments
            ) / len(truth_segments)
            metrics = {
                "precision": frame_precision(union_frames, truth_frames),
                "mean_event_recall": mean_recall,
                "event_f1": event_f1(truth_segments, combined, config.recall_weights),
                "per_mc": {},
            }
            for name in ordered_names:
                segs = [s for s in all_segments if s.mc_name == name]
                frames = {i for i in range(frame_count) if positives[name][i]}
                metrics["per_mc"][name] = {
                    "precision": frame_precision(frames, truth_frames),
                    "event_f1": event_f1(truth_segments, segs, config.recall_weights),
                }

    # cost accounting
    per_model: dict[str, int] = {}
    per_frame_total = 0
    break_even_n = None
    dc_reference = sum(
        multiply_adds(p)
        for p in discrete_cost_layers(dims, config.discrete_conv_filters, config.discrete_sep_filters)
    )
    if config.mode == "filterforward":
        base_macs = model_cost(net, dims)
        per_model["base"] = base_macs
        per_frame_total += base_macs
        mc_costs = []
        for spec in specs:
            macs = model_cost(spec, tap_dims(net, spec.tap))
            per_model[spec.name] = macs
            mc_costs.append(macs)
            per_frame_total += macs
        for oracle in oracles:
            per_model[oracle.name] = 0
        if mc_costs:
            mean_mc = sum(mc_costs) / len(mc_costs)
            break_even_n = break_even(base_macs, mean_mc, dc_reference)
    else:
        models = discretes if config.mode == "discrete" else fulls
        for model in models:
            macs = model_cost(model, dims)
            per_model[model.name] = macs
            per_frame_total += macs
        for oracle in oracles:
            per_model[oracle.name] = 0

    cost = {
        "per_model": per_model,
        "per_frame_total": per_frame_total,
        "dc_reference": dc_reference,
        "break_even_n": "never" if (config.mode == "filterforward" and specs and break_even_n is None)
        else break_even_n,
    }
    run_info = {
        "mode": config.mode,
        "frames": frame_count,
        "matched_frames": matched,
        "base_evaluations": base_evaluations,
        "classifiers": ordered_names,
        "batch_size": config.batch_size,
        "workers": workers,
        "base_seed": config.base_seed,
    }
    report_text = render_report(metrics, bandwidth, cost, run_info)
    report_path = out_dir / "report.json"
    report_path.write_text(report_text)

    return RunResult(
        out_dir, report_path, events_path, metadata_path, archive_dir,
        json.loads(report_text), all_segments,
    )


# ---------------------------------------------------------------------------
# Bench
# ---------------------------------------------------------------------------

def _noise_frames(settings: BenchSettings, count: int) -> list[np.ndarray]:
    rng = np.random.default_rng(settings.noise_seed)
    return [
        (rng.integers(0, 256, size=(settings.height, settings.width, 3)) / 255.0).astype(np.float32)
        for _ in range(count)
    ]


def bench(
    config: PipelineConfig,
    counts: Optional[Sequence[int]] = None,
    frame_budget: Optional[int] = None,
    out_csv=None,
) -> list[dict]:
    """Measure frames/second and metered multiply-adds per frame as the
    classifier count grows, for each requested mode.

    Execution is phased exactly like ``run``; the events stage is excluded
    because its cost is independent of the classifier count.
    """
    settings = config.bench
    counts = list(counts if counts is not None else settings.counts)
    budget = frame_budget if frame_budget is not None else settings.frames
    if min(counts) < 1:
        raise ValidationError(f"bench counts must be >= 1, got {counts}")
    workers = config.effective_workers()
    dims = (settings.height, settings.width)
    frames = _noise_frames(settings, budget)

    net = build_base(settings.base_seed, dims, len(settings.base_widths), settings.base_widths)
    proto = make_spec("bench0", settings.classifier, net, settings.classifier_seed)
    proto_cost = model_cost(proto, tap_dims(net, proto.tap))
    base_cost = model_cost(net, dims)
    dc_proto = make_discrete("dc0", dims, config.discrete_seed,
                             config.discrete_conv_filters, config.discrete_sep_filters)
    dc_cost = model_cost(dc_proto, dims)
    full_proto = make_full_dnn("full0", dims, settings.base_seed,
                               len(settings.base_widths), settings.base_widths)
    full_cost = model_cost(full_proto, dims)

    rows = []
    for mode in settings.modes:
        if mode not in MODES:
            raise ValidationError(f"bench.modes: unknown mode {mode!r}")
        for n in counts:
            if mode == "filterforward":
                clones = [clone_spec(proto, f"bench{i}") for i in range(n)]
                states = {c.name: WlbcState(c.window) for c in clones if c.arch == "wlbc"}
                macs = base_cost + n * proto_cost

                def evaluate(batch, start):
                    featsets = extract(net, batch, start_index=start)
                    for c in clones:
                        _spec_batch_verdicts(c, featsets, states)
            elif mode == "discrete":
                models = [replace(dc_proto, name=f"dc{i}") for i in range(n)]
                macs = n * dc_cost

                def evaluate(batch, start):
                    for m in models:
                        for i, f in enumerate(batch):
                            forward_discrete(m, f, start + i)
            else:
                models = [replace(full_proto, name=f"full{i}") for i in range(n)]
                macs = n * full_cost

                def evaluate(batch, start):
                    for m in models:
                        for i, f in enumerate(batch):
                            forward_full_dnn(m, f, start + i)

            t0 = time.perf_counter()
            for start in range(0, budget, config.batch_size):
                evaluate(frames[start : start + config.batch_size], start)
            elapsed = time.perf_counter() - t0
            rows.append({
                "mode": mode,
                "n": n,
                "fps": budget / elapsed if elapsed > 0 else float("inf"),
                "macs_per_frame": macs,
                "workers": workers,
            })

    if out_csv is None:
        out_csv = Path(config.output_dir) / settings.out_csv
    out_csv = Path(out_csv)
    out_csv.parent.mkdir(parents=True, exist_ok=True)
    with open(out_csv, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["mode", "n", "fps", "macs_per_frame", "workers"])
        writer.writeheader()
        writer.writerows(rows)
    return rows


def bench_break_even_prediction(config: PipelineConfig) -> Optional[int]:
    """Cost-model crossover for the bench configuration (no timing)."""
    settings = config.bench
    dims = (settings.height, settings.width)
    net = build_base(settings.base_seed, dims, len(settings.base_widths), settings.base_widths)
    proto = make_spec("bench0", settings.classifier, net, settings.classifier_seed)
    return break_even(
        model_cost(net, dims),
        model_cost(proto, tap_dims(net, proto.tap)),
        model_cost(
            make_discrete("dc0", dims, config.discrete_seed,
                          config.discrete_conv_filters, config.discrete_sep_filters),
            dims,
        ),
    )


# ---------------------------------------------------------------------------
# Fetch
# ---------------------------------------------------------------------------

def fetch(archive_dir, mc_name: str, event_id: int, context_frames: int, out_path) -> tuple[int, int]:
    """Extract an event's frames (plus context) from the archive into a new
    stream file; returns the inclusive frame range written."""
    archive = Archive.load(archive_dir)
    start, end = demand_fetch(archive, mc_name, event_id, context_frames)
    with FrameStreamReader(archive.stream_path) as reader:
        with FrameStreamWriter(out_path, reader.header.width, reader.header.height) as writer:
            for i in range(start, end + 1):
                writer.append(reader.read_frame(i))
    return start, end


# ---------------------------------------------------------------------------
# Cost breakdown
# ---------------------------------------------------------------------------

BUILTIN_MODELS = ("base", "dc", "ffod", "lbc", "wlbc", "full-dnn")


def cost_breakdown(model: str, dims: tuple[int, int], config: PipelineConfig) -> dict:
    """Per-layer and total multiply-adds for a built-in model name or a
    microclassifier weight file, at the given frame dims.

    Microclassifiers additionally report the base network cost and their
    marginal-cost ratio versus the default discrete classifier.
    """
    dc_total = sum(
        multiply_adds(p)
        for p in discrete_cost_layers(dims, config.discrete_conv_filters, config.discrete_sep_filters)
    )

    def table_for(obj, input_dims):
        rows = []
        for label, params, macs in layer_cost_table(obj, input_dims):
            rows.append({"layer": label, "multiply_adds": macs})
        return rows, sum(r["multiply_adds"] for r in rows)

    if model == "base":
        net = build_base(config.base_seed, dims, config.base_depth, config.base_widths)
        rows, total = table_for(net, dims)
        return {"model": "base", "layers": rows, "total": total}
    if model == "dc":
        dc = make_discrete("dc0", dims, config.discrete_seed,
                           config.discrete_conv_filters, config.discrete_sep_filters)
        rows, total = table_for(dc, dims)
        return {"model": "dc", "layers": rows, "total": total}
    if model == "full-dnn":
        fd = make_full_dnn("full0", dims, config.base_seed, config.base_depth, config.base_widths)
        rows, total = table_for(fd, dims)
        return {"model": "full-dnn", "layers": rows, "total": total}

    net = build_base(config.base_seed, dims, config.base_depth, config.base_widths)
    if model in ("ffod", "lbc", "wlbc"):
        spec = make_spec(f"default-{model}", model, net, seed=1)
    else:
        weight_path = Path(model)
        if not weight_path.exists():
            raise NotFoundError(
                f"unknown model {model!r}: not one of {BUILTIN_MODELS} and no such weight file"
            )
        spec = validate_spec(load_spec(weight_path), net)
    rows, total = table_for(spec, tap_dims(net, spec.tap))
    base_total = model_cost(net, dims)
    return {
        "model": spec.name,
        "arch": spec.arch,
        "tap": spec.tap,
        "layers": rows,
        "total": total,
        "base_total": base_total,
        "dc_total": dc_total,
        "marginal_ratio_vs_dc": dc_total / total if total else float("inf"),
    }
