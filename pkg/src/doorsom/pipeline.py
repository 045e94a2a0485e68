"""End-to-end door detection: training, detection, model files, evaluation, timing.

Images go through edge detection, line fitting and candidate extraction;
each candidate's normalized feature vector is classified by the label of
its best matching unit on a calibrated self-organizing map.
"""

from __future__ import annotations

import statistics
import struct
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import som
from .canny import CannyConfig, canny_with_config
from .doorfeat import (
    CandidateFeatures,
    DoorCandidate,
    FeatureConfig,
    NormalizationStats,
    find_post_candidates,
    raw_features,
)
from .imgcore import GrayImage, RgbImage
from .linefit import LineConfig, LineSegment, detect_lines_with_config
from .som import DOOR, NON_DOOR, ErrorCurve, SomLattice, TrainSchedule
from .synthcorpus import CATEGORIES, CorpusItem, iou

MAGIC = b"SOMDOOR1"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class PipelineConfig:
    canny: CannyConfig = CannyConfig()
    lines: LineConfig = LineConfig()
    features: FeatureConfig = FeatureConfig()
    schedule: TrainSchedule = TrainSchedule()
    rows: int = 8
    cols: int = 8
    iou_threshold: float = 0.5


class TrainingError(RuntimeError):
    pass


class ModelFormatError(ValueError):
    """Malformed model file; ``field`` names the part that failed to parse."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(eq=False)
class DoorModel:
    lattice: SomLattice
    labels: np.ndarray  # int8 (rows, cols), DOOR or NON_DOOR
    norm: NormalizationStats
    canny_cfg: CannyConfig = CannyConfig()
    line_cfg: LineConfig = LineConfig()
    feat_cfg: FeatureConfig = FeatureConfig()
    schedule: TrainSchedule = TrainSchedule()
    format_version: int = FORMAT_VERSION

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int8)
        if self.labels.shape != (self.lattice.rows, self.lattice.cols):
            raise ValueError(f"label map shape {self.labels.shape} does not match the lattice")
        if not np.isin(self.labels, (NON_DOOR, DOOR)).all():
            raise ValueError("every node needs a door or non-door label")
        if self.lattice.dim != self.feat_cfg.dim or self.norm.dim != self.feat_cfg.dim:
            raise ValueError(
                f"lattice dim {self.lattice.dim} / norm dim {self.norm.dim} "
                f"!= feature dim {self.feat_cfg.dim}"
            )

    def classify(self, vector) -> int:
        return som.classify(self.lattice, self.labels, vector)

    def __eq__(self, other):
        if not isinstance(other, DoorModel):
            return NotImplemented
        return dump_model(self) == dump_model(other)

    __hash__ = None


def extract_candidates(img: GrayImage, cfg: PipelineConfig = PipelineConfig()) -> list[CandidateFeatures]:
    """Edges, lines, door candidates and their raw features for one image."""
    edges = canny_with_config(img, cfg.canny)
    segs = detect_lines_with_config(edges, cfg.lines)
    return [raw_features(c, img, cfg.features) for c in find_post_candidates(segs, img, cfg.features)]


def label_candidates(cands: Sequence[CandidateFeatures], truth, threshold: float = 0.5) -> list[int]:
    """DOOR for candidates whose region overlaps the true door box by IoU >= threshold."""
    if truth is None:
        return [NON_DOOR] * len(cands)
    box = (truth.x_left, truth.y_top, truth.x_right, truth.y_bottom)
    return [DOOR if iou(f.candidate.region(), box) >= threshold else NON_DOOR for f in cands]


@dataclass
class TrainOutcome:
    model: DoorModel
    curve: ErrorCurve
    n_images: int
    n_candidates: int
    n_doors: int
    train_accuracy: float


def fit_model(corpus: Iterable[CorpusItem], cfg: PipelineConfig = PipelineConfig(), seed: int = 0) -> TrainOutcome:
    """Train and calibrate a door model on a labeled corpus, keeping training diagnostics."""
    raws, classes = [], []
    n_images = 0
    for item in corpus:
        n_images += 1
        cands = extract_candidates(item.image, cfg)
        raws.extend(f.raw for f in cands)
        classes.extend(label_candidates(cands, item.truth, cfg.iou_threshold))
    n_doors = sum(1 for c in classes if c == DOOR)
    if n_doors == 0:
        raise TrainingError(
            f"no positive candidates: {n_images} images gave {len(classes)} candidates, none overlapping a door"
        )
    if n_doors == len(classes):
        raise TrainingError(f"no negative candidates: all {len(classes)} candidates from {n_images} images are doors")
    raw = np.vstack(raws)
    norm = NormalizationStats.fit(raw)
    data = np.vstack([norm.apply(r) for r in raw])
    y = np.asarray(classes, dtype=np.int64)
    init = som.init_lattice(cfg.rows, cfg.cols, cfg.features.dim, seed)
    lattice, curve = som.train(init, data, cfg.schedule, seed, labels=y)
    labels = som.calibrate_labels(lattice, data, y)
    acc = float(np.mean(som.classify_batch(lattice, labels, data) == y))
    model = DoorModel(lattice, labels, norm, cfg.canny, cfg.lines, cfg.features, cfg.schedule)
    return TrainOutcome(model, curve, n_images, len(classes), n_doors, acc)


def train_model(corpus: Iterable[CorpusItem], cfg: PipelineConfig = PipelineConfig(), seed: int = 0) -> DoorModel:
    return fit_model(corpus, cfg, seed).model


def model_pipeline_config(model: DoorModel) -> PipelineConfig:
    return PipelineConfig(model.canny_cfg, model.line_cfg, model.feat_cfg, model.schedule,
                          model.lattice.rows, model.lattice.cols)


def update(model: DoorModel, vector, label: int) -> tuple[int, int]:
    """Online refinement from one labeled, normalized vector.

    One training step at the convergence-phase rate and spread, after which
    the winning node takes the given label. Mutates ``model``; returns the BMU.
    """
    if label not in (DOOR, NON_DOOR):
        raise ValueError(f"label must be {NON_DOOR} or {DOOR}, got {label}")
    s = model.schedule
    bmu = som.train_step(model.lattice, vector, s.eta_conv, s.sigma_conv, s.h0)
    model.labels[bmu] = label
    return bmu


# ---------------------------------------------------------------- detection


@dataclass(frozen=True)
class Detection:
    cls: int
    region: tuple  # half-open (x_left, y_top, x_right, y_bottom)
    left_post: LineSegment
    right_post: LineSegment
    vector: np.ndarray

    def record(self) -> str:
        x0, y0, x1, y1 = self.region
        return f"{self.cls} {x0:g} {y0:g} {x1:g} {y1:g}"


@dataclass(frozen=True)
class DetectionResult:
    width: int
    height: int
    detections: tuple

    @property
    def doors(self) -> list[Detection]:
        return [d for d in self.detections if d.cls == DOOR]

    def records(self) -> str:
        return "".join(d.record() + "\n" for d in self.detections)

    def line_raster(self) -> np.ndarray:
        """Binary image: posts of candidates classified as doors are 1, all else 0."""
        out = np.zeros((self.height, self.width), dtype=np.uint8)
        for d in self.doors:
            for s in (d.left_post, d.right_post):
                _draw_segment(out, s, 1)
        return out

    def overlay(self, img: GrayImage) -> RgbImage:
        """The image in color with detected door boxes outlined in red."""
        rgb = np.repeat(img.data[:, :, None], 3, axis=2).copy()
        for d in self.doors:
            x0, y0, x1, y1 = (int(round(v)) for v in d.region)
            x1, y1 = min(x1, self.width) - 1, min(y1, self.height) - 1
            if x1 < x0 or y1 < y0:
                continue
            red = np.array([255, 0, 0], dtype=np.uint8)
            rgb[y0, x0 : x1 + 1] = red
            rgb[y1, x0 : x1 + 1] = red
            rgb[y0 : y1 + 1, x0] = red
            rgb[y0 : y1 + 1, x1] = red
        return RgbImage(rgb)


def _draw_segment(raster: np.ndarray, s: LineSegment, value: int) -> None:
    h, w = raster.shape
    n = int(np.ceil(max(abs(s.x1 - s.x0), abs(s.y1 - s.y0)))) + 1
    xs = np.rint(np.linspace(s.x0, s.x1, n)).astype(int)
    ys = np.rint(np.linspace(s.y0, s.y1, n)).astype(int)
    ok = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
    raster[ys[ok], xs[ok]] = value


def detect_doors(img: GrayImage, model: DoorModel) -> DetectionResult:
    """Classify every door candidate of ``img``; an image without candidates gives an empty result."""
    cfg = model_pipeline_config(model)
    out = []
    for f in extract_candidates(img, cfg):
        vec = model.norm.apply(f.raw)
        c: DoorCandidate = f.candidate
        out.append(Detection(model.classify(vec), c.region(), c.left_post, c.right_post, vec))
    return DetectionResult(img.width, img.height, tuple(out))


# ---------------------------------------------------------------- model files


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_value(text: str, like):
    if isinstance(like, bool):
        if text not in ("true", "false"):
            raise ValueError(f"expected true/false, got {text!r}")
        return text == "true"
    if isinstance(like, int):
        return int(text)
    return float(text)


_SECTIONS = (("canny", "canny_cfg", CannyConfig), ("lines", "line_cfg", LineConfig),
             ("features", "feat_cfg", FeatureConfig), ("schedule", "schedule", TrainSchedule))


def _config_text(model: DoorModel) -> bytes:
    lines = []
    for prefix, attr, _ in _SECTIONS:
        obj = getattr(model, attr)
        for f in fields(obj):
            lines.append(f"{prefix}.{f.name}={_format_value(getattr(obj, f.name))}")
    return ("\n".join(lines) + "\n").encode("utf-8")


def _parse_config_text(text: bytes) -> dict:
    try:
        s = text.decode("utf-8")
    except UnicodeDecodeError as e:
        raise ModelFormatError("config", f"not UTF-8 ({e})") from None
    pairs = {}
    for lineno, line in enumerate(s.splitlines(), 1):
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ModelFormatError("config", f"line {lineno} is not key=value: {line!r}")
        pairs[key] = value
    out = {}
    for prefix, attr, cls in _SECTIONS:
        defaults = cls()
        kwargs = {}
        for f in fields(cls):
            key = f"{prefix}.{f.name}"
            if key not in pairs:
                raise ModelFormatError("config", f"missing key {key}")
            try:
                kwargs[f.name] = _parse_value(pairs.pop(key), getattr(defaults, f.name))
            except ValueError as e:
                raise ModelFormatError("config", f"{key}: {e}") from None
        try:
            out[attr] = cls(**kwargs)
        except ValueError as e:
            raise ModelFormatError("config", f"{prefix}: {e}") from None
    if pairs:
        raise ModelFormatError("config", f"unknown keys {sorted(pairs)}")
    return out


def dump_model(model: DoorModel) -> bytes:
    """Serialize a model to the SOMDOOR1 byte layout (all numbers little-endian).

    magic, u32 format_version, u32 rows, u32 cols, u32 dim, f64 weights
    (row-major), u8 node labels, f64 norm minima, f64 norm maxima,
    u32 config length, UTF-8 key=value config text.
    """
    l = model.lattice
    text = _config_text(model)
    parts = [
        MAGIC,
        struct.pack("<4I", model.format_version, l.rows, l.cols, l.dim),
        l.weights.astype("<f8").tobytes(),
        model.labels.astype(np.uint8).tobytes(),
        model.norm.lo.astype("<f8").tobytes(),
        model.norm.hi.astype("<f8").tobytes(),
        struct.pack("<I", len(text)),
        text,
    ]
    return b"".join(parts)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, field_name: str) -> bytes:
        have = len(self.buf) - self.pos
        if have < n:
            raise ModelFormatError(field_name, f"truncated: expected {n} bytes at offset {self.pos}, got {have}")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out


def load_model(buf: bytes) -> DoorModel:
    """Inverse of :func:`dump_model`; errors name the field that failed."""
    r = _Reader(bytes(buf))
    if r.take(len(MAGIC), "magic") != MAGIC:
        raise ModelFormatError("magic", "bad magic, not a SOMDOOR1 model file")
    (version,) = struct.unpack("<I", r.take(4, "format_version"))
    if version != FORMAT_VERSION:
        raise ModelFormatError("format_version", f"version mismatch: file has {version}, reader supports {FORMAT_VERSION}")
    rows, cols, dim = struct.unpack("<3I", r.take(12, "dimensions"))
    if min(rows, cols, dim) < 1:
        raise ModelFormatError("dimensions", f"lattice {rows}x{cols}x{dim} has an empty axis")
    weights = np.frombuffer(r.take(8 * rows * cols * dim, "weights"), dtype="<f8").reshape(rows, cols, dim)
    labels = np.frombuffer(r.take(rows * cols, "labels"), dtype=np.uint8).reshape(rows, cols)
    if not np.isin(labels, (NON_DOOR, DOOR)).all():
        raise ModelFormatError("labels", "node labels must be 0 or 1")
    lo = np.frombuffer(r.take(8 * dim, "norm_min"), dtype="<f8")
    hi = np.frombuffer(r.take(8 * dim, "norm_max"), dtype="<f8")
    (n_text,) = struct.unpack("<I", r.take(4, "config_length"))
    cfg = _parse_config_text(r.take(n_text, "config"))
    if r.pos != len(r.buf):
        raise ModelFormatError("trailer", f"{len(r.buf) - r.pos} unexpected bytes after the config block")
    try:
        norm = NormalizationStats(lo.astype(np.float64), hi.astype(np.float64))
        return DoorModel(SomLattice(weights.astype(np.float64)), labels.astype(np.int8), norm,
                         format_version=version, **cfg)
    except ValueError as e:
        raise ModelFormatError("model", str(e)) from None


def save_model(path, model: DoorModel) -> None:
    Path(path).write_bytes(dump_model(model))


def read_model(path) -> DoorModel:
    return load_model(Path(path).read_bytes())


# ---------------------------------------------------------------- evaluation


@dataclass(frozen=True)
class ImageLog:
    category: str
    index: int
    has_door: bool
    n_candidates: int
    n_door_calls: int
    best_iou: float  # best IoU of a door-classified candidate with the true box, 0 without
    detected: bool

    def format(self) -> str:
        return (f"{self.category} {self.index} {int(self.has_door)} {self.n_candidates} "
                f"{self.n_door_calls} {self.best_iou:.3f} {int(self.detected)}")


@dataclass(frozen=True)
class CategoryRow:
    category: str
    images: int
    detected: int
    doors: int
    doors_found: int

    @property
    def accuracy(self) -> Optional[float]:
        return None if self.images == 0 else 100.0 * self.detected / self.images

    @property
    def recall(self) -> Optional[float]:
        return None if self.doors == 0 else 100.0 * self.doors_found / self.doors


@dataclass
class EvalReport:
    rows: list
    logs: list = field(default_factory=list)

    def row(self, category: str) -> CategoryRow:
        for r in self.rows:
            if r.category == category:
                return r
        raise KeyError(category)

    def format(self) -> str:
        head = ("Category", "Images", "Detected", "Accuracy", "Doors", "Found", "Recall")
        body = []
        for r in self.rows:
            acc = "-" if r.accuracy is None else f"{r.accuracy:.2f}"
            rec = "-" if r.recall is None else f"{r.recall:.2f}"
            body.append((r.category.capitalize(), str(r.images), str(r.detected), acc,
                         str(r.doors), str(r.doors_found), rec))
        widths = [max(len(row[k]) for row in [head] + body) for k in range(len(head))]
        fmt = lambda row: "  ".join(v.ljust(w) if k == 0 else v.rjust(w) for k, (v, w) in enumerate(zip(row, widths)))
        return "\n".join(fmt(row) for row in [head] + body) + "\n"

    def format_logs(self) -> str:
        lines = ["category index has_door candidates door_calls best_iou detected"]
        lines += [g.format() for g in self.logs]
        return "\n".join(lines) + "\n"


def evaluate_image(item: CorpusItem, model: DoorModel, threshold: float = 0.5) -> ImageLog:
    """An image with a door is detected when a door-classified candidate overlaps it
    by IoU >= threshold; an image without a door counts as detected when no
    candidate is called a door."""
    res = detect_doors(item.image, model)
    calls = res.doors
    best = 0.0
    if item.truth is not None:
        box = (item.truth.x_left, item.truth.y_top, item.truth.x_right, item.truth.y_bottom)
        best = max((iou(d.region, box) for d in calls), default=0.0)
        detected = best >= threshold
    else:
        detected = not calls
    return ImageLog(item.category, item.index, item.truth is not None, len(res.detections),
                    len(calls), best, detected)


def summarize(logs: Sequence[ImageLog], categories: Sequence[str] = CATEGORIES) -> EvalReport:
    cats = list(categories) + sorted({g.category for g in logs} - set(categories))
    rows = []
    for cat in cats:
        mine = [g for g in logs if g.category == cat]
        rows.append(CategoryRow(
            cat, len(mine), sum(g.detected for g in mine),
            sum(g.has_door for g in mine), sum(g.has_door and g.detected for g in mine),
        ))
    return EvalReport(rows, list(logs))


def evaluate_corpus(model: DoorModel, corpus: Iterable[CorpusItem], threshold: float = 0.5) -> EvalReport:
    """Per-category image detection rate and per-door recall, with per-image logs."""
    return summarize([evaluate_image(item, model, threshold) for item in corpus])


# ---------------------------------------------------------------- timing


@dataclass(frozen=True)
class BenchReport:
    classification: float
    train_step: float
    full_training: float
    edge_detection: float
    line_fitting: float
    feature_extraction: float
    reps: dict

    def format(self) -> str:
        rows = [
            ("Pattern Classification Time", self.classification),
            ("Learning Update Time", self.train_step),
            ("Initial Update Time", self.full_training),
            ("Edge Detection Time", self.edge_detection),
            ("Line Fitting Time", self.line_fitting),
            ("Feature Extraction Time", self.feature_extraction),
        ]
        width = max(len(name) for name, _ in rows)
        out = [f"{'Attribute'.ljust(width)}  Value"]
        out += [f"{name.ljust(width)}  {value:.6f} sec" for name, value in rows]
        return "\n".join(out) + "\n"


def _median_time(fn, reps: int) -> float:
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def bench(model: DoorModel, img: GrayImage, classify_reps: int = 1000, step_reps: int = 100,
          train_reps: int = 100, stage_reps: int = 20, seed: int = 0) -> BenchReport:
    """Median wall-clock times of the classifier and the pipeline stages.

    Training runs use the model's schedule and lattice size on the image's
    normalized candidate vectors (random vectors when it has none).
    """
    cfg = model_pipeline_config(model)
    edges = canny_with_config(img, cfg.canny)
    segs = detect_lines_with_config(edges, cfg.lines)
    cands = find_post_candidates(segs, img, cfg.features)
    rng = np.random.Generator(np.random.PCG64(seed))
    if cands:
        data = np.vstack([model.norm.apply(raw_features(c, img, cfg.features).raw) for c in cands])
    else:
        data = rng.random((8, model.lattice.dim))
    x = data[0]
    lat = model.lattice.copy()
    s = model.schedule
    init = som.init_lattice(lat.rows, lat.cols, lat.dim, seed)
    quiet = replace(s, sample_every=s.total_iters)

    t_cls = _median_time(lambda: model.classify(x), classify_reps)
    t_step = _median_time(lambda: som.train_step(lat, x, s.eta_conv, s.sigma_conv, s.h0), step_reps)
    t_train = _median_time(lambda: som.train(init, data, quiet, seed), train_reps)
    t_edges = _median_time(lambda: canny_with_config(img, cfg.canny), stage_reps)
    t_lines = _median_time(lambda: detect_lines_with_config(edges, cfg.lines), stage_reps)
    t_feat = _median_time(
        lambda: [raw_features(c, img, cfg.features) for c in find_post_candidates(segs, img, cfg.features)],
        stage_reps,
    )
    reps = {"classification": classify_reps, "train_step": step_reps, "full_training": train_reps,
            "stages": stage_reps}
    return BenchReport(t_cls, t_step, t_train, t_edges, t_lines, t_feat, reps)
