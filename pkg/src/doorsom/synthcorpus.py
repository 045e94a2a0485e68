"""Synthetic fronto-parallel door scenes with exact ground truth.

A scene is a flat wall above a floor, split by a horizontal floor line.
The door is a rectangle whose bottom edge sits ``concavity`` pixels above
the floor line (the recess shows as floor between the door bottom and the
floor line) and whose lowest ``gap_height`` rows form the bottom gap, darker
or brighter than both the door and the floor by ``gap_delta`` levels.
Optional distractors are windows (bottom well above the floor) and flush
panels (bottom on the floor line, no gap). Lighting categories follow the
day / night / shadow split.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .imgcore import GrayImage, read_pnm, write_pnm

CATEGORIES = ("day", "night", "shadow")

DEFAULT_WIDTH = 320
DEFAULT_HEIGHT = 240


@dataclass(frozen=True)
class Rect:
    """Half-open pixel box: columns [x_left, x_right), rows [y_top, y_bottom)."""

    x_left: int
    y_top: int
    x_right: int
    y_bottom: int

    @property
    def width(self) -> int:
        return self.x_right - self.x_left

    @property
    def height(self) -> int:
        return self.y_bottom - self.y_top

    def area(self) -> float:
        return float(max(0, self.width) * max(0, self.height))


def iou(a, b) -> float:
    """Intersection over union of two boxes given as (x_left, y_top, x_right, y_bottom)."""
    ax0, ay0, ax1, ay1 = a
    bx0, by0, bx1, by1 = b
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    return float(inter / union) if union > 0 else 0.0


@dataclass(frozen=True)
class Distractor:
    kind: str  # "window" or "panel"
    rect: Rect
    luminance: float


@dataclass(frozen=True)
class SceneSpec:
    width: int = DEFAULT_WIDTH
    height: int = DEFAULT_HEIGHT
    floor_y: int = 190
    door: Optional[Rect] = None
    concavity: int = 6
    gap_height: int = 3
    gap_polarity: str = "dark"  # "dark" | "bright"
    gap_delta: float = 40.0
    wall: float = 130.0
    door_lum: float = 180.0
    floor: float = 80.0
    category: str = "day"
    shadow: Optional[tuple] = None  # (Rect, attenuation)
    lamp: Optional[tuple] = None  # (x, y, spread) for night lighting
    noise: float = 0.0
    distractors: tuple = ()
    seed: int = 0

    def validate(self) -> None:
        if self.width < 16 or self.height < 16:
            raise ValueError("scene must be at least 16x16")
        if not 0 < self.floor_y < self.height:
            raise ValueError("floor line outside the image")
        if self.category not in CATEGORIES:
            raise ValueError(f"unknown lighting category {self.category!r}")
        if self.gap_polarity not in ("dark", "bright"):
            raise ValueError("gap_polarity must be 'dark' or 'bright'")
        for name in ("wall", "door_lum", "floor"):
            if not 0 <= getattr(self, name) <= 255:
                raise ValueError(f"{name} luminance out of range")
        if self.noise < 0:
            raise ValueError("noise amplitude must be >= 0")
        d = self.door
        if d is None:
            return
        if not 0 <= self.concavity <= 12:
            raise ValueError("concavity must lie in [0, 12]")
        if not 1 <= self.gap_height <= 6:
            raise ValueError("gap_height must lie in [1, 6]")
        if not 10 <= self.gap_delta <= 80:
            raise ValueError("gap_delta must lie in [10, 80]")
        if not (0 <= d.x_left < d.x_right <= self.width and 0 <= d.y_top < d.y_bottom <= self.height):
            raise ValueError("door rectangle outside the image")
        if d.y_bottom != self.floor_y - self.concavity:
            raise ValueError("door bottom must sit concavity pixels above the floor line")
        if d.height <= self.gap_height:
            raise ValueError("gap taller than the door")
        g = self.gap_luminance()
        if not 0 <= g <= 255:
            raise ValueError(f"gap luminance {g} out of range")

    def gap_luminance(self) -> float:
        if self.gap_polarity == "dark":
            return min(self.door_lum, self.floor) - self.gap_delta
        return max(self.door_lum, self.floor) + self.gap_delta


@dataclass(frozen=True)
class GroundTruth:
    category: str
    index: int
    door: Optional[Rect]
    concavity: int
    gap_delta: float
    gap_polarity: str = "dark"
    post_x: tuple = ()  # (left, right) boundary columns

    def record(self) -> str:
        d = self.door
        if d is None:
            return f"{self.category} {self.index} - - - - 0 0"
        return (f"{self.category} {self.index} {d.x_left} {d.y_top} {d.x_right} {d.y_bottom} "
                f"{self.concavity} {self.gap_delta:g}")


def render_scene(spec: SceneSpec, index: int = 0) -> tuple[GrayImage, GroundTruth]:
    """Rasterize a scene; returns the 8-bit image and its ground truth."""
    spec.validate()
    h, w = spec.height, spec.width
    img = np.full((h, w), spec.wall, dtype=np.float64)
    img[spec.floor_y :, :] = spec.floor

    for dist in spec.distractors:
        r = dist.rect
        img[r.y_top : r.y_bottom, r.x_left : r.x_right] = dist.luminance

    d = spec.door
    if d is not None:
        img[d.y_top : d.y_bottom, d.x_left : d.x_right] = spec.door_lum
        img[d.y_bottom : spec.floor_y, d.x_left : d.x_right] = spec.floor  # recess floor
        img[d.y_bottom - spec.gap_height : d.y_bottom, d.x_left : d.x_right] = spec.gap_luminance()

    gain = np.ones((h, w))
    if spec.category == "night":
        lx, ly, spread = spec.lamp if spec.lamp else (w / 2, 0.0, 0.5 * w)
        yy, xx = np.mgrid[0:h, 0:w]
        gain *= 0.6 * (0.8 + 0.4 * np.exp(-((xx - lx) ** 2 + (yy - ly) ** 2) / (2.0 * spread ** 2)))
    if spec.shadow is not None:
        r, att = spec.shadow
        gain[r.y_top : r.y_bottom, r.x_left : r.x_right] *= att
    img *= gain

    if spec.noise > 0:
        rng = np.random.Generator(np.random.PCG64(spec.seed))
        img += rng.uniform(-spec.noise, spec.noise, size=img.shape)
    out = GrayImage(np.clip(np.rint(img), 0, 255).astype(np.uint8))
    truth = GroundTruth(
        category=spec.category,
        index=index,
        door=d,
        concavity=spec.concavity if d is not None else 0,
        gap_delta=spec.gap_delta if d is not None else 0.0,
        gap_polarity=spec.gap_polarity,
        post_x=(d.x_left, d.x_right) if d is not None else (),
    )
    return out, truth


def _pick_lum(rng, base: float, lo: float = 35.0, hi: float = 70.0, bounds=(40.0, 215.0)) -> float:
    """A luminance at least ``lo`` levels away from ``base`` and inside ``bounds``."""
    for _ in range(32):
        v = base + rng.choice((-1.0, 1.0)) * rng.uniform(lo, hi)
        if bounds[0] <= v <= bounds[1]:
            return float(round(v))
    return float(bounds[1] if base < 128 else bounds[0])


def _free(span, taken, margin) -> bool:
    a0, a1 = span
    return all(a1 + margin <= b0 or b1 + margin <= a0 for b0, b1 in taken)


def sample_scene(rng: np.random.Generator, category: str, width: int = DEFAULT_WIDTH,
                 height: int = DEFAULT_HEIGHT, seed: int = 0) -> SceneSpec:
    """Draw a random door scene for ``category`` from the documented ranges.

    Door width 15-30% of the image, door top above mid-height, floor line in
    the 72-88% band, concavity 2-10 px, gap 2-4 rows with contrast 10-80,
    up to two distractors, uniform noise up to 4 levels.
    """
    W, H = width, height
    floor_y = int(rng.integers(round(0.72 * H), round(0.88 * H) + 1))
    concavity = int(rng.integers(2, 11))
    gap_height = int(rng.integers(2, 5))
    dw = int(rng.integers(round(0.15 * W), round(0.30 * W) + 1))
    x_left = int(rng.integers(round(0.05 * W), round(0.95 * W) - dw + 1))
    y_top = int(rng.integers(round(0.08 * H), round(0.40 * H) + 1))
    door = Rect(x_left, y_top, x_left + dw, floor_y - concavity)

    wall = float(rng.integers(90, 171))
    door_lum = _pick_lum(rng, wall)
    floor = _pick_lum(rng, wall)
    polarity = "dark" if rng.random() < 0.5 else "bright"
    delta = float(rng.integers(10, 81))
    lo_room = min(door_lum, floor) - 5
    hi_room = 250 - max(door_lum, floor)
    if polarity == "dark" and lo_room < delta:
        polarity = "bright" if hi_room >= delta else polarity
    if polarity == "bright" and hi_room < delta:
        polarity = "dark" if lo_room >= delta else polarity
    room = lo_room if polarity == "dark" else hi_room
    delta = float(max(10.0, min(delta, room)))

    taken = [(door.x_left, door.x_right)]
    distractors = []
    for kind in ("window", "panel"):
        if rng.random() >= 0.5:
            continue
        dwid = int(rng.integers(round(0.10 * W), round(0.25 * W) + 1))
        x0 = int(rng.integers(2, W - dwid - 2))
        if not _free((x0, x0 + dwid), taken, 12):
            continue
        top = int(rng.integers(round(0.08 * H), round(0.35 * H) + 1))
        if kind == "window":
            bottom = int(rng.integers(round(0.55 * H), floor_y - 20 + 1))
        else:
            bottom = floor_y
        taken.append((x0, x0 + dwid))
        distractors.append(Distractor(kind, Rect(x0, top, x0 + dwid, bottom), _pick_lum(rng, wall)))

    shadow = None
    lamp = None
    if category == "night":
        lamp = (float(rng.uniform(0, W)), float(rng.uniform(-0.2 * H, 0.3 * H)), float(rng.uniform(0.3 * W, 0.6 * W)))
    elif category == "shadow":
        sx0 = int(rng.integers(0, door.x_left + dw // 2))
        sx1 = int(rng.integers(door.x_left + dw // 2, W + 1))
        sy0 = int(rng.integers(round(0.55 * H), max(round(0.55 * H), door.y_bottom - 20) + 1))
        shadow = (Rect(sx0, sy0, sx1, H), float(rng.uniform(0.45, 0.75)))

    return SceneSpec(
        width=W, height=H, floor_y=floor_y, door=door, concavity=concavity,
        gap_height=gap_height, gap_polarity=polarity, gap_delta=delta, wall=wall,
        door_lum=door_lum, floor=floor, category=category, shadow=shadow, lamp=lamp,
        noise=float(rng.uniform(0.0, 4.0)), distractors=tuple(distractors), seed=seed,
    )


def scene_rng(seed: int, category: str, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64([seed, CATEGORIES.index(category), index]))


def generate_specs(n_per_category: int, seed: int, width: int = DEFAULT_WIDTH,
                   height: int = DEFAULT_HEIGHT) -> list[SceneSpec]:
    if n_per_category < 1:
        raise ValueError("n_per_category must be >= 1")
    specs = []
    for cat in CATEGORIES:
        for i in range(n_per_category):
            rng = scene_rng(seed, cat, i)
            specs.append(sample_scene(rng, cat, width, height, seed=int(rng.integers(2**63))))
    return specs


@dataclass
class CorpusItem:
    category: str
    index: int
    image: GrayImage
    truth: Optional[Rect]


def generate_corpus(n_per_category: int, seed: int, out_dir=None, width: int = DEFAULT_WIDTH,
                    height: int = DEFAULT_HEIGHT) -> list[CorpusItem]:
    """Render ``n_per_category`` scenes per lighting category.

    With ``out_dir`` the images go to ``<out_dir>/<category>/<index>.pgm``
    and the truth records to ``<out_dir>/truth.txt``.
    """
    items, records = [], []
    per_cat: dict = {}
    for spec in generate_specs(n_per_category, seed, width, height):
        idx = per_cat.get(spec.category, 0)
        per_cat[spec.category] = idx + 1
        img, truth = render_scene(spec, idx)
        items.append(CorpusItem(spec.category, idx, img, spec.door))
        records.append(truth.record())
    if out_dir is not None:
        out = Path(out_dir)
        for cat in CATEGORIES:
            (out / cat).mkdir(parents=True, exist_ok=True)
        for it in items:
            write_pnm(out / it.category / f"{it.index:04d}.pgm", it.image)
        (out / "truth.txt").write_text("\n".join(records) + "\n", encoding="utf-8")
    return items


def parse_truth(text: str) -> dict:
    """Map (category, index) -> door Rect from truth.txt records."""
    truth = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 8:
            raise ValueError(f"truth line {lineno}: expected 8 fields, got {len(parts)}")
        cat, idx = parts[0], int(parts[1])
        if parts[2:6] == ["-"] * 4:
            truth[(cat, idx)] = None
            continue
        x0, y0, x1, y1 = (int(v) for v in parts[2:6])
        truth[(cat, idx)] = Rect(x0, y0, x1, y1)
    return truth


def load_corpus(corpus_dir) -> list[CorpusItem]:
    """Read a corpus directory written by :func:`generate_corpus`."""
    root = Path(corpus_dir)
    truth_path = root / "truth.txt"
    truth = parse_truth(truth_path.read_text(encoding="utf-8")) if truth_path.exists() else {}
    items = []
    for cat_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        for path in sorted(cat_dir.glob("*.pgm")):
            idx = int(path.stem)
            img = read_pnm(path)
            if not isinstance(img, GrayImage):
                raise ValueError(f"{path}: expected a grayscale P5 image")
            items.append(CorpusItem(cat_dir.name, idx, img, truth.get((cat_dir.name, idx))))
    return items
