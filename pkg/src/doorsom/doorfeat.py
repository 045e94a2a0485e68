"""Door candidates and their features.

A candidate is a pair of long near-vertical lines (door posts) reaching
above the horizon row. Three cues are measured for each pair:

* post distance: horizontal separation of the posts at a common row;
* concavity: how far the door's bottom edge sits above the extended
  wall/floor line (doors are recessed into the wall);
* bottom gap: the intensity dip or peak of the thin strip under the door,
  as a contrast value plus a coarse vertical intensity profile.

Features are packed into a fixed-length vector and min-max normalized
with statistics learned on the training candidates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from .imgcore import GrayImage
from .linefit import LineSegment, angle_difference


@dataclass(frozen=True)
class FeatureConfig:
    vertical_tol_deg: float = 10.0
    min_post_frac: float = 0.25
    horizon_frac: float = 0.5
    w_min: float = 0.05
    w_max: float = 0.8
    n_columns: int = 16
    window: int = 6
    bins: int = 8
    horizontal_tol_deg: float = 10.0
    floor_region_frac: float = 0.4
    floor_group_tol: float = 2.0
    floor_min_frac: float = 0.2
    bottom_band: float = 15.0
    bottom_overlap: float = 0.5
    concavity_scale: float = 10.0
    concavity_clip: float = 2.0
    min_gap_contrast: float = 6.0
    min_step: float = 6.0
    post_join_gap: float = 12.0
    floor_cover: float = 0.4
    post_trace_miss: int = 3
    post_join_dx: float = 1.5

    @property
    def dim(self) -> int:
        return 3 + self.bins

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class FloorLine:
    """Wall/floor boundary as y = slope * x + intercept."""

    slope: float
    intercept: float

    def y_at(self, x: float) -> float:
        return self.slope * x + self.intercept


@dataclass(frozen=True)
class DoorCandidate:
    left_post: LineSegment
    right_post: LineSegment
    bottom_edge: Optional[LineSegment]
    floor_line: Optional[FloorLine]
    image_width: int
    image_height: int

    def floor_line_y_at(self, x: float) -> Optional[float]:
        return None if self.floor_line is None else self.floor_line.y_at(x)

    @property
    def scanline(self) -> float:
        """Row of the lower of the two post bottoms."""
        return max(self.left_post.bottom, self.right_post.bottom)

    def post_x(self) -> tuple[float, float]:
        y = self.scanline
        return self.left_post.x_at(y), self.right_post.x_at(y)

    def region(self) -> tuple[float, float, float, float]:
        """Door box (x_left, y_top, x_right, y_bottom), half-open, clipped to the image.

        Steps are located on their left/upper pixel, so the door's first
        column is one right of the left post and its last row is the one
        holding the bottom edge.
        """
        xl, xr = self.post_x()
        top = min(self.left_post.top, self.right_post.top)
        bottom = self.bottom_edge.mean_y if self.bottom_edge is not None else self.scanline
        clip_x = lambda v: float(min(max(v, 0.0), self.image_width))
        clip_y = lambda v: float(min(max(v, 0.0), self.image_height))
        return clip_x(xl + 1), clip_y(top), clip_x(xr + 1), clip_y(bottom + 1)


def is_vertical(s: LineSegment, tol_deg: float) -> bool:
    return abs(s.angle - math.pi / 2) <= math.radians(tol_deg)


def is_horizontal(s: LineSegment, tol_deg: float) -> bool:
    return angle_difference(s.angle, 0.0) <= math.radians(tol_deg)


def estimate_floor_line(segs: Sequence[LineSegment], width: int, height: int,
                        cfg: FeatureConfig = FeatureConfig(),
                        img: Optional[GrayImage] = None) -> Optional[FloorLine]:
    """Estimate the wall/floor boundary in the lower image.

    With ``img``, the intensity-based estimate of ``floor_from_image`` is
    tried first. Otherwise near-horizontal lines whose mean rows agree
    within ``floor_group_tol`` are grouped; the lowest group with enough
    total length (a door's recessed bottom edge sits above it) is fitted by
    least squares over its endpoints, and refitted on intensity steps when
    ``img`` is available. Without such a group, a horizontal line through
    the lowest candidate is used.
    """
    if img is not None:
        line = floor_from_image(img, cfg)
        if line is not None:
            return line
    y_min = (1.0 - cfg.floor_region_frac) * height
    hs = [s for s in segs if is_horizontal(s, cfg.horizontal_tol_deg) and s.mean_y >= y_min]
    if not hs:
        return None
    hs.sort(key=lambda s: (s.mean_y, s.x0))
    groups, cur = [], [hs[0]]
    for s in hs[1:]:
        if s.mean_y - cur[-1].mean_y <= cfg.floor_group_tol:
            cur.append(s)
        else:
            groups.append(cur)
            cur = [s]
    groups.append(cur)
    long_enough = [g for g in groups if sum(s.length for s in g) >= cfg.floor_min_frac * width]
    if not long_enough:
        return FloorLine(0.0, max(s.mean_y for s in hs))
    group = long_enough[-1]
    line = _fit_floor(group)
    # a recessed door bottom one or two rows above the floor can join the group; drop it
    kept = [s for s in group if abs(s.mean_y - line.y_at(s.mean_x)) <= 0.5]
    if kept and len(kept) < len(group):
        line = _fit_floor(kept)
        group = kept
    if img is not None:
        line = refine_floor_line(line, group, img, cfg)
    return line


def _step_track(a: np.ndarray, line, spans, min_step: float) -> Optional[tuple[float, float]]:
    """Fit pos = slope * t + intercept to the strongest steps across a line.

    ``a`` is indexed [t, pos]; for each t in ``spans`` (pairs of inclusive
    bounds) the step |a[t, p+1] - a[t, p]| is maximized over p within two
    pixels of ``line(t)`` and reported on p. Least-median fit, one
    rejection round, then least squares. None when fewer than 10 steps
    reach ``min_step``.
    """
    T, P = a.shape
    d = np.abs(np.diff(a, axis=1))
    ts, ps = [], []
    for lo, hi in spans:
        for t in range(max(lo, 0), min(hi, T - 1) + 1):
            p0 = int(round(line(t)))
            cand = np.arange(max(p0 - 2, 0), min(p0 + 2, P - 2) + 1)
            if cand.size == 0:
                continue
            k = int(np.argmax(d[t, cand]))
            if d[t, cand[k]] >= min_step:
                ts.append(t)
                ps.append(cand[k])
    if len(ts) < 10:
        return None
    ts, ps = np.asarray(ts, dtype=np.float64), np.asarray(ps, dtype=np.float64)
    slope, intercept = _least_median_line(ts, ps)
    ok = np.abs(slope * ts + intercept - ps) <= 1.0
    if ok.sum() >= 10 and np.ptp(ts[ok]) > 0:
        slope, intercept = np.polyfit(ts[ok], ps[ok], 1)
    return float(slope), float(intercept)


def refine_floor_line(line: FloorLine, group: Sequence[LineSegment], img: GrayImage,
                      cfg: FeatureConfig = FeatureConfig()) -> FloorLine:
    """Refit a floor line to the strongest vertical intensity step near it.

    Columns covered by ``group`` (minus a few pixels at segment ends) each
    give the row r maximizing |I(r+1) - I(r)| within two rows of ``line``,
    so the step is reported on its upper row. Returns ``line`` when too
    few columns qualify.
    """
    a = ndimage.uniform_filter1d(img.data.astype(np.float64), 5, axis=1, mode="nearest")
    spans = [(int(math.ceil(min(g.x0, g.x1))) + 3, int(math.floor(max(g.x0, g.x1))) - 3) for g in group]
    fit = _step_track(a.T, line.y_at, spans, cfg.min_step)
    return line if fit is None else FloorLine(*fit)


def floor_from_image(img: GrayImage, cfg: FeatureConfig = FeatureConfig()) -> Optional[FloorLine]:
    """Floor line from intensities: the lowest row step running across most of the width.

    Door bottoms, gaps, window sills and shadow borders all lie above the
    floor and span only part of the image, so the lowest row of the lower
    image where at least ``floor_cover`` of the columns step by
    ``min_step`` seeds a per-column refit.
    """
    a = ndimage.uniform_filter1d(img.data.astype(np.float64), 5, axis=1, mode="nearest")
    H, W = a.shape
    y0 = int((1.0 - cfg.floor_region_frac) * H)
    d = np.abs(np.diff(a[y0:], axis=0))
    cover = (d >= cfg.min_step).mean(axis=1)
    rows = np.nonzero(cover >= cfg.floor_cover)[0]
    if rows.size == 0:
        return None
    r = y0 + int(rows[-1])
    fit = _step_track(a.T, lambda x: float(r), [(0, W - 1)], cfg.min_step)
    return FloorLine(0.0, float(r)) if fit is None else FloorLine(*fit)


def refine_post(s: LineSegment, img: GrayImage, cfg: FeatureConfig = FeatureConfig()) -> LineSegment:
    """Refit a near-vertical line to the strongest horizontal intensity step along it.

    Chain ends bending into corner junctions tilt endpoint-defined posts by
    a pixel or two; rows away from the ends pin the true column. The step
    is reported on its left pixel. The row extent is kept.
    """
    a = ndimage.uniform_filter1d(img.data.astype(np.float64), 5, axis=0, mode="nearest")
    top, bottom = s.top, s.bottom
    fit = _step_track(a, s.x_at, [(int(math.ceil(top)) + 3, int(math.floor(bottom)) - 3)], cfg.min_step)
    if fit is None:
        return s
    m, b = fit
    return LineSegment(m * top + b, top, m * bottom + b, bottom)


def _least_median_line(xs: np.ndarray, ys: np.ndarray, n_probe: int = 40) -> tuple[float, float]:
    """Line through two sample points with the smallest median absolute residual.

    Tolerates up to half the points being off the line, e.g. columns where
    a merged segment runs along a recessed door bottom instead of the floor.
    """
    idx = np.unique(np.linspace(0, len(xs) - 1, min(n_probe, len(xs))).astype(int))
    i, j = np.triu_indices(len(idx), k=1)
    a, b = idx[i], idx[j]
    keep = xs[a] != xs[b]
    a, b = a[keep], b[keep]
    slopes = (ys[b] - ys[a]) / (xs[b] - xs[a])
    icepts = ys[a] - slopes * xs[a]
    res = np.abs(slopes[:, None] * xs[None, :] + icepts[:, None] - ys[None, :])
    k = int(np.argmin(np.median(res, axis=1)))
    return float(slopes[k]), float(icepts[k])


def _fit_floor(group: Sequence[LineSegment]) -> FloorLine:
    xs = np.array([p[0] for s in group for p in (s.p0, s.p1)], dtype=np.float64)
    ys = np.array([p[1] for s in group for p in (s.p0, s.p1)], dtype=np.float64)
    w = np.repeat([s.length for s in group], 2)
    if np.ptp(xs) < 1.0:
        return FloorLine(0.0, float(np.average(ys, weights=w)))
    slope, intercept = np.polyfit(xs, ys, 1, w=np.sqrt(w))
    return FloorLine(float(slope), float(intercept))


def _clip_at_floor(s: LineSegment, floor: Optional[FloorLine]) -> Optional[LineSegment]:
    """Drop the part of a vertical line below the floor line (floor reflections)."""
    if floor is None:
        return s
    (xa, ya), (xb, yb) = sorted((s.p0, s.p1), key=lambda p: p[1])  # a = top
    y_cut = floor.y_at(s.x_at(yb))
    if yb <= y_cut:
        return s
    if ya >= y_cut:
        return None
    xc = s.x_at(y_cut)
    if (xa, ya) == (xc, y_cut):
        return None
    return LineSegment(xa, ya, xc, y_cut)


def _overlap(a0, a1, b0, b1) -> float:
    return max(0.0, min(a1, b1) - max(a0, b0))


def _band_bottom(y_ref: float, xl: float, xr: float, floor: Optional[FloorLine]) -> float:
    # posts cut short (by a shadow border, say) still get their door bottom searched down to the floor
    if floor is None:
        return y_ref + 3.0
    return max(y_ref, floor.y_at(0.5 * (xl + xr))) + 3.0


def find_bottom_edge(segs: Sequence[LineSegment], xl: float, xr: float, y_ref: float,
                     cfg: FeatureConfig = FeatureConfig(),
                     floor: Optional[FloorLine] = None,
                     raised_only: bool = False) -> Optional[LineSegment]:
    """Lowest near-horizontal line spanning most of [xl, xr] in the door-bottom band.

    The band starts ``bottom_band`` rows above ``y_ref`` (the post bottoms)
    and ends 3 rows below ``y_ref`` or below the floor line, whichever is lower.
    With ``raised_only`` lines within a row of the floor line are skipped.
    """
    span = xr - xl
    if span <= 0:
        return None
    y_lo, y_hi = y_ref - cfg.bottom_band, _band_bottom(y_ref, xl, xr, floor)
    best = None
    for s in segs:
        if not is_horizontal(s, cfg.horizontal_tol_deg):
            continue
        if not y_lo <= s.mean_y <= y_hi:
            continue
        lo, hi = min(s.x0, s.x1), max(s.x0, s.x1)
        if _overlap(lo, hi, xl, xr) < cfg.bottom_overlap * span:
            continue
        if raised_only and floor is not None and floor.y_at(s.mean_x) - s.mean_y < 1.0:
            continue
        if best is None or (s.mean_y, -s.length) > (best.mean_y, -best.length):
            best = s
    return best


def bottom_edge_from_gap(img: GrayImage, xl: float, xr: float, y_ref: float,
                         cfg: FeatureConfig = FeatureConfig(),
                         floor: Optional[FloorLine] = None) -> Optional[LineSegment]:
    """Horizontal bottom edge placed on a gap strip found in the intensity profile.

    Thin gaps under weakly contrasting doors may leave no edge line at all;
    the band searched is the same as for ``find_bottom_edge``, widened by the
    profile window.
    """
    if xr - xl < 2:
        return None
    a = img.data.astype(np.float64)
    H, W = a.shape
    top = int(max(math.floor(y_ref - cfg.bottom_band) - cfg.window, 0))
    bot = int(min(math.ceil(_band_bottom(y_ref, xl, xr, floor)) + cfg.window, H - 1))
    if bot - top < 2:
        return None
    cols = np.clip(np.rint(_sample_columns(xl, xr, cfg.n_columns)).astype(int), 0, W - 1)
    profile = a[top : bot + 1][:, cols].mean(axis=1)
    run = gap_rows(profile, cfg.min_gap_contrast)
    if run is None:
        return None
    r = float(top + run[1])
    return LineSegment(float(xl), r, float(xr), r)


def extend_post(s: LineSegment, img: GrayImage, floor: Optional[FloorLine],
                cfg: FeatureConfig = FeatureConfig()) -> LineSegment:
    """Follow a near-vertical line downward while the image still steps across it.

    Under a shadow a post's contrast can drop below the relative edge
    thresholds although it is plainly visible. Tracing stops after
    ``post_trace_miss`` rows without a step of ``min_step`` within a pixel
    of the line, or at the floor line.
    """
    a = ndimage.uniform_filter1d(img.data.astype(np.float64), 5, axis=0, mode="nearest")
    H, W = a.shape
    d = np.abs(np.diff(a, axis=1))
    last, miss = int(math.floor(s.bottom)), 0
    y = last + 1
    while y < H and miss < cfg.post_trace_miss:
        x = s.x_at(y)
        if floor is not None and y > floor.y_at(x):
            break
        x0 = int(round(x))
        cand = np.arange(max(x0 - 1, 0), min(x0 + 1, W - 2) + 1)
        if cand.size and d[y, cand].max() >= cfg.min_step:
            last, miss = y, 0
        else:
            miss += 1
        y += 1
    if last <= s.bottom:
        return s
    return refine_post(LineSegment(s.x_at(s.top), s.top, s.x_at(last), float(last)), img, cfg)


def join_post_pieces(pieces: Sequence[LineSegment], img: GrayImage,
                     cfg: FeatureConfig = FeatureConfig()) -> list[LineSegment]:
    """Rejoin vertical lines cut where a horizontal edge (a shadow border) crosses them.

    Two pieces join when the vertical gap between them is at most
    ``post_join_gap`` and they agree in x within ``post_join_dx`` at the
    middle of the gap. Repeats until no pair joins.
    """
    cur = sorted(pieces, key=lambda s: (s.top, s.mean_x))
    changed = True
    while changed:
        changed = False
        for i in range(len(cur)):
            for j in range(len(cur)):
                a, b = cur[i], cur[j]
                if i == j or not 0 <= b.top - a.bottom <= cfg.post_join_gap:
                    continue
                y = 0.5 * (a.bottom + b.top)
                if abs(a.x_at(y) - b.x_at(y)) > cfg.post_join_dx:
                    continue
                joined = LineSegment(a.x_at(a.top), a.top, b.x_at(b.bottom), b.bottom)
                cur = [c for k, c in enumerate(cur) if k not in (i, j)]
                cur.append(refine_post(joined, img, cfg))
                cur.sort(key=lambda s: (s.top, s.mean_x))
                changed = True
                break
            if changed:
                break
    return cur


def find_post_candidates(segs: Sequence[LineSegment], img: GrayImage,
                         cfg: FeatureConfig = FeatureConfig()) -> list[DoorCandidate]:
    """Pair long near-vertical lines that reach above the horizon into door candidates."""
    W, H = img.width, img.height
    floor = estimate_floor_line(segs, W, H, cfg, img)
    horizon_y = cfg.horizon_frac * H
    pieces = []
    for s in segs:
        if not is_vertical(s, cfg.vertical_tol_deg):
            continue
        c = _clip_at_floor(s, floor)
        if c is not None and is_vertical(c, cfg.vertical_tol_deg):
            pieces.append(extend_post(refine_post(c, img, cfg), img, floor, cfg))
    posts = [c for c in join_post_pieces(pieces, img, cfg)
             if c.length >= cfg.min_post_frac * H and c.top < horizon_y]
    posts.sort(key=lambda s: (s.mean_x, s.top))
    out = []
    for i in range(len(posts)):
        for j in range(i + 1, len(posts)):
            a, b = posts[i], posts[j]
            y = max(a.bottom, b.bottom)
            xa, xb = a.x_at(y), b.x_at(y)
            if xa > xb:
                a, b, xa, xb = b, a, xb, xa
            if not cfg.w_min * W <= xb - xa <= cfg.w_max * W:
                continue
            # a raised line beats a gap seen only in intensities, which beats the floor itself
            bottom = (find_bottom_edge(segs, xa, xb, y, cfg, floor, raised_only=True)
                      or bottom_edge_from_gap(img, xa, xb, y, cfg, floor)
                      or find_bottom_edge(segs, xa, xb, y, cfg, floor))
            out.append(DoorCandidate(a, b, bottom, floor, W, H))
    return out


def post_distance(c: DoorCandidate) -> float:
    """Horizontal separation of the posts on the row of the lower post bottom."""
    xl, xr = c.post_x()
    return abs(xr - xl)


def _sample_columns(x0: float, x1: float, m: int) -> np.ndarray:
    inset = 0.1 * (x1 - x0)
    return np.linspace(x0 + inset, x1 - inset, m)


def concavity(c: DoorCandidate, img: Optional[GrayImage] = None,
              cfg: FeatureConfig = FeatureConfig()) -> Optional[float]:
    """Mean vertical distance between the door's bottom edge and the floor line.

    With an image, a detected gap strip pins the door bottom to the gap's
    lowest row; blur lets the stronger of the two gap boundaries mask the
    other, so the fitted line alone can sit on either side of the strip.
    ``None`` when the bottom edge or the floor line is missing.
    """
    if c.bottom_edge is None or c.floor_line is None:
        return None
    be = c.bottom_edge
    xl, xr = c.post_x()
    lo = max(min(be.x0, be.x1), xl)
    hi = min(max(be.x0, be.x1), xr)
    if hi <= lo:
        lo, hi = min(be.x0, be.x1), max(be.x0, be.x1)
    xs = _sample_columns(lo, hi, cfg.n_columns)
    if img is not None:
        rows = gap_bottom_rows(c, img, cfg, xs)
        found = ~np.isnan(rows)
        if found.sum() * 2 >= len(xs):
            return float(np.mean([abs(r - c.floor_line.y_at(x)) for x, r in zip(xs[found], rows[found])]))
    ys = np.array([be.y_at(x) for x in xs])
    return float(np.mean([abs(y - c.floor_line.y_at(x)) for x, y in zip(xs, ys)]))


def gap_bottom_rows(c: DoorCandidate, img: GrayImage, cfg: FeatureConfig = FeatureConfig(),
                    xs: Optional[np.ndarray] = None) -> np.ndarray:
    """Per-column row of the lowest gap pixel under the door, NaN where no gap shows.

    Uses the gap polarity of the mean bottom profile. The lowest gap row
    and the wall/floor step (reported on its upper row) share a convention,
    so their difference is the recess depth.
    """
    if xs is None:
        xl, xr = c.post_x()
        xs = _sample_columns(xl, xr, cfg.n_columns)
    out = np.full(len(xs), np.nan)
    gap = bottom_gap_profile(c, img, cfg)
    if gap is None or gap.polarity == 0 or c.bottom_edge is None:
        return out
    a = img.data.astype(np.float64)
    H, W = a.shape
    offs = np.arange(-cfg.window, cfg.window + 1)
    for i, x in enumerate(xs):
        col = int(np.clip(round(x), 0, W - 1))
        r0 = int(round(c.bottom_edge.y_at(x)))
        rows = np.clip(r0 + offs, 0, H - 1)
        dark, bright = _excursions(a[rows, col])
        exc = dark if gap.polarity < 0 else bright
        run = _run(exc, cfg.min_gap_contrast)
        if run is not None:
            out[i] = rows[run[1]]
    return out


@dataclass(frozen=True)
class GapProfile:
    contrast: float
    polarity: int  # -1 darker than both sides, +1 brighter, 0 none
    bins: np.ndarray
    profile: np.ndarray


def _excursions(p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    above, below = p[0], p[-1]
    return np.minimum(above - p, below - p), np.minimum(p - above, p - below)


def gap_contrast(profile: np.ndarray) -> tuple[float, int]:
    """Strength of a dip or peak against both ends of a vertical profile.

    For each row the excursion below (or above) both end rows is the
    smaller of the two differences; the contrast is the largest such
    excursion. A plain step between the two ends scores zero.
    """
    dark, bright = _excursions(np.asarray(profile, dtype=np.float64))
    d, b = float(dark.max()), float(bright.max())
    if max(d, b) <= 0.0:
        return 0.0, 0
    return (d, -1) if d >= b else (b, 1)


def _run(exc: np.ndarray, min_contrast: float) -> Optional[tuple[int, int]]:
    k = int(np.argmax(exc))
    contrast = float(exc[k])
    if contrast <= 0.0 or contrast < min_contrast:
        return None
    first = last = k
    while first > 0 and exc[first - 1] >= 0.5 * contrast:
        first -= 1
    while last < len(exc) - 1 and exc[last + 1] >= 0.5 * contrast:
        last += 1
    return first, last


def gap_rows(profile: np.ndarray, min_contrast: float) -> Optional[tuple[int, int]]:
    """First and last index of the dip/peak run holding the extreme row.

    Rows belong to the run while their excursion is at least half the
    contrast. None when the contrast is below ``min_contrast``.
    """
    p = np.asarray(profile, dtype=np.float64)
    _, polarity = gap_contrast(p)
    if polarity == 0:
        return None
    dark, bright = _excursions(p)
    return _run(dark if polarity < 0 else bright, min_contrast)


def resample_profile(profile: np.ndarray, k: int) -> np.ndarray:
    """Linear resampling to ``k`` values, then min-max scaling to [0, 1]."""
    p = np.asarray(profile, dtype=np.float64)
    out = np.interp(np.linspace(0, len(p) - 1, k), np.arange(len(p)), p)
    span = out.max() - out.min()
    if span <= 0:
        return np.zeros(k)
    return (out - out.min()) / span


def bottom_gap_profile(c: DoorCandidate, img: GrayImage,
                       cfg: FeatureConfig = FeatureConfig()) -> Optional[GapProfile]:
    """Mean intensity profile across the bottom edge, sampled between the posts.

    ``None`` without a bottom edge or when the clamped window has at most one row.
    """
    if c.bottom_edge is None:
        return None
    a = img.data.astype(np.float64)
    H, W = a.shape
    xl, xr = c.post_x()
    xs = _sample_columns(xl, xr, cfg.n_columns)
    offs = np.arange(-cfg.window, cfg.window + 1)
    cols = np.clip(np.rint(xs).astype(int), 0, W - 1)
    rows0 = np.rint([c.bottom_edge.y_at(x) for x in xs]).astype(int)
    rows = np.clip(rows0[None, :] + offs[:, None], 0, H - 1)
    if len(np.unique(rows)) <= 1:
        return None
    profile = a[rows, cols[None, :]].mean(axis=1)
    contrast, polarity = gap_contrast(profile)
    return GapProfile(contrast, polarity, resample_profile(profile, cfg.bins), profile)


@dataclass(frozen=True)
class CandidateFeatures:
    candidate: DoorCandidate
    raw: np.ndarray  # NaN marks an absent feature
    post_distance: float
    concavity: Optional[float]
    gap: Optional[GapProfile]

    @property
    def concavity_absent(self) -> bool:
        return self.concavity is None

    @property
    def gap_absent(self) -> bool:
        return self.gap is None


def raw_features(c: DoorCandidate, img: GrayImage, cfg: FeatureConfig = FeatureConfig()) -> CandidateFeatures:
    """Pre-normalization vector [distance/W, concavity/scale, contrast/255, bins...]."""
    vec = np.full(cfg.dim, np.nan)
    dist = post_distance(c)
    vec[0] = dist / img.width
    conc = concavity(c, img, cfg)
    if conc is not None:
        vec[1] = min(max(conc / cfg.concavity_scale, 0.0), cfg.concavity_clip)
    gap = bottom_gap_profile(c, img, cfg)
    if gap is not None:
        vec[2] = gap.contrast / 255.0
        vec[3:] = gap.bins
    return CandidateFeatures(c, vec, dist, conc, gap)


@dataclass(frozen=True)
class NormalizationStats:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=np.float64)
        hi = np.asarray(self.hi, dtype=np.float64)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("normalization bounds must be 1-D arrays of equal length")
        if np.any(lo > hi):
            raise ValueError("normalization needs min <= max per feature")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return len(self.lo)

    @classmethod
    def fit(cls, raw_vectors) -> "NormalizationStats":
        """Per-feature min and max, ignoring absent (NaN) entries."""
        r = np.atleast_2d(np.asarray(raw_vectors, dtype=np.float64))
        lo = np.zeros(r.shape[1])
        hi = np.zeros(r.shape[1])
        for j in range(r.shape[1]):
            col = r[:, j][~np.isnan(r[:, j])]
            if col.size:
                lo[j], hi[j] = col.min(), col.max()
        return cls(lo, hi)

    def apply(self, raw) -> np.ndarray:
        """Min-max scale and clamp to [0, 1]; absent features become 0."""
        r = np.asarray(raw, dtype=np.float64)
        span = self.hi - self.lo
        safe = np.where(span > 0, span, 1.0)
        out = np.where(span > 0, (r - self.lo) / safe, 0.0)
        out = np.clip(out, 0.0, 1.0)
        return np.where(np.isnan(r), 0.0, out)

    def __eq__(self, other):
        if not isinstance(other, NormalizationStats):
            return NotImplemented
        return np.array_equal(self.lo, other.lo) and np.array_equal(self.hi, other.hi)

    __hash__ = None


def build_feature_vector(c: DoorCandidate, img: GrayImage, stats: Optional[NormalizationStats] = None,
                         cfg: FeatureConfig = FeatureConfig()) -> np.ndarray:
    """Feature vector for one candidate; raw when ``stats`` is None, else normalized."""
    raw = raw_features(c, img, cfg).raw
    return raw if stats is None else stats.apply(raw)


def format_candidate(f: CandidateFeatures) -> str:
    c = f.candidate
    lp, rp = c.left_post, c.right_post
    conc = "-" if f.concavity is None else f"{f.concavity:.2f}"
    contrast = "-" if f.gap is None else f"{f.gap.contrast:.2f}"
    return (f"left({lp.x0:g},{lp.y0:g},{lp.x1:g},{lp.y1:g}) right({rp.x0:g},{rp.y0:g},{rp.x1:g},{rp.y1:g}) "
            f"{f.post_distance:.2f} {conc} {contrast}")
