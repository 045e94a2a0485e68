"""Edge-chain tracking and straight line fitting.

Edge pixels are linked into chains that end at free ends or junctions,
each chain is cut recursively at its point of maximum deviation until
every piece is straight within a tolerance, and nearly collinear pieces
with close endpoints are merged back together.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .canny import EdgeMap


@dataclass(frozen=True)
class LineConfig:
    dev_tol: float = 2.0
    angle_tol: float = 0.05
    gap_tol: float = 5.0
    min_len: float = 20.0
    lateral_tol: float = 1.0


@dataclass(frozen=True)
class EdgeChain:
    label: int
    points: tuple  # ((x, y), ...)

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True)
class LineSegment:
    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if self.x0 == self.x1 and self.y0 == self.y1:
            raise ValueError("degenerate segment with coincident endpoints")

    @property
    def p0(self) -> tuple[float, float]:
        return (self.x0, self.y0)

    @property
    def p1(self) -> tuple[float, float]:
        return (self.x1, self.y1)

    @property
    def length(self) -> float:
        return math.hypot(self.x1 - self.x0, self.y1 - self.y0)

    @property
    def angle(self) -> float:
        """Undirected orientation in [0, pi)."""
        a = math.atan2(self.y1 - self.y0, self.x1 - self.x0) % math.pi
        return 0.0 if a >= math.pi else a

    @property
    def top(self) -> float:
        return min(self.y0, self.y1)

    @property
    def bottom(self) -> float:
        return max(self.y0, self.y1)

    @property
    def mean_x(self) -> float:
        return 0.5 * (self.x0 + self.x1)

    @property
    def mean_y(self) -> float:
        return 0.5 * (self.y0 + self.y1)

    def x_at(self, y: float) -> float:
        """x on the supporting line at row y (mean x for horizontal segments)."""
        dy = self.y1 - self.y0
        if dy == 0:
            return self.mean_x
        return self.x0 + (y - self.y0) * (self.x1 - self.x0) / dy

    def y_at(self, x: float) -> float:
        dx = self.x1 - self.x0
        if dx == 0:
            return self.mean_y
        return self.y0 + (x - self.x0) * (self.y1 - self.y0) / dx

    def canonical(self) -> "LineSegment":
        """Same segment with endpoints ordered lexicographically."""
        if (self.x0, self.y0) <= (self.x1, self.y1):
            return self
        return LineSegment(self.x1, self.y1, self.x0, self.y0)

    def __str__(self):
        return f"{self.x0:g} {self.y0:g} {self.x1:g} {self.y1:g}"


# 8-neighborhood in circular order N, NE, E, SE, S, SW, W, NW as (dx, dy)
_RING = ((0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1))
# tracking preference: 4-neighbors before diagonals
_STEP_ORDER = ((0, -1), (1, 0), (0, 1), (-1, 0), (1, -1), (1, 1), (-1, 1), (-1, -1))


def crossing_numbers(edge: np.ndarray) -> np.ndarray:
    """Number of background-to-edge transitions around each pixel's 8-ring."""
    e = np.pad(edge.astype(np.int8), 1)
    h, w = edge.shape
    ring = [e[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w] for dx, dy in _RING]
    count = np.zeros((h, w), dtype=np.int8)
    for k in range(8):
        count += (ring[k - 1] == 0) & (ring[k] == 1)
    return count


def junction_mask(edges: EdgeMap) -> np.ndarray:
    """Edge pixels where three or more branches meet."""
    return edges.edge & (crossing_numbers(edges.edge) >= 3)


def track_edge_chains(edges: EdgeMap) -> list[EdgeChain]:
    """Partition the edge pixels into 8-connected chains.

    Chains start at free ends first, then at remaining ordinary pixels
    (closed loops), then at leftover junctions, each group in raster order.
    Tracking stops on reaching a junction: an unclaimed junction is taken
    as the chain's last point, a claimed one just ends the chain.
    """
    e = edges.edge
    h, w = e.shape
    cross = crossing_numbers(e)
    junction = e & (cross >= 3)
    label = np.zeros((h, w), dtype=np.int32)

    def is_edge(x, y):
        return 0 <= x < w and 0 <= y < h and e[y, x]

    def track(sx, sy, lab):
        pts = [(sx, sy)]
        label[sy, sx] = lab
        x, y = sx, sy
        while True:
            stop = False
            for dx, dy in _STEP_ORDER:
                nx, ny = x + dx, y + dy
                if not is_edge(nx, ny) or not junction[ny, nx] or label[ny, nx] == lab:
                    continue
                if label[ny, nx] == 0:
                    label[ny, nx] = lab
                    pts.append((nx, ny))
                stop = True
                break
            if stop:
                break
            nxt = None
            for dx, dy in _STEP_ORDER:
                nx, ny = x + dx, y + dy
                if is_edge(nx, ny) and label[ny, nx] == 0:
                    nxt = (nx, ny)
                    break
            if nxt is None:
                break
            x, y = nxt
            label[y, x] = lab
            pts.append(nxt)
        return pts

    ys, xs = np.nonzero(e)
    order = list(zip(ys.tolist(), xs.tolist()))
    ends = [(y, x) for y, x in order if cross[y, x] <= 1 and not junction[y, x]]
    plain = [(y, x) for y, x in order if not junction[y, x]]
    joints = [(y, x) for y, x in order if junction[y, x]]

    chains = []
    for group in (ends, plain, joints):
        for y, x in group:
            if label[y, x]:
                continue
            lab = len(chains) + 1
            chains.append(EdgeChain(lab, tuple(track(x, y, lab))))
    return chains


def point_line_distance(p, a, b) -> float:
    """Perpendicular distance from p to the infinite line through a and b."""
    dx, dy = b[0] - a[0], b[1] - a[1]
    norm = math.hypot(dx, dy)
    if norm == 0:
        return math.hypot(p[0] - a[0], p[1] - a[1])
    return abs(dx * (a[1] - p[1]) - dy * (a[0] - p[0])) / norm


def _deviations(pts: np.ndarray, i: int, j: int) -> np.ndarray:
    a, b = pts[i], pts[j]
    d = b - a
    norm = math.hypot(d[0], d[1])
    seg = pts[i : j + 1]
    if norm == 0:
        return np.hypot(seg[:, 0] - a[0], seg[:, 1] - a[1])
    return np.abs(d[0] * (a[1] - seg[:, 1]) - d[1] * (a[0] - seg[:, 0])) / norm


def split_indices(points: Sequence, dev_tol: float) -> list[tuple[int, int]]:
    """Index ranges (first, last) of the straight pieces of a point chain."""
    if dev_tol <= 0:
        raise ValueError(f"dev_tol must be > 0, got {dev_tol}")
    n = len(points)
    if n < 2:
        return []
    pts = np.asarray(points, dtype=np.float64)
    out = []
    stack = [(0, n - 1)]
    while stack:
        i, j = stack.pop()
        dev = _deviations(pts, i, j)
        k = int(np.argmax(dev))
        if j - i >= 2 and dev[k] > dev_tol:
            stack.append((i + k, j))
            stack.append((i, i + k))
        else:
            out.append((i, j))
    return out


def split_chain(chain, dev_tol: float) -> list[LineSegment]:
    """Recursively cut a chain at its max-deviation point into straight segments."""
    pts = chain.points if isinstance(chain, EdgeChain) else chain
    segs = []
    for i, j in split_indices(pts, dev_tol):
        (x0, y0), (x1, y1) = pts[i], pts[j]
        segs.append(LineSegment(float(x0), float(y0), float(x1), float(y1)))
    return segs


def angle_difference(a: float, b: float) -> float:
    d = abs(a - b) % math.pi
    return min(d, math.pi - d)


def _endpoint_gap(s: LineSegment, t: LineSegment) -> float:
    return min(
        math.hypot(p[0] - q[0], p[1] - q[1]) for p in (s.p0, s.p1) for q in (t.p0, t.p1)
    )


def _span(s: LineSegment, t: LineSegment) -> LineSegment:
    pts = [s.p0, s.p1, t.p0, t.p1]
    best, pair = -1.0, None
    for a in range(4):
        for b in range(a + 1, 4):
            d = math.hypot(pts[a][0] - pts[b][0], pts[a][1] - pts[b][1])
            if d > best:
                best, pair = d, (pts[a], pts[b])
    return LineSegment(pair[0][0], pair[0][1], pair[1][0], pair[1][1]).canonical()


def _sort_key(s: LineSegment):
    return (s.angle, s.x0, s.y0, s.x1, s.y1)


def lateral_offset(s: LineSegment, t: LineSegment) -> float:
    """Distance of the shorter segment's midpoint from the longer one's line.

    The midpoint is used rather than the endpoints because chains ending at
    junctions often bend by a pixel in their last few points.
    """
    short, long_ = (s, t) if s.length <= t.length else (t, s)
    return point_line_distance((short.mean_x, short.mean_y), long_.p0, long_.p1)


def mergeable(s: LineSegment, t: LineSegment, angle_tol: float, gap_tol: float,
              lateral_tol: float = 1.0) -> bool:
    return (
        angle_difference(s.angle, t.angle) <= angle_tol
        and _endpoint_gap(s, t) <= gap_tol
        and lateral_offset(s, t) <= lateral_tol
    )


def merge_segments(segs: Iterable[LineSegment], angle_tol: float, gap_tol: float,
                   lateral_tol: float = 1.0) -> list[LineSegment]:
    """Merge near-parallel segments with close endpoints until nothing changes.

    Besides the angle and endpoint-gap limits, the pair must be collinear
    within ``lateral_tol``; parallel edges a few pixels apart stay separate.

    Each pass scans pairs in (angle, endpoint) order, absorbing every
    partner of segment i into it before moving on; passes repeat on the
    re-sorted list until one makes no merge. The result depends only on the
    input set and comes back in the same order.
    """
    if angle_tol <= 0 or gap_tol <= 0 or lateral_tol <= 0:
        raise ValueError("merge tolerances must be > 0")
    cur = sorted((s.canonical() for s in segs), key=_sort_key)
    changed = True
    while changed:
        changed = False
        i = 0
        while i < len(cur):
            j = i + 1
            while j < len(cur):
                if mergeable(cur[i], cur[j], angle_tol, gap_tol, lateral_tol):
                    cur[i] = _span(cur[i], cur[j])
                    del cur[j]
                    changed = True
                    j = i + 1
                else:
                    j += 1
            i += 1
        cur.sort(key=_sort_key)
    return cur


def detect_lines(edges: EdgeMap, dev_tol: float = 2.0, angle_tol: float = 0.05,
                 gap_tol: float = 5.0, min_len: float = 20.0,
                 lateral_tol: float = 1.0) -> list[LineSegment]:
    """Edge map to straight segments: track, split, merge, drop short pieces."""
    pieces = []
    for chain in track_edge_chains(edges):
        pieces.extend(split_chain(chain, dev_tol))
    merged = merge_segments(pieces, angle_tol, gap_tol, lateral_tol)
    return [s for s in merged if s.length >= min_len]


def detect_lines_with_config(edges: EdgeMap, cfg: LineConfig) -> list[LineSegment]:
    return detect_lines(edges, cfg.dev_tol, cfg.angle_tol, cfg.gap_tol, cfg.min_len, cfg.lateral_tol)


def format_segments(segs: Iterable[LineSegment]) -> str:
    return "".join(f"{s}\n" for s in segs)
