"""Canny edge detection: smoothing, Sobel gradients, thinning, hysteresis."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .imgcore import GrayImage, gaussian_blur

# quantized gradient direction bins
DIR_0, DIR_45, DIR_90, DIR_135 = 0, 1, 2, 3

# (dy, dx) of the neighbor on the "minus" side for each bin; the plus side is the negation.
# The minus neighbor is the one with smaller y (smaller x for the horizontal bin).
_MINUS_OFFSET = {
    DIR_0: (0, -1),
    DIR_45: (-1, -1),
    DIR_90: (-1, 0),
    DIR_135: (-1, 1),
}


@dataclass(frozen=True)
class CannyConfig:
    sigma: float = 1.4
    lo: float = 0.1
    hi: float = 0.25
    relative: bool = True  # thresholds are fractions of the image's max gradient magnitude


@dataclass(frozen=True)
class GradientField:
    gx: np.ndarray
    gy: np.ndarray
    magnitude: np.ndarray
    direction: np.ndarray  # radians in (-pi, pi]

    @property
    def width(self) -> int:
        return self.magnitude.shape[1]

    @property
    def height(self) -> int:
        return self.magnitude.shape[0]


@dataclass(frozen=True, eq=False)
class EdgeMap:
    edge: np.ndarray  # bool, shape (height, width)

    @property
    def width(self) -> int:
        return self.edge.shape[1]

    @property
    def height(self) -> int:
        return self.edge.shape[0]

    def count(self) -> int:
        return int(self.edge.sum())


def _raster(img) -> np.ndarray:
    return np.asarray(img.data if isinstance(img, GrayImage) else img, dtype=np.float64)


def sobel_gradients(img) -> GradientField:
    """3x3 Sobel derivatives with replicated borders (x right, y down)."""
    a = _raster(img)
    if a.ndim != 2 or a.shape[0] < 3 or a.shape[1] < 3:
        raise ValueError(f"sobel_gradients needs an image of at least 3x3, got {a.shape}")
    p = np.pad(a, 1, mode="edge")
    h, w = a.shape
    tl, tc, tr = p[0:h, 0:w], p[0:h, 1 : w + 1], p[0:h, 2 : w + 2]
    ml, mr = p[1 : h + 1, 0:w], p[1 : h + 1, 2 : w + 2]
    bl, bc, br = p[2 : h + 2, 0:w], p[2 : h + 2, 1 : w + 1], p[2 : h + 2, 2 : w + 2]
    gx = (tr + 2.0 * mr + br) - (tl + 2.0 * ml + bl)
    gy = (bl + 2.0 * bc + br) - (tl + 2.0 * tc + tr)
    mag = np.sqrt(gx * gx + gy * gy)
    direction = np.arctan2(gy, gx)
    direction[direction == -np.pi] = np.pi
    return GradientField(gx, gy, mag, direction)


def quantize_direction(direction: np.ndarray) -> np.ndarray:
    """Fold gradient angles onto the bins {0, 45, 90, 135} degrees."""
    a = np.mod(np.degrees(direction), 180.0)
    q = np.full(a.shape, DIR_0, dtype=np.int8)
    q[(a >= 22.5) & (a < 67.5)] = DIR_45
    q[(a >= 67.5) & (a < 112.5)] = DIR_90
    q[(a >= 112.5) & (a < 157.5)] = DIR_135
    return q


def _shifted(a: np.ndarray, dy: int, dx: int) -> np.ndarray:
    """out[y, x] = a[y + dy, x + dx], zero outside."""
    h, w = a.shape
    p = np.pad(a, 1, mode="constant")
    return p[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]


def non_max_suppression(g: GradientField) -> np.ndarray:
    """Keep magnitudes that are local maxima along the quantized gradient direction.

    A pixel survives when it is >= both neighbors along its direction bin.
    Exact plateaus (an ideal step puts equal magnitude on the two pixels
    straddling it) are resolved toward the minus-side pixel so ridges stay
    one pixel thick; "equal" allows for a relative rounding slack.
    """
    mag = g.magnitude
    q = quantize_direction(g.direction)
    eps = 1e-9 * max(float(mag.max(initial=0.0)), 1.0)
    keep = np.zeros(mag.shape, dtype=bool)
    for b, (dy, dx) in _MINUS_OFFSET.items():
        minus = _shifted(mag, dy, dx)
        plus = _shifted(mag, -dy, -dx)
        ok = (mag > minus + eps) & (mag >= plus - eps)
        keep |= (q == b) & ok
    return np.where(keep, mag, 0.0)


def hysteresis(nms: np.ndarray, lo: float, hi: float) -> EdgeMap:
    """Two-threshold edge linking with 8-connectivity.

    Pixels >= hi seed edges; nonzero pixels >= lo join when connected to a seed.
    """
    if not 0 <= lo < hi:
        raise ValueError(f"need 0 <= lo < hi, got lo={lo}, hi={hi}")
    nms = np.asarray(nms, dtype=np.float64)
    weak = (nms >= lo) & (nms > 0)
    strong = nms >= hi
    labels, n = ndimage.label(weak, structure=np.ones((3, 3), dtype=bool))
    if n == 0:
        return EdgeMap(np.zeros(nms.shape, dtype=bool))
    seeded = np.zeros(n + 1, dtype=bool)
    seeded[np.unique(labels[strong])] = True
    seeded[0] = False
    return EdgeMap(seeded[labels])


def canny(img, sigma: float = 1.4, lo: float = 0.1, hi: float = 0.25, relative: bool = True) -> EdgeMap:
    """Full detector: blur, gradients, thinning, hysteresis.

    With ``relative`` (the default) ``lo`` and ``hi`` are fractions of the
    maximum gradient magnitude of this image.
    """
    smoothed = gaussian_blur(img, sigma)
    g = sobel_gradients(smoothed)
    thin = non_max_suppression(g)
    if relative:
        peak = float(g.magnitude.max(initial=0.0))
        if peak <= 0.0:
            return EdgeMap(np.zeros(thin.shape, dtype=bool))
        lo, hi = lo * peak, hi * peak
    return prune_thick(hysteresis(thin, lo, hi), g)


def canny_with_config(img, cfg: CannyConfig) -> EdgeMap:
    return canny(img, cfg.sigma, cfg.lo, cfg.hi, cfg.relative)


def _thick_pixels(e: np.ndarray, g: GradientField) -> np.ndarray:
    q = quantize_direction(g.direction)
    bad = np.zeros(e.shape, dtype=bool)
    for b, (dy, dx) in _MINUS_OFFSET.items():
        both = _shifted(e, dy, dx) & _shifted(e, -dy, -dx)
        bad |= (q == b) & e & both
    return bad


def thinness_violations(edges: EdgeMap, g: GradientField) -> int:
    """Count edge pixels whose two neighbors along the gradient bin are both edges."""
    return int(_thick_pixels(edges.edge, g).sum())


def prune_thick(edges: EdgeMap, g: GradientField) -> EdgeMap:
    """Drop edge pixels flanked by edges on both sides along their gradient bin.

    Suppression alone leaves such pixels where two ridges touch (T joints,
    corners). One simultaneous pass suffices: removing pixels never creates
    a new violation.
    """
    return EdgeMap(edges.edge & ~_thick_pixels(edges.edge, g))
