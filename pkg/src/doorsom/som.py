"""Kohonen self-organizing map trained in sequential winner-takes-most mode.

The lattice is a rectangular grid of weight vectors. Every training step
picks the best matching unit (BMU) by Euclidean distance and pulls the BMU
and its grid neighbors toward the input, scaled by a learning rate and a
Gaussian neighborhood whose spread shrinks over the run. Training has an
ordering phase (both rates decay exponentially) followed by a convergence
phase with constant small rate and spread.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Optional, Sequence

import numpy as np

DOOR, NON_DOOR, UNASSIGNED = 1, 0, -1


@dataclass(frozen=True)
class TrainSchedule:
    eta0_order: float = 0.12
    eta_conv: float = 0.001
    sigma0: float = 4.0
    tau2: float = 0.21
    tau_eta: float = 0.3
    h0: float = 1.0
    total_iters: int = 6272
    order_frac: float = 0.25
    sigma_min: float = 0.5
    sample_every: int = 64

    def __post_init__(self):
        if not 0 < self.eta_conv < self.eta0_order < 1:
            raise ValueError("need 0 < eta_conv < eta0_order < 1")
        if self.sigma0 <= 0 or self.tau2 <= 0 or self.tau_eta <= 0:
            raise ValueError("sigma0, tau2 and tau_eta must be > 0")
        if not 0 < self.order_frac < 1:
            raise ValueError("order_frac must lie in (0, 1)")
        if self.h0 <= 0 or self.eta0_order * self.h0 > 1:
            raise ValueError("need h0 > 0 and eta0_order * h0 <= 1 so updates stay convex")
        if self.total_iters < 2 or self.sample_every < 1 or self.sigma_min < 0:
            raise ValueError("total_iters >= 2, sample_every >= 1, sigma_min >= 0 required")

    @property
    def order_iters(self) -> float:
        return self.order_frac * self.total_iters

    @property
    def sigma_conv(self) -> float:
        # never larger than the spread at the end of ordering, so sigma(n) stays non-increasing
        return min(self.sigma_min, self.sigma0 * math.exp(-1.0 / self.tau2))

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def schedule_at(s: TrainSchedule, n: int) -> tuple[float, float]:
    """Learning rate and neighborhood spread at iteration ``n``.

    Ordering phase: both decay as exp(-p / tau) in the normalized phase
    progress p = n / (order_frac * N), the rate floored at ``eta_conv`` so
    it never dips below the convergence value. Convergence phase: constants.
    """
    if not 0 <= n < s.total_iters:
        raise ValueError(f"iteration {n} outside [0, {s.total_iters})")
    if n < s.order_iters:
        p = n / s.order_iters
        eta = max(s.eta_conv, s.eta0_order * math.exp(-p / s.tau_eta))
        return eta, s.sigma0 * math.exp(-p / s.tau2)
    return s.eta_conv, s.sigma_conv


class SomLattice:
    """R x C grid of D-dimensional weight vectors."""

    def __init__(self, weights: np.ndarray):
        w = np.array(weights, dtype=np.float64)
        if w.ndim != 3 or min(w.shape) < 1:
            raise ValueError(f"weights must have shape (rows, cols, dim), got {w.shape}")
        self.weights = w
        ii, jj = np.meshgrid(np.arange(w.shape[0]), np.arange(w.shape[1]), indexing="ij")
        self._grid = np.stack([ii, jj], axis=-1).astype(np.float64)

    @property
    def rows(self) -> int:
        return self.weights.shape[0]

    @property
    def cols(self) -> int:
        return self.weights.shape[1]

    @property
    def dim(self) -> int:
        return self.weights.shape[2]

    def copy(self) -> "SomLattice":
        return SomLattice(self.weights.copy())

    def grid_sq_dist(self, node: tuple[int, int]) -> np.ndarray:
        d = self._grid - np.asarray(node, dtype=np.float64)
        return d[..., 0] ** 2 + d[..., 1] ** 2

    def __eq__(self, other):
        if not isinstance(other, SomLattice):
            return NotImplemented
        return self.weights.shape == other.weights.shape and np.array_equal(self.weights, other.weights)

    __hash__ = None

    def __repr__(self):
        return f"SomLattice({self.rows}x{self.cols}, dim={self.dim})"


def init_lattice(rows: int, cols: int, dim: int, seed: int) -> SomLattice:
    """Uniform random weights in [0, 1) from a seeded PCG64 stream."""
    if rows < 1 or cols < 1 or dim < 1:
        raise ValueError(f"lattice dimensions must be >= 1, got {rows}x{cols}x{dim}")
    rng = np.random.Generator(np.random.PCG64(seed))
    return SomLattice(rng.random((rows, cols, dim)))


def _check_dim(l: SomLattice, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != l.dim:
        raise ValueError(f"input dimension {x.shape[-1]} does not match lattice dimension {l.dim}")
    return x


def node_distances(l: SomLattice, x) -> np.ndarray:
    """Euclidean distance from ``x`` to every node, shape (rows, cols).

    Squares are accumulated one component at a time so results are
    reproducible regardless of vector width.
    """
    x = _check_dim(l, x)
    acc = np.zeros((l.rows, l.cols))
    for j in range(l.dim):
        diff = x[j] - l.weights[:, :, j]
        acc += diff * diff
    return np.sqrt(acc)


def best_matching_unit(l: SomLattice, x) -> tuple[int, int]:
    """Node nearest to ``x``; ties go to the first node in row-major order."""
    k = int(np.argmin(node_distances(l, x)))
    return divmod(k, l.cols)


def batch_bmu(l: SomLattice, data) -> tuple[np.ndarray, np.ndarray]:
    """Flat BMU indices and distances for every row of ``data``."""
    data = _check_dim(l, np.atleast_2d(data))
    flat = l.weights.reshape(-1, l.dim)
    acc = np.zeros((data.shape[0], flat.shape[0]))
    for j in range(l.dim):
        diff = data[:, j : j + 1] - flat[None, :, j]
        acc += diff * diff
    idx = np.argmin(acc, axis=1)
    return idx, np.sqrt(acc[np.arange(len(idx)), idx])


def neighborhood(l: SomLattice, bmu: tuple[int, int], sigma: float, h0: float = 1.0) -> np.ndarray:
    """Gaussian neighborhood h0 * exp(-d^2 / sigma^2) over grid distance to the BMU.

    sigma == 0 is the limit case where only the BMU moves.
    """
    d2 = l.grid_sq_dist(bmu)
    if sigma <= 0:
        return np.where(d2 == 0, h0, 0.0)
    return h0 * np.exp(-d2 / (sigma * sigma))


def train_step(l: SomLattice, x, eta: float, sigma: float, h0: float = 1.0) -> tuple[int, int]:
    """One in-place update of every node toward ``x``; returns the BMU."""
    x = _check_dim(l, x)
    bmu = best_matching_unit(l, x)
    h = neighborhood(l, bmu, sigma, h0)
    l.weights += (eta * h)[:, :, None] * (x - l.weights)
    return bmu


def quantization_error(l: SomLattice, data) -> float:
    """Mean distance from each input to its BMU weight vector."""
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    if data.shape[0] == 0 or data.size == 0:
        raise ValueError("quantization_error needs at least one input vector")
    _, dist = batch_bmu(l, data)
    return float(dist.mean())


@dataclass
class ErrorCurve:
    iterations: list = field(default_factory=list)
    quantization: list = field(default_factory=list)
    misclassification: list = field(default_factory=list)  # empty without labels

    def format(self) -> str:
        rows = ["iteration quantization_error misclassification_rate"]
        for k, n in enumerate(self.iterations):
            mis = f"{self.misclassification[k]:.6f}" if self.misclassification else "-"
            rows.append(f"{n} {self.quantization[k]:.6f} {mis}")
        return "\n".join(rows) + "\n"


def train(l: SomLattice, data, s: TrainSchedule, seed: int,
          labels: Optional[Sequence[int]] = None) -> tuple[SomLattice, ErrorCurve]:
    """Sequential WTM training for ``s.total_iters`` steps on a copy of ``l``.

    Inputs are drawn uniformly at random with replacement. Every
    ``s.sample_every`` steps (and at the end) the quantization error over
    the whole set is logged; with ``labels`` the map is also calibrated
    and its misclassification rate on ``data`` logged.
    """
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    if data.size == 0 or data.shape[0] == 0:
        raise ValueError("training data is empty")
    _check_dim(l, data[0])
    lat = l.copy()
    rng = np.random.Generator(np.random.PCG64(seed))
    curve = ErrorCurve()
    label_arr = None
    if labels is not None:
        label_arr = np.asarray(labels, dtype=np.int64)
        if len(label_arr) != len(data) or len(set(label_arr.tolist())) < 2:
            label_arr = None

    def record(n):
        curve.iterations.append(n)
        curve.quantization.append(quantization_error(lat, data))
        if label_arr is not None:
            lm = calibrate_labels(lat, data, label_arr)
            pred = classify_batch(lat, lm, data)
            curve.misclassification.append(float(np.mean(pred != label_arr)))

    picks = rng.integers(0, len(data), size=s.total_iters)
    for n in range(s.total_iters):
        if n % s.sample_every == 0:
            record(n)
        eta, sigma = schedule_at(s, n)
        train_step(lat, data[picks[n]], eta, sigma, s.h0)
    record(s.total_iters)
    return lat, curve


def calibrate_labels(l: SomLattice, data, classes) -> np.ndarray:
    """Door/non-door label per node from labeled inputs.

    A node takes the majority class of the inputs it wins (ties -> door).
    Nodes that win nothing copy the nearest labeled node on the grid,
    ties resolved in row-major order.
    """
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    classes = np.asarray(classes, dtype=np.int64)
    if len(data) != len(classes) or len(data) == 0:
        raise ValueError("calibration needs one class per input vector")
    if set(np.unique(classes).tolist()) != {NON_DOOR, DOOR}:
        raise ValueError("calibration set must contain both door and non-door examples")
    idx, _ = batch_bmu(l, data)
    n_nodes = l.rows * l.cols
    doors = np.bincount(idx[classes == DOOR], minlength=n_nodes)
    others = np.bincount(idx[classes == NON_DOOR], minlength=n_nodes)
    flat = np.full(n_nodes, UNASSIGNED, dtype=np.int8)
    won = (doors + others) > 0
    flat[won & (doors >= others)] = DOOR
    flat[won & (doors < others)] = NON_DOOR
    labels = flat.reshape(l.rows, l.cols)
    assigned = np.argwhere(labels != UNASSIGNED)
    out = labels.copy()
    for i, j in np.argwhere(labels == UNASSIGNED):
        d2 = (assigned[:, 0] - i) ** 2 + (assigned[:, 1] - j) ** 2
        ai, aj = assigned[int(np.argmin(d2))]
        out[i, j] = labels[ai, aj]
    return out


def classify(l: SomLattice, label_map: np.ndarray, x) -> int:
    """Class of the BMU of ``x``."""
    i, j = best_matching_unit(l, x)
    return int(label_map[i, j])


def classify_batch(l: SomLattice, label_map: np.ndarray, data) -> np.ndarray:
    idx, _ = batch_bmu(l, data)
    return np.asarray(label_map).reshape(-1)[idx].astype(np.int64)
