"""Discretized transition curves: construction, resampling, CSV round-trip."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import DegenerateEndpoints


@dataclass
class Curve:
    """A path of M states; rows 0 and M-1 are the pinned endpoints."""

    points: np.ndarray  # (M, dim)

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        if self.points.shape[0] < 2:
            raise ValueError("a curve needs at least two points")

    @property
    def num_points(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def alphas(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.num_points)

    @property
    def start(self) -> np.ndarray:
        return self.points[0]

    @property
    def end(self) -> np.ndarray:
        return self.points[-1]

    def copy(self) -> "Curve":
        return Curve(self.points.copy())

    def chord_lengths(self) -> np.ndarray:
        return np.linalg.norm(np.diff(self.points, axis=0), axis=1)

    def length(self) -> float:
        return float(np.sum(self.chord_lengths()))


def init_curve(x1, x2, num_points: int) -> Curve:
    """Straight segment from x1 to x2 sampled at equidistant points."""
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    if num_points < 3:
        raise ValueError("num_points must be at least 3")
    if x1.shape != x2.shape:
        raise ValueError("endpoint dimensions differ")
    if np.array_equal(x1, x2):
        raise DegenerateEndpoints("curve endpoints coincide")
    weights = np.linspace(0.0, 1.0, num_points)[:, None]
    return Curve((1.0 - weights) * x1[None, :] + weights * x2[None, :])


def _resample(points: np.ndarray, interpolation: str) -> np.ndarray:
    """One pass of resampling at equal increments of cumulative chord length."""
    m = points.shape[0]
    gaps = np.linalg.norm(np.diff(points, axis=0), axis=1)
    total = float(np.sum(gaps))
    if total == 0.0:
        return points.copy()
    s = np.concatenate(([0.0], np.cumsum(gaps)))
    targets = np.linspace(0.0, total, m)

    if interpolation == "linear":
        idx = np.clip(np.searchsorted(s, targets, side="right"), 1, m - 1)
        seg = s[idx] - s[idx - 1]
        w = np.where(seg > 0.0, (targets - s[idx - 1]) / np.where(seg > 0.0, seg, 1.0), 0.0)
        out = points[idx - 1] + w[:, None] * (points[idx] - points[idx - 1])
    elif interpolation == "cubic":
        keep = np.concatenate(([True], np.diff(s) > 0.0))
        if np.count_nonzero(keep) < 2:
            return points.copy()
        spline = CubicSpline(s[keep], points[keep], axis=0)
        out = spline(targets)
    else:
        raise ValueError(f"unknown interpolation {interpolation!r}")

    out[0] = points[0]
    out[-1] = points[-1]
    return out


def gap_deviation(points: np.ndarray) -> float:
    """Max relative deviation of consecutive chord gaps from their mean."""
    gaps = np.linalg.norm(np.diff(points, axis=0), axis=1)
    mean = float(np.mean(gaps))
    if mean == 0.0:
        return 0.0
    return float(np.max(np.abs(gaps - mean)) / mean)


def redistribute(curve: Curve, interpolation: str = "linear", tol: float = 1e-6, max_passes: int = 30) -> Curve:
    """Move points along the curve until chord gaps are equal to within tol.

    Equal spacing in cumulative chord length does not make the chords
    themselves equal on a curved path, so the resampling pass is iterated;
    it contracts fast for resolved curves. At least one pass always runs,
    which keeps the step-plus-redistribution map free of threshold jumps.
    Endpoints never move.
    """
    points = _resample(curve.points, interpolation)
    for _ in range(max_passes - 1):
        if gap_deviation(points) <= tol:
            break
        points = _resample(points, interpolation)
    return Curve(points)


def write_curve_csv(path, curve: Curve) -> None:
    """Write ``alpha, x_1..x_N`` rows with full round-trip precision."""
    header = "alpha," + ",".join(f"x_{i + 1}" for i in range(curve.dim))
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for alpha, row in zip(curve.alphas, curve.points):
            fields = [f"{alpha:.17g}"] + [f"{v:.17g}" for v in row]
            fh.write(",".join(fields) + "\n")


def read_curve_csv(path) -> Curve:
    """Read a curve written by :func:`write_curve_csv`."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if not header or header[0] != "alpha":
            raise ValueError(f"{path}: not a curve file")
        rows = [[float(v) for v in line.strip().split(",")] for line in fh if line.strip()]
    data = np.asarray(rows, dtype=float)
    return Curve(data[:, 1:])
