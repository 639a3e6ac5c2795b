"""Empirical distributions, histograms, kernel density grids and TV distance.

Inference always compares empirical point clouds; the KDE grids here only feed
the density-map reports.
"""

import string
import warnings
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_points
from .exceptions import EmptyInput, InvalidSpec
from .ot import DiscreteDistribution

__all__ = [
    "HistogramSpec",
    "DensityGrid",
    "DegenerateSpreadWarning",
    "empirical",
    "histogram",
    "kde",
    "scott_bandwidth",
    "kde_spec",
    "tv_distance",
    "write_grid_csv",
    "read_grid_csv",
]


class DegenerateSpreadWarning(UserWarning):
    """All points coincide along some axis; KDE used the cell size there."""


@dataclass(frozen=True)
class HistogramSpec:
    """Regular grid: ``counts[k]`` cells of width ``cell_size[k]`` from ``origin[k]``."""

    origin: tuple
    cell_size: tuple
    counts: tuple

    def __post_init__(self):
        origin = tuple(float(v) for v in np.atleast_1d(self.origin))
        cell = tuple(float(v) for v in np.atleast_1d(self.cell_size))
        counts = tuple(int(v) for v in np.atleast_1d(self.counts))
        if not (len(origin) == len(cell) == len(counts)) or not origin:
            raise InvalidSpec("origin, cell_size and counts must share one length")
        if any(not np.isfinite(v) for v in origin):
            raise InvalidSpec("origin must be finite")
        if any(not (np.isfinite(c) and c > 0) for c in cell):
            raise InvalidSpec(f"cell_size must be positive, got {cell}")
        if any(c < 1 for c in counts):
            raise InvalidSpec(f"counts must be >= 1 per axis, got {counts}")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "cell_size", cell)
        object.__setattr__(self, "counts", counts)

    @property
    def dim(self):
        return len(self.counts)

    @classmethod
    def covering(cls, lower, upper, counts):
        """Spec whose cells tile the box ``[lower, upper]`` exactly."""
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        counts = np.atleast_1d(np.asarray(counts, dtype=int))
        if counts.size == 1 and lower.size > 1:
            counts = np.repeat(counts, lower.size)
        return cls(tuple(lower), tuple((upper - lower) / counts), tuple(counts))

    def cell_centers(self, axis):
        o, c, k = self.origin[axis], self.cell_size[axis], self.counts[axis]
        return o + (np.arange(k) + 0.5) * c

    def cell_index(self, points):
        """Per-axis cell indices, clamped into the grid."""
        pts = check_points(points)
        if pts.shape[1] != self.dim:
            raise InvalidSpec(
                f"spec has dimension {self.dim}, points have {pts.shape[1]}")
        idx = np.floor((pts - np.asarray(self.origin)) / np.asarray(self.cell_size))
        return np.clip(idx, 0, np.asarray(self.counts) - 1).astype(np.int64)


@dataclass(frozen=True, eq=False)
class DensityGrid:
    """Probability density sampled at cell centers of a regular grid (1/m^d)."""

    origin: tuple
    cell_size: tuple
    values: np.ndarray
    bandwidth: tuple = ()
    degenerate_axes: tuple = field(default=())

    def integral(self):
        return float(self.values.sum() * np.prod(self.cell_size))


def empirical(points):
    """Equal-mass atoms at the given points; duplicates are kept."""
    pts = check_points(points)
    return DiscreteDistribution(pts, np.full(pts.shape[0], 1.0 / pts.shape[0]))


def _binned_masses(points, masses, spec):
    idx = spec.cell_index(points)
    flat = np.ravel_multi_index(tuple(idx.T), spec.counts)
    cells = np.bincount(flat, weights=masses, minlength=int(np.prod(spec.counts)))
    return cells / cells.sum()


def histogram(points, spec):
    """Bin points on ``spec``; atoms sit at the centers of occupied cells.

    Points outside the grid are clamped into the nearest boundary cell.
    """
    pts = check_points(points)
    cells = _binned_masses(pts, np.ones(pts.shape[0]), spec)
    occupied = np.flatnonzero(cells)
    multi = np.unravel_index(occupied, spec.counts)
    centers = np.column_stack([
        np.asarray(spec.origin[k]) + (multi[k] + 0.5) * spec.cell_size[k]
        for k in range(spec.dim)
    ])
    return DiscreteDistribution(centers, cells[occupied] / cells[occupied].sum())


def scott_bandwidth(points):
    """Per-axis Scott's rule ``n^(-1/(d+4)) * std``; zeros mark degenerate axes."""
    pts = check_points(points, min_rows=2)
    n, d = pts.shape
    return n ** (-1.0 / (d + 4)) * pts.std(axis=0, ddof=1)


def kde_spec(points, counts, pad_bandwidths=3.0):
    """Grid over the points' bounding box padded by ``pad_bandwidths`` bandwidths."""
    pts = check_points(points, min_rows=2)
    h = scott_bandwidth(pts)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = np.where(h > 0, h, np.maximum(hi - lo, 1.0) * 0.1)
    return HistogramSpec.covering(lo - pad_bandwidths * span,
                                  hi + pad_bandwidths * span, counts)


def kde(points, spec):
    """Gaussian product-kernel density evaluated at the cell centers of ``spec``.

    Axes along which every point coincides fall back to a bandwidth equal to
    the cell size; they are listed in ``degenerate_axes`` and a
    :class:`DegenerateSpreadWarning` is emitted.
    """
    pts = check_points(points)
    if pts.shape[0] < 2:
        raise EmptyInput("kde needs at least two points")
    if pts.shape[1] != spec.dim:
        raise InvalidSpec(f"spec has dimension {spec.dim}, points have {pts.shape[1]}")
    n, d = pts.shape
    if d > 20:
        raise InvalidSpec("kde supports at most 20 dimensions")
    h = scott_bandwidth(pts)
    degenerate = tuple(int(k) for k in np.flatnonzero(h <= 0))
    if degenerate:
        warnings.warn(f"zero spread along axes {degenerate}; using cell size",
                      DegenerateSpreadWarning, stacklevel=2)
        h = np.where(h > 0, h, np.asarray(spec.cell_size))

    factors = []
    for k in range(d):
        z = (spec.cell_centers(k)[None, :] - pts[:, k:k + 1]) / h[k]
        factors.append(np.exp(-0.5 * z * z) / (np.sqrt(2 * np.pi) * h[k]))
    letters = string.ascii_letters[1:d + 1]
    subscripts = ",".join("a" + c for c in letters) + "->" + letters
    values = np.einsum(subscripts, *factors) / n
    return DensityGrid(spec.origin, spec.cell_size, values,
                       bandwidth=tuple(float(v) for v in h),
                       degenerate_axes=degenerate)


def tv_distance(a, b, spec):
    """Total-variation distance between two distributions binned on ``spec``."""
    p = _binned_masses(a.points, a.masses, spec)
    q = _binned_masses(b.points, b.masses, spec)
    return float(min(1.0, 0.5 * np.abs(p - q).sum()))


def _fmt(x):
    return format(float(x), ".17g")


def write_grid_csv(grid, path):
    """Write ``grid`` as a header comment plus one ``i,j,...,value`` row per cell."""
    shape = grid.values.shape
    header = ("# origin=" + ";".join(_fmt(v) for v in grid.origin)
              + " cell_size=" + ";".join(_fmt(v) for v in grid.cell_size)
              + " shape=" + ";".join(str(s) for s in shape))
    lines = [header]
    for multi in np.ndindex(*shape):
        lines.append(",".join(str(i) for i in multi) + "," + _fmt(grid.values[multi]))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_grid_csv(path):
    with open(path) as fh:
        header = fh.readline().strip()
        fields = dict(tok.split("=", 1) for tok in header.lstrip("# ").split())
        origin = tuple(float(v) for v in fields["origin"].split(";"))
        cell = tuple(float(v) for v in fields["cell_size"].split(";"))
        shape = tuple(int(v) for v in fields["shape"].split(";"))
        values = np.zeros(shape)
        for line in fh:
            parts = line.strip().split(",")
            if len(parts) < 2:
                continue
            values[tuple(int(p) for p in parts[:-1])] = float(parts[-1])
    return DensityGrid(origin, cell, values)
