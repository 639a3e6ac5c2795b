"""Forward-model contract, observation generation and trajectory checks."""

import copy
import csv
import json
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .._validation import check_points
from ..density import empirical
from ..exceptions import EmptyInput, IndexOutOfRange, NonMonotoneTimes, ParseError
from ..ot import DiscreteDistribution

__all__ = [
    "Trajectory",
    "ObservationSeries",
    "ValidationResult",
    "SimulationRun",
    "ForwardModel",
    "check_theta",
    "observe",
    "synthetic_observation",
    "validate_trajectory",
]


def check_theta(theta, allowed):
    """Validate a parameter mapping against the names a model accepts."""
    out = {}
    for name, value in dict(theta).items():
        if name not in allowed:
            raise KeyError(f"unknown parameter {name!r}; expected a subset of {sorted(allowed)}")
        value = float(value)
        if not math.isfinite(value):
            raise ValueError(f"parameter {name} is not finite: {value}")
        out[name] = value
    return out


@dataclass
class Trajectory:
    """Sequence of point clouds at increasing observation times.

    ``ids`` optionally labels the particles of each frame so that
    :func:`validate_trajectory` can bound per-particle displacements.
    """

    frames: list
    frame_times: list
    ids: list = None

    def __post_init__(self):
        frames = [np.asarray(f, dtype=np.float64) for f in self.frames]
        self.frames = [f.reshape(-1, 1) if f.ndim == 1 else f for f in frames]
        self.frame_times = [float(t) for t in self.frame_times]
        if len(self.frames) != len(self.frame_times):
            raise ValueError("frames and frame_times differ in length")
        if any(b <= a for a, b in zip(self.frame_times, self.frame_times[1:])):
            raise ValueError("frame_times must be strictly increasing")
        dims = {f.shape[1] for f in self.frames}
        if len(dims) > 1:
            raise ValueError(f"frames disagree on dimension: {sorted(dims)}")

    def __len__(self):
        return len(self.frames)

    def truncate(self, t):
        ids = None if self.ids is None else self.ids[:t]
        return Trajectory(self.frames[:t], self.frame_times[:t], ids)


@dataclass
class ObservationSeries:
    """Observed distributions ``y_1..y_T`` at ``times``."""

    observations: list
    times: list
    noise_sigma: float = 0.0

    def __post_init__(self):
        if len(self.observations) < 1:
            raise EmptyInput("an observation series needs at least one step")
        if len(self.observations) != len(self.times):
            raise ValueError("observations and times differ in length")
        self.times = [float(t) for t in self.times]
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise NonMonotoneTimes("observation times must be strictly increasing")
        self.noise_sigma = float(self.noise_sigma)

    def __len__(self):
        return len(self.observations)

    @property
    def dim(self):
        return self.observations[0].dim

    def truncate(self, t):
        return ObservationSeries(self.observations[:t], self.times[:t], self.noise_sigma)

    def to_csv(self, path):
        """Write ``t,x1..xd`` rows plus a ``<name>.meta.json`` sidecar.

        Every atom of an observation is written as one row, so only
        equal-mass (empirical) observations survive a round trip.
        """
        path = Path(path)
        d = self.dim
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["t"] + [f"x{k + 1}" for k in range(d)])
            for t, obs in enumerate(self.observations, start=1):
                for p in obs.points:
                    writer.writerow([t] + [format(float(v), ".17g") for v in p])
        meta = {"times": self.times, "noise_sigma": self.noise_sigma, "dim": d}
        with open(sidecar_path(path), "w") as fh:
            json.dump(meta, fh, indent=2)
            fh.write("\n")
        return path

    @classmethod
    def from_csv(cls, path, meta_path=None):
        """Parse the CSV written by :meth:`to_csv` (or an external file in that schema)."""
        path = Path(path)
        meta_path = Path(meta_path) if meta_path is not None else sidecar_path(path)
        try:
            with open(meta_path) as fh:
                meta = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{meta_path}: invalid JSON ({exc})") from exc
        for key in ("times",):
            if key not in meta:
                raise ParseError(f"{meta_path}: missing field {key!r}")
        times = [float(t) for t in meta["times"]]

        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = [h.strip() for h in next(reader)]
            except StopIteration:
                raise ParseError(f"{path}: empty file") from None
            if not header or header[0] != "t":
                raise ParseError(f"{path}: missing column 't' in header {header}")
            coords = header[1:]
            if not coords:
                raise ParseError(f"{path}: missing column 'x1'")
            for k, name in enumerate(coords):
                if name != f"x{k + 1}":
                    raise ParseError(f"{path}: missing column 'x{k + 1}' (found {name!r})")
            d = len(coords)
            if "dim" in meta and int(meta["dim"]) != d:
                raise ParseError(f"{path}: header has {d} coordinates, metadata says {meta['dim']}")
            buckets = {}
            for row_no, row in enumerate(reader, start=2):
                if not row or all(not c.strip() for c in row):
                    continue
                if len(row) != d + 1:
                    raise ParseError(f"{path}:{row_no}: expected {d + 1} fields, got {len(row)}")
                try:
                    t = int(row[0])
                    values = [float(c) for c in row[1:]]
                except ValueError as exc:
                    raise ParseError(f"{path}:{row_no}: {exc}") from None
                if not 1 <= t <= len(times):
                    raise ParseError(f"{path}:{row_no}: time index {t} outside 1..{len(times)}")
                if not all(math.isfinite(v) for v in values):
                    raise ParseError(f"{path}:{row_no}: non-finite coordinate")
                buckets.setdefault(t, []).append(values)
        missing = [t for t in range(1, len(times) + 1) if t not in buckets]
        if missing:
            raise ParseError(f"{path}: no rows for time index {missing[0]}")
        obs = [empirical(np.array(buckets[t])) for t in range(1, len(times) + 1)]
        return cls(obs, times, float(meta.get("noise_sigma", 0.0)))


def sidecar_path(path):
    path = Path(path)
    return path.with_name(path.stem + ".meta.json")


@dataclass(frozen=True)
class ValidationResult:
    ok: bool
    reason: str = None
    frame: int = None

    def __bool__(self):
        return self.ok

    @classmethod
    def degenerate(cls, reason, frame):
        return cls(False, reason, frame)


def observe(frame, sigma, rng):
    """Add iid N(0, sigma^2) noise to every coordinate; return the empirical cloud.

    ``rng`` is a :class:`numpy.random.Generator` or anything accepted by
    :func:`numpy.random.default_rng`.
    """
    pts = check_points(frame)
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return empirical(pts)
    rng = np.random.default_rng(rng)
    return empirical(pts + rng.normal(0.0, sigma, size=pts.shape))


def synthetic_observation(traj, t):
    """Noise-free empirical distribution of frame ``t`` (1-based)."""
    if not 1 <= t <= len(traj):
        raise IndexOutOfRange(f"t={t} outside 1..{len(traj)}")
    return empirical(traj.frames[t - 1])


def validate_trajectory(traj, speed_cap, bounds, padding=1.0):
    """Flag non-finite states, escapes from the padded box and unphysical speeds.

    ``bounds`` is ``(lower, upper)``.  Displacements are checked between
    consecutive frames for particles sharing an id (or by index when ids are
    absent and the frame sizes agree).  Never raises.
    """
    lower = np.asarray(bounds[0], dtype=float) - padding
    upper = np.asarray(bounds[1], dtype=float) + padding
    prev = prev_ids = prev_time = None
    for k, frame in enumerate(traj.frames):
        frame_no = k + 1
        if not np.all(np.isfinite(frame)):
            return ValidationResult.degenerate("non-finite", frame_no)
        if frame.size and (np.any(frame < lower) or np.any(frame > upper)):
            return ValidationResult.degenerate("bounds", frame_no)
        ids = traj.ids[k] if traj.ids is not None else None
        if prev is not None:
            limit = speed_cap * (traj.frame_times[k] - prev_time)
            if ids is not None and prev_ids is not None:
                common, i_now, i_prev = np.intersect1d(ids, prev_ids, return_indices=True)
                step = frame[i_now] - prev[i_prev]
            elif len(frame) == len(prev):
                step = frame - prev
            else:
                step = np.zeros((0, frame.shape[1]))
            if step.size and np.max(np.linalg.norm(step, axis=1)) > limit:
                return ValidationResult.degenerate("speed", frame_no)
        prev, prev_ids, prev_time = frame, ids, traj.frame_times[k]
    return ValidationResult(True)


class SimulationRun(ABC):
    """Resumable simulation producing one frame per :meth:`advance` call."""

    n_frames = 0

    @abstractmethod
    def advance(self):
        """Integrate one observation interval; return ``(points, ids, time)``."""

    def copy(self):
        return copy.deepcopy(self)


class ForwardModel(ABC):
    """Deterministic map from a parameter vector to a trajectory of point clouds.

    Subclasses provide :meth:`start`.  Runs must not share mutable state, so a
    model instance can simulate many parameter vectors concurrently.
    """

    name = "model"
    speed_cap = 10.0
    dim = 2

    @abstractmethod
    def parameter_names(self):
        """Names that may appear in a parameter vector."""

    @abstractmethod
    def start(self, theta):
        """Fresh :class:`SimulationRun` at the configured initial state."""

    @property
    @abstractmethod
    def bounds(self):
        """``(lower, upper)`` corners of the scenario box."""

    def simulate(self, theta, horizon):
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        run = self.start(theta)
        frames, ids, times = [], [], []
        for _ in range(int(horizon)):
            pts, idx, t = run.advance()
            frames.append(pts)
            ids.append(idx)
            times.append(t)
        return Trajectory(frames, times, ids)

    def validate(self, traj):
        return validate_trajectory(traj, self.speed_cap, self.bounds)
