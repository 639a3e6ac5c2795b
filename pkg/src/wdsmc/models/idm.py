"""Intelligent driver model on a multi-lane highway without lane changes.

Lanes start empty and are fed by an evenly spaced arrival schedule assigned
round-robin across lanes.  Each lane is integrated front to back, so every
follower reacts to its leader's already-updated state.  Frames are 2D clouds
``(x, lane * lane_spacing)``.
"""

import math
from dataclasses import asdict, dataclass

import numpy as np
from numba import njit

from ..exceptions import NonPositiveGap
from .base import ForwardModel, SimulationRun, check_theta

__all__ = [
    "IDMParams",
    "VehicleState",
    "HighwayScenario",
    "desired_gap",
    "acceleration",
    "step",
    "simulate_highway",
    "IntelligentDriverModel",
]

INFERABLE = ("v0", "a", "T_s")


@dataclass(frozen=True)
class IDMParams:
    v0: float = 8.33     # m/s
    T_s: float = 1.6     # s
    a: float = 1.44      # m/s^2
    b: float = 4.61      # m/s^2
    delta: float = 4.0
    s0: float = 2.0      # m
    l: float = 5.0       # m

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive and finite, got {value}")
        if self.delta < 1:
            raise ValueError("delta must be >= 1")

    def replace(self, **changes):
        values = asdict(self)
        values.update(changes)
        return IDMParams(**values)

    def as_array(self):
        return np.array([self.v0, self.T_s, self.a, self.b, self.delta, self.s0, self.l])


@dataclass
class VehicleState:
    lane: int
    position: float
    velocity: float = 0.0

    def __post_init__(self):
        if self.velocity < 0 or not math.isfinite(self.velocity) or not math.isfinite(self.position):
            raise ValueError("velocity must be finite and >= 0")


@dataclass(frozen=True)
class HighwayScenario:
    lane_length: float = 300.0
    n_lanes: int = 4
    arrival_rate: float = 3.0
    arrival_seed: int = 0
    dt: float = 0.1
    delta_t: float = 1.0
    entry_speed: float = 0.8 * 8.33
    lane_spacing: float = 3.5
    arrival_jitter: float = 0.05

    def __post_init__(self):
        if self.lane_length <= 0 or self.n_lanes < 1:
            raise ValueError("lane_length and n_lanes must be positive")
        if self.arrival_rate <= 0 or self.dt <= 0 or self.delta_t <= 0:
            raise ValueError("arrival_rate, dt and delta_t must be positive")
        if self.entry_speed < 0:
            raise ValueError("entry_speed must be >= 0")
        ratio = self.delta_t / self.dt
        if abs(ratio - round(ratio)) > 1e-12 * max(1.0, ratio):
            raise ValueError("dt must divide delta_t")

    @property
    def steps_per_frame(self):
        return int(round(self.delta_t / self.dt))


@njit(cache=True)
def _desired_gap(v, dv, v0, T_s, a, b, s0):
    s_star = s0 + T_s * v + v * dv / (2.0 * math.sqrt(a * b))
    return s_star if s_star > s0 else s0


@njit(cache=True)
def _accel(v, has_leader, gap, dv, p):
    v0, T_s, a, b, delta, s0 = p[0], p[1], p[2], p[3], p[4], p[5]
    free = a * (1.0 - (v / v0) ** delta)
    if not has_leader:
        return free
    s_star = _desired_gap(v, dv, v0, T_s, a, b, s0)
    return free - a * (s_star / gap) ** 2


@njit(cache=True)
def _step_lane(x, v, start, stop, p, dt):
    """Update vehicles ``start..stop-1`` (front first) in place; 1 on collision."""
    length = p[6]
    for k in range(start, stop):
        if k == start:
            acc = _accel(v[k], False, 0.0, 0.0, p)
        else:
            gap = x[k - 1] - x[k] - length
            if gap <= 0.0:
                return 1
            acc = _accel(v[k], True, gap, v[k] - v[k - 1], p)
        nv = v[k] + acc * dt
        v[k] = nv if nv > 0.0 else 0.0
        x[k] += v[k] * dt
    return 0


def desired_gap(v, dv, params):
    """``s0 + T_s v + v dv / (2 sqrt(a b))``, never below ``s0``."""
    if v < 0:
        raise ValueError("v must be >= 0")
    return _desired_gap(float(v), float(dv), params.v0, params.T_s, params.a,
                        params.b, params.s0)


def acceleration(follower, leader, params):
    """IDM acceleration of ``follower`` behind ``leader`` (or on a free road)."""
    p = params.as_array()
    if leader is None:
        return _accel(float(follower.velocity), False, 0.0, 0.0, p)
    gap = leader.position - follower.position - params.l
    if gap <= 0:
        raise NonPositiveGap(f"gap {gap} <= 0 between leader and follower")
    return _accel(float(follower.velocity), True, gap,
                  follower.velocity - leader.velocity, p)


def step(lanes, params, dt, lane_length=math.inf):
    """One update of ``lanes`` (lists of :class:`VehicleState`, front first).

    Velocities are clamped at zero; vehicles beyond ``lane_length`` are removed.
    """
    p = params.as_array()
    out = []
    for lane_no, vehicles in enumerate(lanes):
        x = np.array([veh.position for veh in vehicles], dtype=float)
        v = np.array([veh.velocity for veh in vehicles], dtype=float)
        if len(x) > 1 and np.any(np.diff(x) >= 0):
            raise ValueError(f"lane {lane_no} is not ordered front to back")
        if _step_lane(x, v, 0, len(x), p, float(dt)):
            raise NonPositiveGap(f"collision in lane {lane_no}")
        lane = [VehicleState(vehicles[k].lane, float(x[k]), float(v[k]))
                for k in range(len(x)) if x[k] <= lane_length]
        out.append(lane)
    return out


class _HighwayRun(SimulationRun):
    def __init__(self, scenario, params):
        self.scenario = scenario
        self.params = params
        self._p = params.as_array()
        n_lanes = scenario.n_lanes
        cap = 64
        self.x = np.zeros((n_lanes, cap))
        self.v = np.zeros((n_lanes, cap))
        self.ids = np.zeros((n_lanes, cap), dtype=np.int64)
        self.head = np.zeros(n_lanes, dtype=np.int64)  # first vehicle still on road
        self.tail = np.zeros(n_lanes, dtype=np.int64)  # one past the last vehicle
        self.queues = [[] for _ in range(n_lanes)]
        self._rng = np.random.default_rng(scenario.arrival_seed)
        self._next_arrival = 0
        self._next_time = self._arrival_time(0)
        self.n_steps = 0
        self.n_frames = 0

    def _arrival_time(self, k):
        s = self.scenario
        jitter = self._rng.uniform(-s.arrival_jitter, s.arrival_jitter)
        return max(0.0, k / s.arrival_rate + jitter)

    def _ensure_capacity(self, extra):
        for lane in range(self.scenario.n_lanes):
            count = self.tail[lane] - self.head[lane]
            if self.head[lane] > 0:
                h, t = self.head[lane], self.tail[lane]
                for arr in (self.x, self.v, self.ids):
                    arr[lane, :count] = arr[lane, h:t].copy()
                self.head[lane], self.tail[lane] = 0, count
        cap = self.x.shape[1]
        need = int(self.tail.max()) + extra
        if need > cap:
            grow = max(need, 2 * cap) - cap
            self.x = np.pad(self.x, ((0, 0), (0, grow)))
            self.v = np.pad(self.v, ((0, 0), (0, grow)))
            self.ids = np.pad(self.ids, ((0, 0), (0, grow)))

    def _one_step(self):
        s = self.scenario
        now = self.n_steps * s.dt
        # arrivals due by the start of this step join their lane's queue
        while self._next_time <= now + 1e-12:
            self.queues[self._next_arrival % s.n_lanes].append(self._next_arrival)
            self._next_arrival += 1
            self._next_time = self._arrival_time(self._next_arrival)
        min_gap = self.params.s0 + self.params.l
        for lane in range(s.n_lanes):
            q = self.queues[lane]
            if not q:
                continue
            h, t = self.head[lane], self.tail[lane]
            if t > h and self.x[lane, t - 1] < min_gap:
                continue
            self.x[lane, t] = 0.0
            self.v[lane, t] = s.entry_speed
            self.ids[lane, t] = q.pop(0)
            self.tail[lane] = t + 1
        for lane in range(s.n_lanes):
            xs, vs = self.x[lane], self.v[lane]
            if _step_lane(xs, vs, self.head[lane], self.tail[lane], self._p, s.dt):
                raise NonPositiveGap(f"collision in lane {lane} at t={now + s.dt:.3f}s")
            while self.head[lane] < self.tail[lane] and xs[self.head[lane]] > s.lane_length:
                self.head[lane] += 1
        self.n_steps += 1

    def advance(self):
        s = self.scenario
        self._ensure_capacity(s.steps_per_frame + 1)
        for _ in range(s.steps_per_frame):
            self._one_step()
        self.n_frames += 1
        pts, ids = [], []
        for lane in range(s.n_lanes):
            h, t = self.head[lane], self.tail[lane]
            xs = self.x[lane, h:t]
            pts.append(np.column_stack([xs, np.full(len(xs), lane * s.lane_spacing)]))
            ids.append(self.ids[lane, h:t])
        return (np.concatenate(pts) if pts else np.zeros((0, 2)),
                np.concatenate(ids) if ids else np.zeros(0, dtype=np.int64),
                self.n_frames * s.delta_t)


class IntelligentDriverModel(ForwardModel):
    """Highway forward model; ``theta`` overrides any of ``v0``, ``a``, ``T_s``."""

    name = "idm"
    speed_cap = 60.0

    def __init__(self, scenario=None, fixed=None):
        self.scenario = scenario if scenario is not None else HighwayScenario()
        self.fixed = fixed if fixed is not None else IDMParams()

    def parameter_names(self):
        return list(INFERABLE)

    @property
    def bounds(self):
        s = self.scenario
        return (np.zeros(2), np.array([s.lane_length, (s.n_lanes - 1) * s.lane_spacing]))

    def params_for(self, theta):
        return self.fixed.replace(**check_theta(theta, INFERABLE))

    def start(self, theta):
        return _HighwayRun(self.scenario, self.params_for(theta))


def simulate_highway(theta, scenario, fixed, T):
    """Simulate ``T`` frames of highway traffic for parameter overrides ``theta``."""
    return IntelligentDriverModel(scenario, fixed).simulate(theta, T)
