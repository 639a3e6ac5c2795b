"""Social force model for a crowd escaping a square room through one exit.

Forces follow the classic granular-contact form: a desire force relaxing each
pedestrian toward ``v_p`` along the direction of the exit center, exponential
social repulsion, and body/sliding-friction terms active only on contact, for
both pedestrian pairs and walls.  Integration is semi-implicit Euler.
"""

import math
from dataclasses import asdict, dataclass

import numpy as np
from numba import njit

from ..exceptions import CoincidentPositions, DegenerateDirection, PlacementFailure
from .base import ForwardModel, SimulationRun, check_theta

__all__ = [
    "SFMParams",
    "PedestrianState",
    "RoomScenario",
    "desire_force",
    "pair_force",
    "wall_force",
    "step",
    "simulate_room",
    "place_pedestrians",
    "SocialForceModel",
]

INFERABLE = ("A", "B", "v_p")


@dataclass(frozen=True)
class SFMParams:
    """Homogeneous pedestrian parameters (SI units)."""

    m: float = 80.0          # kg
    v_p: float = 1.0         # m/s
    tau: float = 0.5         # s
    r: float = 0.3           # m
    A: float = 2000.0        # N
    B: float = 0.08          # m
    k_body: float = 1.2e5    # kg/s^2
    kappa: float = 2.4e5     # kg/(m s)

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite")
            # a zero desired speed is a valid (resting) crowd
            if value < 0 or (value == 0 and name != "v_p"):
                raise ValueError(f"{name} must be positive, got {value}")

    def replace(self, **changes):
        values = asdict(self)
        values.update(changes)
        return SFMParams(**values)

    def as_array(self):
        return np.array([self.m, self.v_p, self.tau, self.r,
                         self.A, self.B, self.k_body, self.kappa])


@dataclass
class PedestrianState:
    position: np.ndarray
    velocity: np.ndarray
    active: bool = True

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(2)
        self.velocity = np.asarray(self.velocity, dtype=float).reshape(2)


@dataclass(frozen=True)
class RoomScenario:
    """Square room ``[0, room_size]^2`` with a single exit gap in one wall."""

    room_size: float = 10.0
    exit_center: tuple = (10.0, 5.0)
    exit_width: float = 2.0
    n_pedestrians: int = 100
    placement_seed: int = 0
    dt: float = 0.001
    delta_t: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "exit_center", tuple(float(v) for v in self.exit_center))
        if self.room_size <= 0 or self.dt <= 0 or self.delta_t <= 0:
            raise ValueError("room_size, dt and delta_t must be positive")
        if self.exit_width <= 0:
            raise ValueError("exit_width must be positive")
        ratio = self.delta_t / self.dt
        if abs(ratio - round(ratio)) > 1e-12 * max(1.0, ratio):
            raise ValueError("dt must divide delta_t")
        if self.n_pedestrians < 1:
            raise ValueError("n_pedestrians must be >= 1")
        self.walls()

    @property
    def steps_per_frame(self):
        return int(round(self.delta_t / self.dt))

    def _exit_side(self):
        L = self.room_size
        x, y = self.exit_center
        sides = {"left": abs(x), "right": abs(x - L), "bottom": abs(y), "top": abs(y - L)}
        side = min(sides, key=sides.get)
        if sides[side] > 1e-9:
            raise ValueError(f"exit_center {self.exit_center} is not on the room boundary")
        return side

    def exit_segment(self):
        x, y = self.exit_center
        h = self.exit_width / 2
        if self._exit_side() in ("left", "right"):
            return np.array([x, y - h, x, y + h])
        return np.array([x - h, y, x + h, y])

    def walls(self):
        """Wall segments ``(x1, y1, x2, y2)``: the boundary minus the exit gap."""
        L = self.room_size
        corners = {"bottom": (0, 0, L, 0), "right": (L, 0, L, L),
                   "top": (0, L, L, L), "left": (0, 0, 0, L)}
        side = self._exit_side()
        gap = self.exit_segment()
        walls = []
        for name, seg in corners.items():
            if name != side:
                walls.append(seg)
                continue
            x1, y1, x2, y2 = seg
            if side in ("left", "right"):
                lo, hi = gap[1], gap[3]
                if lo > 0:
                    walls.append((x1, 0.0, x1, lo))
                if hi < L:
                    walls.append((x1, hi, x1, L))
            else:
                lo, hi = gap[0], gap[2]
                if lo > 0:
                    walls.append((0.0, y1, lo, y1))
                if hi < L:
                    walls.append((hi, y1, L, y1))
        return np.array(walls, dtype=float)


# ---------------------------------------------------------------- force laws

@njit(cache=True)
def _desire(vx, vy, ex, ey, m, v_p, tau):
    return m * (v_p * ex - vx) / tau, m * (v_p * ey - vy) / tau


@njit(cache=True)
def _pair(xi, yi, vxi, vyi, xj, yj, vxj, vyj, A, B, r_ij, k_body, kappa):
    dx = xi - xj
    dy = yi - yj
    d = math.sqrt(dx * dx + dy * dy)
    nx = dx / d
    ny = dy / d
    overlap = r_ij - d
    contact = overlap if overlap > 0.0 else 0.0
    normal = A * math.exp(overlap / B) + k_body * contact
    tx = -ny
    ty = nx
    dv_t = (vxj - vxi) * tx + (vyj - vyi) * ty
    friction = kappa * contact * dv_t
    return normal * nx + friction * tx, normal * ny + friction * ty


@njit(cache=True)
def _nearest_on_segment(px, py, x1, y1, x2, y2):
    sx = x2 - x1
    sy = y2 - y1
    length2 = sx * sx + sy * sy
    if length2 == 0.0:
        return x1, y1
    s = ((px - x1) * sx + (py - y1) * sy) / length2
    if s < 0.0:
        s = 0.0
    elif s > 1.0:
        s = 1.0
    return x1 + s * sx, y1 + s * sy


@njit(cache=True)
def _wall(xi, yi, vxi, vyi, x1, y1, x2, y2, A, B, r, k_body, kappa):
    wx, wy = _nearest_on_segment(xi, yi, x1, y1, x2, y2)
    dx = xi - wx
    dy = yi - wy
    d = math.sqrt(dx * dx + dy * dy)
    if d == 0.0:
        return 0.0, 0.0
    nx = dx / d
    ny = dy / d
    overlap = r - d
    contact = overlap if overlap > 0.0 else 0.0
    normal = A * math.exp(overlap / B) + k_body * contact
    tx = -ny
    ty = nx
    friction = kappa * contact * (vxi * tx + vyi * ty)
    return normal * nx - friction * tx, normal * ny - friction * ty


@njit(cache=True)
def _crosses(px, py, qx, qy, x1, y1, x2, y2):
    """Does the move p -> q pass through the closed segment (x1,y1)-(x2,y2)?"""
    rx = qx - px
    ry = qy - py
    sx = x2 - x1
    sy = y2 - y1
    denom = rx * sy - ry * sx
    if denom == 0.0:
        return False
    t = ((x1 - px) * sy - (y1 - py) * sx) / denom
    u = ((x1 - px) * ry - (y1 - py) * rx) / denom
    return 0.0 <= t <= 1.0 and 0.0 <= u <= 1.0


@njit(cache=True)
def _advance(pos, vel, active, n_steps, dt, params, walls, exit_seg, target,
             use_pairs, use_walls):
    """Integrate ``n_steps`` semi-implicit Euler steps in place.

    Returns 0 on success or 1 if two active pedestrians coincide.
    """
    m, v_p, tau, r, A, B, k_body, kappa = (params[0], params[1], params[2], params[3],
                                           params[4], params[5], params[6], params[7])
    n = pos.shape[0]
    n_walls = walls.shape[0]
    force = np.zeros((n, 2))
    for _ in range(n_steps):
        for i in range(n):
            force[i, 0] = 0.0
            force[i, 1] = 0.0
        for i in range(n):
            if not active[i]:
                continue
            ex = target[0] - pos[i, 0]
            ey = target[1] - pos[i, 1]
            norm = math.sqrt(ex * ex + ey * ey)
            if norm > 0.0:
                ex /= norm
                ey /= norm
            fx, fy = _desire(vel[i, 0], vel[i, 1], ex, ey, m, v_p, tau)
            force[i, 0] += fx
            force[i, 1] += fy
            if use_walls:
                for w in range(n_walls):
                    fx, fy = _wall(pos[i, 0], pos[i, 1], vel[i, 0], vel[i, 1],
                                   walls[w, 0], walls[w, 1], walls[w, 2], walls[w, 3],
                                   A, B, r, k_body, kappa)
                    force[i, 0] += fx
                    force[i, 1] += fy
        if use_pairs:
            for i in range(n):
                if not active[i]:
                    continue
                for j in range(n):
                    if j == i or not active[j]:
                        continue
                    if pos[i, 0] == pos[j, 0] and pos[i, 1] == pos[j, 1]:
                        return 1
                    fx, fy = _pair(pos[i, 0], pos[i, 1], vel[i, 0], vel[i, 1],
                                   pos[j, 0], pos[j, 1], vel[j, 0], vel[j, 1],
                                   A, B, 2.0 * r, k_body, kappa)
                    force[i, 0] += fx
                    force[i, 1] += fy
        for i in range(n):
            if not active[i]:
                continue
            vel[i, 0] += force[i, 0] / m * dt
            vel[i, 1] += force[i, 1] / m * dt
            px = pos[i, 0]
            py = pos[i, 1]
            pos[i, 0] = px + vel[i, 0] * dt
            pos[i, 1] = py + vel[i, 1] * dt
            if _crosses(px, py, pos[i, 0], pos[i, 1],
                        exit_seg[0], exit_seg[1], exit_seg[2], exit_seg[3]):
                active[i] = False
    return 0


# ---------------------------------------------------------------- public API

def desire_force(state, params, target):
    """``m (v_p e - v) / tau`` with ``e`` the unit vector toward ``target``."""
    direction = np.asarray(target, dtype=float) - state.position
    norm = np.linalg.norm(direction)
    if norm == 0:
        raise DegenerateDirection("pedestrian sits exactly on its target")
    e = direction / norm
    return np.array(_desire(state.velocity[0], state.velocity[1], e[0], e[1],
                            params.m, params.v_p, params.tau))


def pair_force(i, j, params):
    """Force on pedestrian ``i`` exerted by pedestrian ``j`` (N)."""
    if np.array_equal(i.position, j.position):
        raise CoincidentPositions("pair_force needs distinct positions")
    return np.array(_pair(i.position[0], i.position[1], i.velocity[0], i.velocity[1],
                          j.position[0], j.position[1], j.velocity[0], j.velocity[1],
                          params.A, params.B, 2 * params.r, params.k_body, params.kappa))


def wall_force(i, wall, params):
    """Force on pedestrian ``i`` from segment ``wall = (x1, y1, x2, y2)`` (N)."""
    x1, y1, x2, y2 = (float(v) for v in np.ravel(wall))
    return np.array(_wall(i.position[0], i.position[1], i.velocity[0], i.velocity[1],
                          x1, y1, x2, y2, params.A, params.B, params.r,
                          params.k_body, params.kappa))


def _pack(states):
    pos = np.array([s.position for s in states], dtype=float).reshape(-1, 2)
    vel = np.array([s.velocity for s in states], dtype=float).reshape(-1, 2)
    active = np.array([s.active for s in states], dtype=np.bool_)
    return pos, vel, active


def step(states, params, scenario, dt, *, pairs=True, walls=True):
    """Advance a list of :class:`PedestrianState` by one step of length ``dt``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    pos, vel, active = _pack(states)
    status = _advance(pos, vel, active, 1, float(dt), params.as_array(),
                      scenario.walls(), scenario.exit_segment(),
                      np.asarray(scenario.exit_center, dtype=float), pairs, walls)
    if status:
        raise CoincidentPositions("two pedestrians share a position")
    return [PedestrianState(p.copy(), v.copy(), bool(a)) for p, v, a in zip(pos, vel, active)]


def place_pedestrians(scenario, r, max_attempts=100_000):
    """Uniform rejection sampling: centers more than ``2r`` apart, ``r`` off the walls."""
    rng = np.random.default_rng(scenario.placement_seed)
    L = scenario.room_size
    placed = []
    attempts = 0
    while len(placed) < scenario.n_pedestrians:
        if attempts >= max_attempts:
            raise PlacementFailure(
                f"placed {len(placed)} of {scenario.n_pedestrians} pedestrians "
                f"after {max_attempts} attempts")
        attempts += 1
        p = rng.uniform(0.0, L, size=2)
        if np.any(p <= r) or np.any(p >= L - r):
            continue
        if placed and np.min(np.linalg.norm(np.array(placed) - p, axis=1)) <= 2 * r:
            continue
        placed.append(p)
    return np.array(placed)


class _RoomRun(SimulationRun):
    def __init__(self, scenario, params, initial):
        self.scenario = scenario
        self.params = params
        self._p = params.as_array()
        self._walls = scenario.walls()
        self._exit = scenario.exit_segment()
        self._target = np.asarray(scenario.exit_center, dtype=float)
        self.pos = initial.copy()
        self.vel = np.zeros_like(initial)
        self.active = np.ones(len(initial), dtype=np.bool_)
        self.n_frames = 0

    def advance(self):
        status = _advance(self.pos, self.vel, self.active, self.scenario.steps_per_frame,
                          self.scenario.dt, self._p, self._walls, self._exit,
                          self._target, True, True)
        if status:
            raise CoincidentPositions(f"coincident pedestrians before frame {self.n_frames + 1}")
        self.n_frames += 1
        ids = np.flatnonzero(self.active)
        return self.pos[ids].copy(), ids, self.n_frames * self.scenario.delta_t


class SocialForceModel(ForwardModel):
    """Escape-room forward model; ``theta`` overrides any of ``A``, ``B``, ``v_p``.

    The initial placement is drawn once from ``scenario.placement_seed`` and is
    shared by every simulation of this model.
    """

    name = "sfm"
    speed_cap = 10.0

    def __init__(self, scenario=None, fixed=None):
        self.scenario = scenario if scenario is not None else RoomScenario()
        self.fixed = fixed if fixed is not None else SFMParams()
        if self.scenario.exit_width <= 2 * self.fixed.r:
            raise ValueError("exit_width must exceed one pedestrian diameter")
        self._initial = place_pedestrians(self.scenario, self.fixed.r)

    def parameter_names(self):
        return list(INFERABLE)

    @property
    def bounds(self):
        L = self.scenario.room_size
        return (np.zeros(2), np.full(2, L))

    @property
    def initial_positions(self):
        return self._initial.copy()

    def params_for(self, theta):
        return self.fixed.replace(**check_theta(theta, INFERABLE))

    def start(self, theta):
        return _RoomRun(self.scenario, self.params_for(theta), self._initial)


def simulate_room(theta, scenario, fixed, T):
    """Simulate ``T`` frames of the escape room for parameter overrides ``theta``."""
    return SocialForceModel(scenario, fixed).simulate(theta, T)
