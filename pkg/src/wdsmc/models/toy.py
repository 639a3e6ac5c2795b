"""Cheap 1D forward model for checking the sampler against closed-form answers."""

import numpy as np

from .base import ForwardModel, SimulationRun, check_theta

__all__ = ["GaussianCloudModel"]


class _CloudRun(SimulationRun):
    def __init__(self, theta, model):
        self.theta = theta
        self.model = model
        self.n_frames = 0

    def advance(self):
        m = self.model
        self.n_frames += 1
        # noise depends only on (seed, frame), so every theta sees the same draws
        z = np.random.default_rng([m.seed, self.n_frames]).standard_normal(m.n_points)
        pts = (self.theta + m.spread * z).reshape(-1, 1)
        return pts, np.arange(m.n_points), float(self.n_frames)


class GaussianCloudModel(ForwardModel):
    """Each frame is ``n_points`` draws of ``N(theta, spread^2)`` with a fixed seed."""

    name = "gaussian-cloud"
    speed_cap = np.inf
    dim = 1

    def __init__(self, n_points=100, spread=0.5, seed=0, half_width=50.0, theta=0.0):
        self.n_points = int(n_points)
        self.spread = float(spread)
        self.seed = int(seed)
        self.half_width = float(half_width)
        self.theta = float(theta)  # used when a parameter vector omits it

    def parameter_names(self):
        return ["theta"]

    @property
    def bounds(self):
        return (np.array([-self.half_width]), np.array([self.half_width]))

    def start(self, theta):
        return _CloudRun(check_theta(theta, ("theta",)).get("theta", self.theta), self)
