"""Exact discrete optimal transport between weighted point clouds.

The ground cost is the Euclidean distance, so :func:`wasserstein_distance` is
the order-1 Wasserstein (earth mover's) distance.  Both inputs are normalized
to unit mass before solving, which makes the distance well defined when the
two clouds hold different numbers of particles.
"""

from dataclasses import dataclass

import numpy as np

from ._network_simplex import STATUS_OPTIMAL, network_simplex
from ._validation import check_finite, check_points, readonly
from .exceptions import DimensionMismatch, EmptyInput, NumericalFailure, ZeroMass

__all__ = [
    "DiscreteDistribution",
    "TransportPlan",
    "normalize",
    "cost_matrix",
    "solve_transport",
    "wasserstein_distance",
    "wasserstein_1d",
]

MARGINAL_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class DiscreteDistribution:
    """Weighted point cloud: atoms ``points[i]`` carrying mass ``masses[i]``.

    Parameters
    ----------
    points : array-like of shape (n, d) or (n,)
        Atom locations.  A 1D array is read as ``n`` scalar atoms.
    masses : array-like of shape (n,), optional
        Nonnegative masses with a positive sum.  Defaults to ``1/n`` each.
    """

    points: np.ndarray
    masses: np.ndarray = None

    def __post_init__(self):
        pts = check_finite(check_points(self.points), name="points")
        if self.masses is None:
            w = np.full(pts.shape[0], 1.0 / pts.shape[0])
        else:
            w = np.asarray(self.masses, dtype=np.float64).reshape(-1)
        if w.shape[0] != pts.shape[0]:
            raise ValueError(
                f"{pts.shape[0]} points but {w.shape[0]} masses")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("masses must be finite and nonnegative")
        if w.sum() <= 0:
            raise ZeroMass("total mass is zero")
        object.__setattr__(self, "points", readonly(pts))
        object.__setattr__(self, "masses", readonly(w))

    @property
    def dim(self):
        return self.points.shape[1]

    def __len__(self):
        return self.points.shape[0]

    def __eq__(self, other):
        if not isinstance(other, DiscreteDistribution):
            return NotImplemented
        return (self.points.shape == other.points.shape
                and np.array_equal(self.points, other.points)
                and np.array_equal(self.masses, other.masses))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class TransportPlan:
    """Optimal coupling between two normalized distributions."""

    flows: np.ndarray
    total_cost: float
    n_pivots: int = 0

    @property
    def total_flow(self):
        return float(self.flows.sum())


def normalize(dist):
    """Rescale masses to sum to one; points and order are unchanged."""
    total = dist.masses.sum()
    if total <= 0:
        raise ZeroMass("total mass is zero")
    return DiscreteDistribution(dist.points, dist.masses / total)


def cost_matrix(source, target):
    """Euclidean distances ``C[i, j] = ||u_i - v_j||``."""
    if source.dim != target.dim:
        raise DimensionMismatch(
            f"source has dimension {source.dim}, target {target.dim}")
    diff = source.points[:, None, :] - target.points[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def solve_transport(source, target):
    """Solve the transport LP exactly with the network simplex method.

    Returns
    -------
    TransportPlan
        ``flows`` has shape ``(len(source), len(target))``; rows sum to the
        normalized source masses and columns to the normalized target masses.

    Raises
    ------
    NumericalFailure
        If the simplex exceeds ``100 * (m + n)`` pivots or ends with flow left
        on an artificial arc.
    """
    C = cost_matrix(source, target)
    a = normalize(source).masses
    b = normalize(target).masses
    m, n = C.shape

    # zero-mass atoms carry no flow; solving without them keeps the
    # initial basis strongly feasible
    rows = np.flatnonzero(a > 0)
    cols = np.flatnonzero(b > 0)
    a_sub = a[rows] / a[rows].sum()
    b_sub = b[cols] / b[cols].sum()
    C_sub = np.ascontiguousarray(C[np.ix_(rows, cols)])

    n_pivots = 0
    if rows.size == 1:
        G_sub = b_sub[None, :].copy()
    elif cols.size == 1:
        G_sub = a_sub[:, None].copy()
    else:
        cap = 100 * (m + n)
        eps = 1e-12 * max(1.0, float(C_sub.max()))
        G_sub, status, n_pivots, max_art = network_simplex(
            a_sub, b_sub, C_sub, cap, eps)
        if status != STATUS_OPTIMAL:
            raise NumericalFailure(
                f"network simplex stopped with status {status} after "
                f"{n_pivots} pivots (cap {cap}) on a {m}x{n} problem")
        if max_art > MARGINAL_TOL:
            raise NumericalFailure(
                f"artificial flow {max_art:.3e} left in the basis")

    G = np.zeros((m, n))
    G[np.ix_(rows, cols)] = G_sub
    total = float(np.sum(C * G))
    return TransportPlan(flows=G, total_cost=total, n_pivots=int(n_pivots))


def wasserstein_distance(source, target):
    """Transport cost divided by total transported mass."""
    plan = solve_transport(source, target)
    return plan.total_cost / plan.total_flow


def wasserstein_1d(source, target):
    """Order-1 Wasserstein distance on the line via the CDF integral.

    Equal to :func:`wasserstein_distance` for ``d == 1`` but runs in
    O((m + n) log(m + n)).
    """
    if source.dim != 1 or target.dim != 1:
        raise DimensionMismatch(
            f"wasserstein_1d needs d == 1, got {source.dim} and {target.dim}")
    if len(source) == 0 or len(target) == 0:
        raise EmptyInput("empty distribution")
    u = source.points[:, 0]
    v = target.points[:, 0]
    pu = source.masses / source.masses.sum()
    pv = target.masses / target.masses.sum()

    u_order = np.argsort(u, kind="stable")
    v_order = np.argsort(v, kind="stable")
    u_sorted = u[u_order]
    v_sorted = v[v_order]
    grid = np.sort(np.concatenate([u_sorted, v_sorted]), kind="stable")
    widths = np.diff(grid)

    cum_u = np.concatenate([[0.0], np.cumsum(pu[u_order])])
    cum_v = np.concatenate([[0.0], np.cumsum(pv[v_order])])
    F_u = cum_u[np.searchsorted(u_sorted, grid[:-1], side="right")]
    F_v = cum_v[np.searchsorted(v_sorted, grid[:-1], side="right")]
    return float(np.sum(np.abs(F_u - F_v) * widths))
