"""Reference computations the package is checked against.

None of these import the code under test beyond plain data containers.
"""

import itertools

import numpy as np
from scipy.optimize import linprog
from scipy.spatial.distance import cdist
from scipy.stats import truncnorm


def lp_transport_cost(xs, a, ys, b):
    """Optimal transport cost from a dense LP solved by HiGHS."""
    xs = np.asarray(xs, float).reshape(len(a), -1)
    ys = np.asarray(ys, float).reshape(len(b), -1)
    a = np.asarray(a, float) / np.sum(a)
    b = np.asarray(b, float) / np.sum(b)
    m, n = len(a), len(b)
    C = cdist(xs, ys)
    A_eq = np.zeros((m + n, m * n))
    for i in range(m):
        A_eq[i, i * n:(i + 1) * n] = 1.0
    for j in range(n):
        A_eq[m + j, j::n] = 1.0
    res = linprog(C.ravel(), A_eq=A_eq, b_eq=np.concatenate([a, b]),
                  bounds=(0, None), method="highs")
    assert res.status == 0, res.message
    return float(res.fun)


def vertex_enumeration_cost(xs, a, ys, b):
    """Minimum cost over all basic feasible solutions of the transport polytope.

    Every choice of ``m + n - 1`` cells whose equality system has full rank is
    a basis; feasible bases are the vertices.  Exponential, so m, n <= 3.
    """
    xs = np.asarray(xs, float).reshape(len(a), -1)
    ys = np.asarray(ys, float).reshape(len(b), -1)
    a = np.asarray(a, float) / np.sum(a)
    b = np.asarray(b, float) / np.sum(b)
    m, n = len(a), len(b)
    C = cdist(xs, ys).ravel()
    A = np.zeros((m + n, m * n))
    for i in range(m):
        A[i, i * n:(i + 1) * n] = 1.0
    for j in range(n):
        A[m + j, j::n] = 1.0
    rhs = np.concatenate([a, b])
    k = m + n - 1
    best = np.inf
    for cells in itertools.combinations(range(m * n), k):
        sub = A[:, cells]
        if np.linalg.matrix_rank(sub) < k:
            continue
        x, *_ = np.linalg.lstsq(sub, rhs, rcond=None)
        if np.max(np.abs(sub @ x - rhs)) > 1e-12 or np.min(x) < -1e-12:
            continue
        best = min(best, float(C[list(cells)] @ x))
    return best


def cdf_w1(x, wx, y, wy):
    """Integral of |F - G| over the merged support of two weighted 1D samples."""
    x, y = np.asarray(x, float).ravel(), np.asarray(y, float).ravel()
    wx = np.asarray(wx, float) / np.sum(wx)
    wy = np.asarray(wy, float) / np.sum(wy)
    grid = np.unique(np.concatenate([x, y]))
    F = np.array([wx[x <= g].sum() for g in grid[:-1]])
    G = np.array([wy[y <= g].sum() for g in grid[:-1]])
    return float(np.sum(np.abs(F - G) * np.diff(grid)))


def truncated_gaussian_posterior(y, noise_sd, lower, upper):
    """Mean and std of theta | y for y_t ~ N(theta, noise_sd^2) under U[lower, upper]."""
    y = np.asarray(y, float)
    mu = y.mean()
    sd = noise_sd / np.sqrt(len(y))
    dist = truncnorm((lower - mu) / sd, (upper - mu) / sd, loc=mu, scale=sd)
    return float(dist.mean()), float(dist.std())


def grid_posterior_mean(grid, log_target):
    lt = np.asarray(log_target, float)
    w = np.exp(lt - lt.max())
    w /= w.sum()
    return float(w @ grid), float(np.sqrt(w @ (grid - w @ grid) ** 2))
