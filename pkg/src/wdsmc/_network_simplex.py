"""Primal network simplex for the balanced transportation problem.

The bipartite graph has ``m`` supply nodes, ``n`` demand nodes and one
artificial root.  The initial basis routes every supply to the root and every
demand from the root along artificial arcs; this tree is strongly feasible, and
the leaving-arc rule below (Cunningham) keeps it that way, which rules out
cycling under degenerate pivots.  Entering arcs are chosen by block search.

The tree is re-derived by a breadth-first pass after each pivot.  That costs
O(m + n) per pivot, which is cheaper than pricing for the dense problems solved
here and keeps the bookkeeping small.
"""

import math

import numpy as np
from numba import njit

STATUS_OPTIMAL = 0
STATUS_ITERATION_LIMIT = 1
STATUS_UNBOUNDED = 2


@njit(cache=True)
def _rebuild_tree(tree_arcs, source, target, cost, root, n_nodes,
                  parent, pred, pred_up, depth, pi):
    n_tree = tree_arcs.shape[0]
    degree = np.zeros(n_nodes + 1, dtype=np.int64)
    for k in range(n_tree):
        e = tree_arcs[k]
        degree[source[e] + 1] += 1
        degree[target[e] + 1] += 1
    for u in range(n_nodes):
        degree[u + 1] += degree[u]
    fill = degree[:-1].copy()
    adj = np.empty(2 * n_tree, dtype=np.int64)
    for k in range(n_tree):
        e = tree_arcs[k]
        adj[fill[source[e]]] = e
        fill[source[e]] += 1
        adj[fill[target[e]]] = e
        fill[target[e]] += 1

    visited = np.zeros(n_nodes, dtype=np.bool_)
    queue = np.empty(n_nodes, dtype=np.int64)
    queue[0] = root
    visited[root] = True
    parent[root] = -1
    pred[root] = -1
    depth[root] = 0
    pi[root] = 0.0
    head = 0
    tail = 1
    while head < tail:
        u = queue[head]
        head += 1
        for p in range(degree[u], degree[u + 1]):
            e = adj[p]
            v = target[e] if source[e] == u else source[e]
            if visited[v]:
                continue
            visited[v] = True
            parent[v] = u
            pred[v] = e
            depth[v] = depth[u] + 1
            if source[e] == v:
                # arc v -> u, potential convention pi[t] = pi[s] + c
                pred_up[v] = True
                pi[v] = pi[u] - cost[e]
            else:
                pred_up[v] = False
                pi[v] = pi[u] + cost[e]
            queue[tail] = v
            tail += 1
    return tail


@njit(cache=True)
def network_simplex(a, b, C, max_pivots, eps):
    """Solve min <C, G> s.t. G 1 = a, G^T 1 = b, G >= 0.

    ``a`` and ``b`` must be strictly positive with equal sums.  Returns
    ``(flows, status, n_pivots, max_artificial_flow)``.
    """
    m = a.shape[0]
    n = b.shape[0]
    n_real = m * n
    n_arcs = n_real + m + n
    root = m + n
    n_nodes = m + n + 1

    source = np.empty(n_arcs, dtype=np.int64)
    target = np.empty(n_arcs, dtype=np.int64)
    cost = np.empty(n_arcs, dtype=np.float64)
    flow = np.zeros(n_arcs, dtype=np.float64)
    in_tree = np.zeros(n_arcs, dtype=np.bool_)

    max_cost = 0.0
    for i in range(m):
        for j in range(n):
            e = i * n + j
            source[e] = i
            target[e] = m + j
            cost[e] = C[i, j]
            if C[i, j] > max_cost:
                max_cost = C[i, j]
    # every supply/demand pair has a direct arc, so any artificial cost above
    # max_cost keeps artificial routes out of the optimum
    art_cost = 2.0 * max_cost + 1.0

    tree_arcs = np.empty(m + n, dtype=np.int64)
    tree_pos = np.full(n_arcs, -1, dtype=np.int64)
    for i in range(m):
        e = n_real + i
        source[e] = i
        target[e] = root
        cost[e] = 0.0
        flow[e] = a[i]
        in_tree[e] = True
        tree_arcs[i] = e
        tree_pos[e] = i
    for j in range(n):
        e = n_real + m + j
        source[e] = root
        target[e] = m + j
        cost[e] = art_cost
        flow[e] = b[j]
        in_tree[e] = True
        tree_arcs[m + j] = e
        tree_pos[e] = m + j

    parent = np.empty(n_nodes, dtype=np.int64)
    pred = np.empty(n_nodes, dtype=np.int64)
    pred_up = np.zeros(n_nodes, dtype=np.bool_)
    depth = np.empty(n_nodes, dtype=np.int64)
    pi = np.empty(n_nodes, dtype=np.float64)
    _rebuild_tree(tree_arcs, source, target, cost, root, n_nodes,
                  parent, pred, pred_up, depth, pi)

    block = max(int(math.sqrt(n_real)), 8)
    next_arc = 0
    n_pivots = 0
    status = STATUS_OPTIMAL
    while True:
        # block search pricing over real arcs only; artificial arcs never re-enter
        best = -eps
        e_in = -1
        counted = 0
        for _ in range(n_real):
            e = next_arc
            next_arc += 1
            if next_arc == n_real:
                next_arc = 0
            if not in_tree[e]:
                rc = cost[e] + pi[source[e]] - pi[target[e]]
                if rc < best:
                    best = rc
                    e_in = e
            counted += 1
            if counted == block:
                if e_in >= 0:
                    break
                counted = 0
        if e_in < 0:
            break
        if n_pivots >= max_pivots:
            status = STATUS_ITERATION_LIMIT
            break
        n_pivots += 1

        first = source[e_in]
        second = target[e_in]
        u = first
        v = second
        while u != v:
            if depth[u] > depth[v]:
                u = parent[u]
            elif depth[v] > depth[u]:
                v = parent[v]
            else:
                u = parent[u]
                v = parent[v]
        join = u

        delta = np.inf
        u_out = -1
        u = first
        while u != join:
            if pred_up[u]:
                d = flow[pred[u]]
                if d < delta:
                    delta = d
                    u_out = u
            u = parent[u]
        u = second
        while u != join:
            if not pred_up[u]:
                d = flow[pred[u]]
                if d <= delta:
                    delta = d
                    u_out = u
            u = parent[u]
        if u_out < 0:
            status = STATUS_UNBOUNDED
            break

        e_out = pred[u_out]
        if delta > 0.0:
            flow[e_in] += delta
            u = first
            while u != join:
                if pred_up[u]:
                    flow[pred[u]] -= delta
                else:
                    flow[pred[u]] += delta
                u = parent[u]
            u = second
            while u != join:
                if pred_up[u]:
                    flow[pred[u]] += delta
                else:
                    flow[pred[u]] -= delta
                u = parent[u]
        flow[e_out] = 0.0

        k = tree_pos[e_out]
        tree_arcs[k] = e_in
        tree_pos[e_in] = k
        tree_pos[e_out] = -1
        in_tree[e_in] = True
        in_tree[e_out] = False
        _rebuild_tree(tree_arcs, source, target, cost, root, n_nodes,
                      parent, pred, pred_up, depth, pi)

    max_art = 0.0
    for e in range(n_real, n_arcs):
        if flow[e] > max_art:
            max_art = flow[e]
    flows = flow[:n_real].copy().reshape(m, n)
    return flows, status, n_pivots, max_art
