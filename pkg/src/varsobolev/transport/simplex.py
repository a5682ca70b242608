"""Primal network simplex for the Hitchcock transportation problem.

Nodes ``0..m-1`` are sources, ``m..m+n-1`` sinks and ``m+n`` an artificial
root joined to every node by a big-M arc; those arcs form the starting
spanning tree.  Entering arcs are chosen by block search over the reduced
costs; ties for the leaving arc follow the strongly-feasible rule (last
blocking arc along the cycle orientation, starting from the apex).  The tree
is stored as an arc list and re-rooted after every pivot, which costs O(m+n)
per pivot and keeps the bookkeeping short.
"""

from __future__ import annotations

import numpy as np
from numba import njit

OPTIMAL = 0
ITERATION_LIMIT = 1
UNBOUNDED = 2


@njit(cache=True, nogil=True)
def _rebuild(N, root, tail, head, cost, parent, parent_arc, depth, pi, deg, start, adj, queue):
    nt = tail.shape[0]
    for v in range(N):
        deg[v] = 0
    for e in range(nt):
        deg[tail[e]] += 1
        deg[head[e]] += 1
    start[0] = 0
    for v in range(N):
        start[v + 1] = start[v] + deg[v]
        deg[v] = 0
    for e in range(nt):
        u = tail[e]
        w = head[e]
        adj[start[u] + deg[u]] = e
        deg[u] += 1
        adj[start[w] + deg[w]] = e
        deg[w] += 1
    parent[root] = -1
    parent_arc[root] = -1
    depth[root] = 0
    pi[root] = 0.0
    qh = 0
    qt = 1
    queue[0] = root
    while qh < qt:
        u = queue[qh]
        qh += 1
        for k in range(start[u], start[u + 1]):
            e = adj[k]
            if e == parent_arc[u]:
                continue
            if tail[e] == u:
                w = head[e]
                pi[w] = pi[u] + cost[e]
            else:
                w = tail[e]
                pi[w] = pi[u] - cost[e]
            parent[w] = u
            parent_arc[w] = e
            depth[w] = depth[u] + 1
            queue[qt] = w
            qt += 1


@njit(cache=True, nogil=True)
def network_simplex(a, b, C, max_pivots, rc_tol):
    """Solve min <pi, C> over couplings of ``a`` and ``b``.

    Returns ``(tail, head, flow, pi, status, pivots)`` for the final spanning
    tree; real arcs have ``tail < m <= head``.
    """
    m, n = C.shape
    N = m + n + 1
    root = m + n
    nt = N - 1
    big = (C.max() + 1.0) * (m + n)

    tail = np.empty(nt, np.int64)
    head = np.empty(nt, np.int64)
    flow = np.empty(nt, np.float64)
    cost = np.empty(nt, np.float64)
    for i in range(m):
        tail[i] = i
        head[i] = root
        flow[i] = a[i]
        cost[i] = big
    for j in range(n):
        tail[m + j] = root
        head[m + j] = m + j
        flow[m + j] = b[j]
        cost[m + j] = big

    parent = np.empty(N, np.int64)
    parent_arc = np.empty(N, np.int64)
    depth = np.empty(N, np.int64)
    pi = np.empty(N, np.float64)
    deg = np.empty(N, np.int64)
    start = np.empty(N + 1, np.int64)
    adj = np.empty(2 * nt, np.int64)
    queue = np.empty(N, np.int64)
    _rebuild(N, root, tail, head, cost, parent, parent_arc, depth, pi, deg, start, adj, queue)

    n_arcs = m * n
    block = max(int(np.sqrt(n_arcs)), 10)
    next_arc = 0
    pivots = 0
    status = OPTIMAL
    while True:
        # block search for the most negative reduced cost
        best = -rc_tol
        enter = -1
        scanned = 0
        while scanned < n_arcs:
            stop = min(scanned + block, n_arcs)
            for _ in range(scanned, stop):
                i = next_arc // n
                j = next_arc - i * n
                rc = C[i, j] + pi[i] - pi[m + j]
                if rc < best:
                    best = rc
                    enter = next_arc
                next_arc += 1
                if next_arc == n_arcs:
                    next_arc = 0
            scanned = stop
            if enter >= 0:
                break
        if enter < 0:
            break
        if pivots >= max_pivots:
            status = ITERATION_LIMIT
            break
        s = enter // n
        t = m + (enter - s * n)

        u = s
        v = t
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
        leave = -1
        w = s
        while w != join:
            e = parent_arc[w]
            if tail[e] == w and flow[e] < delta:
                delta = flow[e]
                leave = e
            w = parent[w]
        w = t
        while w != join:
            e = parent_arc[w]
            if head[e] == w and flow[e] <= delta:
                delta = flow[e]
                leave = e
            w = parent[w]
        if leave < 0:
            status = UNBOUNDED
            break

        if delta > 0.0:
            w = s
            while w != join:
                e = parent_arc[w]
                if tail[e] == w:
                    flow[e] -= delta
                else:
                    flow[e] += delta
                w = parent[w]
            w = t
            while w != join:
                e = parent_arc[w]
                if tail[e] == w:
                    flow[e] += delta
                else:
                    flow[e] -= delta
                w = parent[w]
        tail[leave] = s
        head[leave] = t
        flow[leave] = delta
        cost[leave] = C[s, t - m]
        _rebuild(N, root, tail, head, cost, parent, parent_arc, depth, pi, deg, start, adj, queue)
        pivots += 1

    return tail, head, flow, pi, status, pivots
