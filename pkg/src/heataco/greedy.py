"""Greedy edge-merge decoding of a heatmap.

Edges with positive confidence are ranked by ``h_ij / d_ij`` (ties: shorter
edge first, then lexicographic ``(i, j)``) and inserted when both endpoints
still have degree below two and the edge does not close a cycle shorter than
``n``. Whatever fragments remain are chained by repeatedly walking to the
nearest free endpoint of another fragment.
"""

from __future__ import annotations

import numba as nb
import numpy as np

from .heatmap import Heatmap
from .instance import Tour, tour_length, validate_tour

DIST_GUARD = 1e-12


def greedy_score(h: float, d: float) -> float:
    return h / max(d, DIST_GUARD)


def ranked_edges(heatmap: Heatmap, dist: np.ndarray) -> np.ndarray:
    """Positive-confidence edges ``(i, j)``, ``i < j``, in insertion order."""
    h = heatmap.h
    i, j = np.nonzero(np.triu(h > 0.0, k=1))
    d = dist[i, j]
    s = h[i, j].astype(np.float64) / np.maximum(d, DIST_GUARD)
    order = np.lexsort((j, i, d, -s))
    return np.stack([i[order], j[order]], axis=1).astype(np.int64)


@nb.njit(cache=True)
def _find(parent, x):
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


@nb.njit(cache=True)
def _merge(edges, n):
    """Returns the adjacency (n, 2) with -1 for free slots, and the edge count."""
    adj = np.full((n, 2), -1, dtype=np.int64)
    deg = np.zeros(n, dtype=np.int64)
    parent = np.arange(n)
    count = 0
    for e in range(edges.shape[0]):
        u = edges[e, 0]
        v = edges[e, 1]
        if deg[u] >= 2 or deg[v] >= 2:
            continue
        ru = _find(parent, u)
        rv = _find(parent, v)
        if ru == rv and count < n - 1:
            continue
        adj[u, deg[u]] = v
        adj[v, deg[v]] = u
        deg[u] += 1
        deg[v] += 1
        parent[ru] = rv
        count += 1
        if count == n:
            break
    return adj, count


@nb.njit(cache=True)
def _walk_fragment(adj, start, visited, out, pos):
    """Append the path starting at endpoint ``start``; returns (new pos, last node)."""
    prev = -1
    cur = start
    while True:
        out[pos] = cur
        pos += 1
        visited[cur] = True
        nxt = -1
        for s in range(2):
            c = adj[cur, s]
            if c != -1 and c != prev and not visited[c]:
                nxt = c
                break
        if nxt == -1:
            return pos, cur
        prev = cur
        cur = nxt


@nb.njit(cache=True)
def _complete(adj, dist):
    n = adj.shape[0]
    out = np.empty(n, dtype=np.int64)
    visited = np.zeros(n, dtype=np.bool_)
    free = np.zeros(n, dtype=np.bool_)
    for v in range(n):
        if adj[v, 1] == -1:
            free[v] = True
    # a closed Hamiltonian cycle has no free endpoint
    start = 0
    for v in range(n):
        if free[v]:
            start = v
            break
    pos, last = _walk_fragment(adj, start, visited, out, 0)
    while pos < n:
        best = -1
        best_d = np.inf
        for v in range(n):
            if free[v] and not visited[v] and dist[last, v] < best_d:
                best_d = dist[last, v]
                best = v
        pos, last = _walk_fragment(adj, best, visited, out, pos)
    return out


def greedy_merge(heatmap: Heatmap, dist: np.ndarray) -> Tour:
    n = heatmap.n
    if dist.shape[0] != n:
        raise ValueError(f"heatmap has n={n}, distance matrix has n={dist.shape[0]}")
    adj, _ = _merge(ranked_edges(heatmap, dist), n)
    perm = _complete(adj, np.ascontiguousarray(dist, dtype=np.float64))
    problem = validate_tour(perm, n)
    if problem is not None:
        raise AssertionError(f"greedy merge produced an invalid tour: {problem}")
    return Tour(perm, tour_length(perm, dist))
