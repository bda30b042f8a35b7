"""Slow, obviously-correct reference implementations used only by the tests.

None of these import from heataco; they are written with plain loops so a
bug in a vectorised library routine cannot be mirrored here.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def dist_matrix(coords):
    n = len(coords)
    d = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            dx = coords[i][0] - coords[j][0]
            dy = coords[i][1] - coords[j][1]
            d[i, j] = math.sqrt(dx * dx + dy * dy)
    return d


def cycle_length_reversed(perm, d):
    total = 0.0
    n = len(perm)
    for t in range(n - 1, -1, -1):
        total += d[perm[t]][perm[t - 1]]
    return total


def exhaustive_optimum(d):
    n = len(d)
    best = math.inf
    for rest in itertools.permutations(range(1, n)):
        tour = (0,) + rest
        s = sum(d[tour[t]][tour[(t + 1) % n]] for t in range(n))
        best = min(best, s)
    return best


def undirected_edges(perm):
    n = len(perm)
    return {(min(perm[t], perm[(t + 1) % n]), max(perm[t], perm[(t + 1) % n])) for t in range(n)}


def best_single_2opt(perm, d):
    """Length after the best single 2-opt move (or the input length if none helps)."""
    n = len(perm)
    perm = list(perm)
    base = sum(d[perm[t]][perm[(t + 1) % n]] for t in range(n))
    best = base
    for i in range(n - 1):
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue
            new = perm[: i + 1] + perm[i + 1: j + 1][::-1] + perm[j + 1:]
            s = sum(d[new[t]][new[(t + 1) % n]] for t in range(n))
            best = min(best, s)
    return best


def improving_2opt_moves(perm, d, cand, rel_tol=1e-12):
    """All improving 2-opt moves where at least one new edge is a candidate edge."""
    n = len(perm)
    cset = {(i, j) for i in range(n) for j in cand[i]}
    base = sum(d[perm[t]][perm[(t + 1) % n]] for t in range(n))
    found = []
    for i in range(n):
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue
            a, b = perm[i], perm[i + 1]
            c, e = perm[j], perm[(j + 1) % n]
            if (a, c) not in cset and (c, a) not in cset and (b, e) not in cset and (e, b) not in cset:
                continue
            delta = d[a][c] + d[b][e] - d[a][b] - d[c][e]
            if delta < -rel_tol * base:
                found.append((i, j, delta))
    return found


def all_3opt_neighbours(perm):
    """Every tour reachable by removing three edges and reconnecting (all 7 kinds)."""
    n = len(perm)
    out = []
    for i in range(n):
        for j in range(i + 1, n):
            for k in range(j + 1, n):
                a = perm[: i + 1]
                b = perm[i + 1: j + 1]
                c = perm[j + 1: k + 1]
                tail = perm[k + 1:]
                for bb, cc, swap in itertools.product((b, b[::-1]), (c, c[::-1]), (False, True)):
                    mid = cc + bb if swap else bb + cc
                    out.append(a + mid + tail)
    return out


def greedy_reference(h, d):
    """Sort-and-insert greedy with union-find cycle check and nearest-endpoint completion."""
    n = len(h)
    scored = []
    for i in range(n):
        for j in range(i + 1, n):
            if h[i][j] > 0:
                s = h[i][j] / max(d[i][j], 1e-12)
                scored.append((-s, d[i][j], i, j))
    scored.sort()
    deg = [0] * n
    parent = list(range(n))
    adj = [[] for _ in range(n)]

    def find(x):
        while parent[x] != x:
            x = parent[x]
        return x

    added = 0
    for _, _, i, j in scored:
        if added == n:
            break
        if deg[i] >= 2 or deg[j] >= 2:
            continue
        ri, rj = find(i), find(j)
        if ri == rj and added < n - 1:
            continue
        parent[ri] = rj
        deg[i] += 1
        deg[j] += 1
        adj[i].append(j)
        adj[j].append(i)
        added += 1

    if added < n:
        adj = _complete_fragments(adj, d, n)
    tour = [0]
    prev = -1
    cur = 0
    for _ in range(n - 1):
        nxt = adj[cur][0] if adj[cur][0] != prev else adj[cur][1]
        tour.append(nxt)
        prev, cur = cur, nxt
    return tour


def _complete_fragments(adj, d, n):
    # fragments as paths (isolated nodes are paths of one node)
    seen = [False] * n
    paths = []
    for s in range(n):
        if seen[s] or len(adj[s]) == 2:
            continue
        path = [s]
        seen[s] = True
        prev, cur = -1, s
        while True:
            nxt = [v for v in adj[cur] if v != prev]
            if not nxt:
                break
            prev, cur = cur, nxt[0]
            path.append(cur)
            seen[cur] = True
        paths.append(path)
    # chain: start with the fragment containing the smallest free endpoint
    paths.sort(key=lambda p: min(p[0], p[-1]))
    first = paths.pop(0)
    if first[0] > first[-1]:
        first = first[::-1]
    chain = first
    while paths:
        end = chain[-1]
        best = None
        for idx, p in enumerate(paths):
            for flip in (False, True):
                head = p[-1] if flip else p[0]
                key = (d[end][head], head)
                if best is None or key < best[0]:
                    best = (key, idx, flip)
        _, idx, flip = best
        p = paths.pop(idx)
        chain = chain + (p[::-1] if flip else p)
    out = [[] for _ in range(n)]
    for t in range(n):
        u, v = chain[t], chain[(t + 1) % n]
        out[u].append(v)
        out[v].append(u)
    return out


def cross_entropy_naive(h, perm):
    n = len(h)
    tour = undirected_edges(perm)
    pos, neg = [], []
    for i in range(n):
        for j in range(i + 1, n):
            p = min(max(h[i][j], 1e-12), 1 - 1e-12)
            if (i, j) in tour:
                pos.append(-math.log(p))
            else:
                neg.append(-math.log(1 - p))
    ce = (sum(pos) + sum(neg)) / (len(pos) + len(neg))
    wce = sum(pos) / (2 * len(pos)) + sum(neg) / (2 * len(neg))
    return ce, wce


def support_naive(scores, gamma, delta=1e-12):
    m = max(scores)
    ht = [s / (m + delta) for s in scores]
    w = [x ** gamma for x in ht]
    z = sum(w)
    q = [x / z for x in w]
    return math.exp(-sum(x * math.log(x) for x in q if x > 0))
