"""Candidate-restricted 2-opt and 3-opt.

Tours are held as a node array plus a position index. Moves are scanned with
first improvement over a node-order sweep with don't-look bits; a *pass* is
one sweep over the nodes whose bit is clear. Every accepted move shortens the
tour by more than ``1e-12`` relative to its current length.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numba as nb
import numpy as np

from .instance import Tour, tour_length

REL_TOL = 1e-12


class LocalSearch(str, enum.Enum):
    NONE = "none"
    TWO_OPT = "two_opt"
    THREE_OPT = "three_opt"


LS_CODES = {LocalSearch.NONE: 0, LocalSearch.TWO_OPT: 2, LocalSearch.THREE_OPT: 3}


@dataclass(frozen=True)
class LsParams:
    max_passes_2opt: int = 50
    max_passes_3opt: int = 10
    strategy: str = "first_improvement"

    def __post_init__(self) -> None:
        if self.max_passes_2opt < 1 or self.max_passes_3opt < 1:
            raise ValueError("pass caps must be at least 1")
        if self.strategy not in ("first_improvement", "best_improvement"):
            raise ValueError(f"unknown strategy {self.strategy!r}")

    @property
    def best_improvement(self) -> bool:
        return self.strategy == "best_improvement"


# ----------------------------------------------------------------------------
# kernels


@nb.njit(cache=True, nogil=True)
def _reverse(tour, pos, i, j):
    """Reverse tour positions i..j (cyclic, inclusive), or the complement if shorter."""
    n = tour.shape[0]
    inner = (j - i) % n + 1
    if 2 * inner > n:
        i, j = (j + 1) % n, (i - 1) % n
        inner = n - inner
    for _ in range(inner // 2):
        a = tour[i]
        b = tour[j]
        tour[i] = b
        pos[b] = i
        tour[j] = a
        pos[a] = j
        i += 1
        if i == n:
            i = 0
        j -= 1
        if j < 0:
            j = n - 1


@nb.njit(cache=True, nogil=True)
def _reverse_linear(tour, pos, i, j):
    """Reverse positions i..j with i <= j, no wrap and no complement trick."""
    while i < j:
        a = tour[i]
        b = tour[j]
        tour[i] = b
        pos[b] = i
        tour[j] = a
        pos[a] = j
        i += 1
        j -= 1


@nb.njit(cache=True, nogil=True)
def _cycle_length(tour, dist):
    n = tour.shape[0]
    s = 0.0
    for t in range(n - 1):
        s += dist[tour[t], tour[t + 1]]
    s += dist[tour[n - 1], tour[0]]
    return s


@nb.njit(cache=True, nogil=True)
def two_opt_kernel(tour, dist, cand, max_passes, best_improvement, dlb, verify=True):
    """In-place 2-opt; returns the number of completed passes.

    ``dlb`` holds the don't-look bits (all clear for a fresh search); it is updated in place.
    With ``verify`` a quiet pass that skipped nodes is followed by one sweep with
    every bit cleared, so the result is a true candidate-restricted 2-opt optimum.
    """
    n = tour.shape[0]
    if n < 4:
        return 0
    k = cand.shape[1]
    pos = np.empty(n, dtype=np.int64)
    for t in range(n):
        pos[tour[t]] = t
    length = _cycle_length(tour, dist)
    passes = 0
    while passes < max_passes:
        improved_pass = False
        skipped = False
        for a in range(n):
            if dlb[a]:
                skipped = True
                continue
            improved_node = True
            while improved_node:
                improved_node = False
                best_delta = -REL_TOL * max(length, 1.0)
                best_i = -1
                best_j = -1
                for direction in range(2):
                    pa = pos[a]
                    if direction == 0:
                        b = tour[(pa + 1) % n]
                    else:
                        b = tour[(pa - 1) % n]
                    d_ab = dist[a, b]
                    for r in range(k):
                        c = cand[a, r]
                        if c == b or c == a:
                            continue
                        pc = pos[c]
                        if direction == 0:
                            e = tour[(pc + 1) % n]
                        else:
                            e = tour[(pc - 1) % n]
                        if e == a:
                            continue
                        delta = dist[a, c] + dist[b, e] - d_ab - dist[c, e]
                        if delta < best_delta:
                            best_delta = delta
                            if direction == 0:
                                # a b ... c e  ->  a c ... b e
                                best_i = (pa + 1) % n
                                best_j = pc
                            else:
                                # e c ... b a  ->  e b ... c a
                                best_i = pc
                                best_j = (pa - 1) % n
                            if not best_improvement:
                                break
                    if best_i >= 0 and not best_improvement:
                        break
                if best_i >= 0:
                    u = tour[best_i]
                    v = tour[best_j]
                    pu = tour[(best_i - 1) % n]
                    nv = tour[(best_j + 1) % n]
                    _reverse(tour, pos, best_i, best_j)
                    length += best_delta
                    dlb[u] = False
                    dlb[v] = False
                    dlb[pu] = False
                    dlb[nv] = False
                    improved_node = True
                    improved_pass = True
            dlb[a] = True
        passes += 1
        if not improved_pass:
            if not (verify and skipped):
                break
            dlb[:] = False
    return passes


@nb.njit(cache=True, nogil=True)
def _edge_pos(tour, pos, u, v):
    """Position p such that (tour[p], tour[p+1]) is the tour edge {u, v}."""
    n = tour.shape[0]
    pu = pos[u]
    if tour[(pu + 1) % n] == v:
        return pu
    return pos[v]


@nb.njit(cache=True, nogil=True)
def _best_reconnection(tour, dist, p1, p2, p3):
    """Best of the seven 3-opt reconnections for edges at sorted positions p1<p2<p3."""
    n = tour.shape[0]
    a = tour[p1]
    b = tour[p1 + 1]
    c = tour[p2]
    d = tour[p2 + 1]
    e = tour[p3]
    f = tour[(p3 + 1) % n]
    base = dist[a, b] + dist[c, d] + dist[e, f]
    best = 0.0
    kind = 0
    cands = (
        dist[a, c] + dist[b, d] + dist[e, f],
        dist[a, b] + dist[c, e] + dist[d, f],
        dist[a, e] + dist[d, c] + dist[b, f],
        dist[a, c] + dist[b, e] + dist[d, f],
        dist[a, d] + dist[e, b] + dist[c, f],
        dist[a, d] + dist[e, c] + dist[b, f],
        dist[a, e] + dist[d, b] + dist[c, f],
    )
    for t in range(7):
        delta = cands[t] - base
        if delta < best:
            best = delta
            kind = t + 1
    return best, kind


@nb.njit(cache=True, nogil=True)
def _apply_reconnection(tour, pos, p1, p2, p3, kind):
    s1 = p1 + 1
    if kind == 1:
        _reverse_linear(tour, pos, s1, p2)
    elif kind == 2:
        _reverse_linear(tour, pos, p2 + 1, p3)
    elif kind == 3:
        _reverse_linear(tour, pos, s1, p3)
    elif kind == 4:
        _reverse_linear(tour, pos, s1, p2)
        _reverse_linear(tour, pos, p2 + 1, p3)
    else:
        # kinds 5-7 start from a e..d c..b f
        _reverse_linear(tour, pos, s1, p3)
        split = s1 + (p3 - p2)
        if kind == 5 or kind == 6:
            _reverse_linear(tour, pos, s1, split - 1)
        if kind == 5 or kind == 7:
            _reverse_linear(tour, pos, split, p3)


@nb.njit(cache=True, nogil=True)
def _sort3(x, y, z):
    if x > y:
        x, y = y, x
    if y > z:
        y, z = z, y
    if x > y:
        x, y = y, x
    return x, y, z


@nb.njit(cache=True, nogil=True)
def three_opt_kernel(tour, dist, cand, max_passes, dlb):
    """In-place candidate-restricted sequential 3-opt; returns completed passes.

    The search is driven by t1 -> t2 (tour edge), t3 in cand(t2), t4 a tour
    neighbour of t3, t5 in cand(t4), t6 a tour neighbour of t5, pruned by
    positive partial gain. For each triple of removed edges all seven
    reconnections are evaluated; with two distinct removed edges the 2-opt
    reconnection is evaluated instead.
    """
    n = tour.shape[0]
    if n < 5:
        return 0
    k = cand.shape[1]
    pos = np.empty(n, dtype=np.int64)
    for t in range(n):
        pos[tour[t]] = t
    length = _cycle_length(tour, dist)
    passes = 0
    while passes < max_passes:
        improved_pass = False
        for t1 in range(n):
            if dlb[t1]:
                continue
            found = True
            while found:
                found = False
                tol = -REL_TOL * max(length, 1.0)
                for dir1 in range(2):
                    if found:
                        break
                    p = pos[t1]
                    t2 = tour[(p + 1) % n] if dir1 == 0 else tour[(p - 1) % n]
                    e1 = _edge_pos(tour, pos, t1, t2)
                    d12 = dist[t1, t2]
                    for r in range(k):
                        if found:
                            break
                        t3 = cand[t2, r]
                        if t3 == t1 or t3 == t2:
                            continue
                        g1 = d12 - dist[t2, t3]
                        for dir2 in range(2):
                            if found:
                                break
                            q = pos[t3]
                            t4 = tour[(q + 1) % n] if dir2 == 0 else tour[(q - 1) % n]
                            if t4 == t2:
                                continue
                            e2 = _edge_pos(tour, pos, t3, t4)
                            if e2 == e1:
                                continue
                            # plain 2-opt on the two removed edges
                            lo = min(e1, e2)
                            hi = max(e1, e2)
                            a = tour[lo]
                            b = tour[lo + 1]
                            c = tour[hi]
                            d = tour[(hi + 1) % n]
                            delta = dist[a, c] + dist[b, d] - dist[a, b] - dist[c, d]
                            if delta < tol:
                                _reverse(tour, pos, lo + 1, hi)
                                length += delta
                                dlb[a] = False
                                dlb[b] = False
                                dlb[c] = False
                                dlb[d] = False
                                found = True
                                break
                            if g1 <= 0.0:
                                continue
                            g2 = g1 + dist[t3, t4]
                            for s in range(k):
                                t5 = cand[t4, s]
                                if t5 == t3 or t5 == t4:
                                    continue
                                if g2 - dist[t4, t5] <= 0.0:
                                    continue
                                for dir3 in range(2):
                                    w = pos[t5]
                                    t6 = tour[(w + 1) % n] if dir3 == 0 else tour[(w - 1) % n]
                                    if t6 == t4:
                                        continue
                                    e3 = _edge_pos(tour, pos, t5, t6)
                                    if e3 == e1 or e3 == e2:
                                        continue
                                    p1, p2, p3 = _sort3(e1, e2, e3)
                                    delta, kind = _best_reconnection(tour, dist, p1, p2, p3)
                                    if delta < tol:
                                        ends = (
                                            tour[p1], tour[p1 + 1], tour[p2],
                                            tour[p2 + 1], tour[p3], tour[(p3 + 1) % n],
                                        )
                                        _apply_reconnection(tour, pos, p1, p2, p3, kind)
                                        length += delta
                                        for v in ends:
                                            dlb[v] = False
                                        found = True
                                        break
                                if found:
                                    break
                if found:
                    improved_pass = True
            dlb[t1] = True
        passes += 1
        if not improved_pass:
            break
    return passes


@nb.njit(cache=True, nogil=True)
def improve_kernel(tour, dist, cand, mode, max2, max3, best_improvement):
    """Dispatch used by the ant colony: mode 0 none, 2 two-opt, 3 two-opt then three-opt."""
    n = tour.shape[0]
    if mode >= 2:
        two_opt_kernel(tour, dist, cand, max2, best_improvement, np.zeros(n, dtype=np.bool_))
    if mode == 3:
        three_opt_kernel(tour, dist, cand, max3, np.zeros(n, dtype=np.bool_))


# ----------------------------------------------------------------------------
# public wrappers


def _as_tour_array(tour) -> np.ndarray:
    perm = tour.perm if isinstance(tour, Tour) else tour
    return np.array(perm, dtype=np.int64, copy=True)


def two_opt(tour, dist: np.ndarray, candidates, params: LsParams = LsParams()) -> Tour:
    arr = _as_tour_array(tour)
    two_opt_kernel(arr, dist, _cand_array(candidates), params.max_passes_2opt, params.best_improvement,
                   np.zeros(arr.shape[0], dtype=np.bool_))
    return Tour(arr, tour_length(arr, dist))


def three_opt(tour, dist: np.ndarray, candidates, params: LsParams = LsParams()) -> Tour:
    """2-opt to a local optimum, then candidate-restricted 3-opt."""
    arr = _as_tour_array(tour)
    improve_kernel(
        arr, dist, _cand_array(candidates), 3,
        params.max_passes_2opt, params.max_passes_3opt, params.best_improvement,
    )
    return Tour(arr, tour_length(arr, dist))


def local_search(tour, dist: np.ndarray, candidates, mode: LocalSearch | str, params: LsParams = LsParams()) -> Tour:
    mode = LocalSearch(mode)
    if mode is LocalSearch.NONE:
        arr = _as_tour_array(tour)
        return Tour(arr, tour_length(arr, dist))
    if mode is LocalSearch.TWO_OPT:
        return two_opt(tour, dist, candidates, params)
    return three_opt(tour, dist, candidates, params)


def full_candidates(n: int) -> np.ndarray:
    """Every other node as a candidate; exhaustive neighbourhoods for small n."""
    idx = np.arange(n)
    return np.array([np.delete(idx, i) for i in range(n)], dtype=np.int64)


def _cand_array(candidates) -> np.ndarray:
    arr = getattr(candidates, "neighbors", candidates)
    return np.ascontiguousarray(arr, dtype=np.int64)
