"""Reference tours for instances that ship without a benchmark tour.

Each run starts from a nearest-neighbour tour, descends with 2-opt and 3-opt,
then performs iterated local search: a windowed double-bridge kick (segments
``B C D`` after a random position become ``D C B``, a 4-edge change 3-opt
cannot undo in one move) followed by local re-optimisation around the kick,
kept only if it shortens the tour. The best tour over all runs is returned.
"""

from __future__ import annotations

import numba as nb
import numpy as np

from .heatmap import knn_candidate_lists
from .instance import Tour, tour_length
from .localsearch import _cycle_length, three_opt_kernel, two_opt_kernel
from .mmas import nearest_neighbor_kernel


@nb.njit(cache=True, nogil=True)
def _kick(tour, out, p, l1, l2, l3):
    n = tour.shape[0]
    w = l1 + l2 + l3
    for t in range(n):
        out[t] = tour[t]
    # window positions p+1 .. p+w hold B (l1), C (l2), D (l3); write D C B
    o = p + 1
    for s in range(l1 + l2, w):
        out[o % n] = tour[(p + 1 + s) % n]
        o += 1
    for s in range(l1, l1 + l2):
        out[o % n] = tour[(p + 1 + s) % n]
        o += 1
    for s in range(0, l1):
        out[o % n] = tour[(p + 1 + s) % n]
        o += 1


@nb.njit(cache=True, nogil=True)
def ils_kernel(tour, dist, cand, kick_pos, kick_len, max_passes):
    n = tour.shape[0]
    dlb = np.zeros(n, dtype=np.bool_)
    two_opt_kernel(tour, dist, cand, max_passes, False, dlb)
    dlb[:] = False
    three_opt_kernel(tour, dist, cand, max_passes, dlb)
    length = _cycle_length(tour, dist)
    trial = np.empty_like(tour)
    for kk in range(kick_pos.shape[0]):
        p = kick_pos[kk]
        l1 = kick_len[kk, 0]
        l2 = kick_len[kk, 1]
        l3 = kick_len[kk, 2]
        if l1 + l2 + l3 >= n - 1:
            continue
        _kick(tour, trial, p, l1, l2, l3)
        w = l1 + l2 + l3
        ends = (p, p + 1, p + l3, p + l3 + 1, p + l3 + l2, p + l3 + l2 + 1, p + w, p + w + 1)
        for phase in range(2):
            dlb[:] = True
            for q in ends:
                dlb[trial[q % n]] = False
            if phase == 0:
                two_opt_kernel(trial, dist, cand, max_passes, False, dlb, False)
            else:
                three_opt_kernel(trial, dist, cand, max_passes, dlb)
        new_len = _cycle_length(trial, dist)
        if new_len < length - 1e-12 * length:
            length = new_len
            for t in range(n):
                tour[t] = trial[t]
    return length


def reference_tour(dist: np.ndarray, runs: int = 50, kicks: int = 50, k: int = 40,
                   max_segment: int = 30, seed: int = 0, max_passes: int = 1000) -> Tour:
    """Best tour over ``runs`` independent iterated-local-search runs."""
    n = dist.shape[0]
    cand = np.ascontiguousarray(knn_candidate_lists(dist, k).neighbors)
    dist = np.ascontiguousarray(dist, dtype=np.float64)
    seg = max(1, min(max_segment, (n - 2) // 3))
    best, best_len = None, np.inf
    for r in range(runs):
        rng = np.random.default_rng([seed, r])
        tour = nearest_neighbor_kernel(dist, int(rng.integers(n)))
        kick_pos = rng.integers(0, n, size=kicks)
        kick_len = rng.integers(1, seg + 1, size=(kicks, 3))
        length = ils_kernel(tour, dist, cand, kick_pos, kick_len, max_passes)
        if length < best_len:
            best, best_len = tour.copy(), length
    return Tour(best, tour_length(best, dist))
