"""Max-Min Ant System with a heatmap prior in the transition rule.

An ant at node ``i`` moves to an unvisited ``j`` with probability proportional
to ``tau_ij**alpha * eta_ij**beta * h_ij**gamma`` where ``eta = 1/d`` and ``h``
is the clipped/floored heatmap. Only the candidate list of ``i`` is scored
unless all of it is visited, in which case every unvisited node is.

``gamma = 0`` (or no heatmap at all) is plain MMAS; the two are bitwise
identical because the heatmap factor is then exactly 1.

Randomness: iteration ``t`` draws one ``(m, n)`` block of uniforms and ``m``
start nodes from ``numpy.random.default_rng([seed, t])``; ant ``a`` only reads
row ``a``. Results therefore do not depend on how ants are spread over threads.
"""

from __future__ import annotations

import enum
import json
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numba as nb
import numpy as np

from .heatmap import CandidateLists, FlooredHeatmap
from .instance import Tour, tour_length, validate_tour
from .localsearch import LS_CODES, LocalSearch, LsParams, improve_kernel

log = logging.getLogger(__name__)

ETA_GUARD = 1e-12
GAMMA_GRID = (0.1, 0.5, 1.0, 2.0)


class EvaporationScope(str, enum.Enum):
    FULL_MATRIX = "full_matrix"
    CANDIDATE_BASED = "candidate_based"


class Deposit(str, enum.Enum):
    GLOBAL_BEST = "global_best"
    ITERATION_BEST = "iteration_best"


@dataclass(frozen=True)
class MmasParams:
    alpha: float = 1.0
    beta: float = 2.0
    gamma: float = 1.0
    rho: float = 0.02
    m: int = 32
    iterations: int = 5000
    seed: int = 0
    evaporation_scope: EvaporationScope | None = None  # None: candidate-based iff local search is on
    local_search: LocalSearch = LocalSearch.NONE
    deposit: Deposit = Deposit.GLOBAL_BEST
    threads: int = 1
    check_bounds: bool = False

    def __post_init__(self) -> None:
        if self.alpha < 0 or self.beta < 0 or self.gamma < 0:
            raise ValueError("alpha, beta and gamma must be non-negative")
        if not 0.0 < self.rho < 1.0:
            raise ValueError("rho must lie in (0, 1)")
        if self.m < 1 or self.iterations < 1:
            raise ValueError("m and iterations must be at least 1")
        if self.threads < 1:
            raise ValueError("threads must be at least 1")
        object.__setattr__(self, "local_search", LocalSearch(self.local_search))
        object.__setattr__(self, "deposit", Deposit(self.deposit))
        if self.evaporation_scope is not None:
            object.__setattr__(self, "evaporation_scope", EvaporationScope(self.evaporation_scope))

    @property
    def scope(self) -> EvaporationScope:
        if self.evaporation_scope is not None:
            return self.evaporation_scope
        if self.local_search is LocalSearch.NONE:
            return EvaporationScope.FULL_MATRIX
        return EvaporationScope.CANDIDATE_BASED


@dataclass
class PheromoneState:
    tau: np.ndarray
    tau_min: float
    tau_max: float
    best_tour: Tour | None = None
    iteration: int = 0

    @property
    def n(self) -> int:
        return int(self.tau.shape[0])

    def bounds_hold(self) -> bool:
        off = ~np.eye(self.n, dtype=bool)
        vals = self.tau[off]
        return bool(vals.min() >= self.tau_min and vals.max() <= self.tau_max)


@dataclass
class ConvergenceTrace:
    best_lengths: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.best_lengths)

    def to_jsonl(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            for t, (length, sec) in enumerate(zip(self.best_lengths, self.seconds), start=1):
                fh.write(json.dumps({"iteration": t, "best_length": length, "elapsed_seconds": sec}) + "\n")

    @classmethod
    def from_jsonl(cls, path: str | Path) -> "ConvergenceTrace":
        trace = cls()
        with open(path) as fh:
            for line in fh:
                if line.strip():
                    rec = json.loads(line)
                    trace.best_lengths.append(float(rec["best_length"]))
                    trace.seconds.append(float(rec["elapsed_seconds"]))
        return trace


# ----------------------------------------------------------------------------
# kernels


@nb.njit(cache=True, nogil=True, inline="always")
def _pow(x, e):
    if e == 1.0:
        return x
    if e == 0.0:
        return 1.0
    if e == 2.0:
        return x * x
    return x**e


@nb.njit(cache=True, nogil=True)
def _weight(tau_ij, d_ij, h_ij, alpha, beta, gamma, use_heat):
    w = _pow(tau_ij, alpha) * _pow(1.0 / max(d_ij, ETA_GUARD), beta)
    if use_heat:
        w = w * _pow(h_ij, gamma)
    return w


@nb.njit(cache=True, nogil=True)
def candidate_weights(tau, dist, ht, cand, alpha, beta, gamma, use_heat):
    n, k = cand.shape
    out = np.empty((n, k))
    for i in range(n):
        for r in range(k):
            j = cand[i, r]
            h = ht[i, j] if use_heat else 1.0
            out[i, r] = _weight(tau[i, j], dist[i, j], h, alpha, beta, gamma, use_heat)
    return out


@nb.njit(cache=True, nogil=True)
def _sample(weights, count, u):
    total = 0.0
    for t in range(count):
        total += weights[t]
    if not (total > 0.0) or not np.isfinite(total):
        return min(int(u * count), count - 1)
    target = u * total
    acc = 0.0
    last = 0
    for t in range(count):
        w = weights[t]
        if w > 0.0:
            acc += w
            last = t
            if acc > target:
                return t
    return last


@nb.njit(cache=True, nogil=True)
def _argmax(weights, count):
    best = 0
    for t in range(1, count):
        if weights[t] > weights[best]:
            best = t
    return best


@nb.njit(cache=True, nogil=True)
def construct_kernel(tour, start, uniforms, tau, dist, ht, cand, choice, alpha, beta, gamma, use_heat, greedy):
    """Build one tour into ``tour``; ``uniforms[s]`` drives step ``s``."""
    n = tour.shape[0]
    k = cand.shape[1]
    visited = np.zeros(n, dtype=np.bool_)
    unv = np.arange(n)
    where = np.arange(n)
    remaining = n
    w_buf = np.empty(max(n, k))
    j_buf = np.empty(max(n, k), dtype=np.int64)

    cur = start
    tour[0] = cur
    visited[cur] = True
    # swap-remove cur from the unvisited list
    remaining -= 1
    last = unv[remaining]
    unv[where[cur]] = last
    where[last] = where[cur]

    for step in range(1, n):
        count = 0
        for r in range(k):
            j = cand[cur, r]
            if not visited[j]:
                w_buf[count] = choice[cur, r]
                j_buf[count] = j
                count += 1
        if count == 0:
            for t in range(remaining):
                j = unv[t]
                h = ht[cur, j] if use_heat else 1.0
                w_buf[count] = _weight(tau[cur, j], dist[cur, j], h, alpha, beta, gamma, use_heat)
                j_buf[count] = j
                count += 1
        if greedy:
            pick = _argmax(w_buf, count)
        else:
            pick = _sample(w_buf, count, uniforms[step])
        nxt = j_buf[pick]
        tour[step] = nxt
        visited[nxt] = True
        remaining -= 1
        last = unv[remaining]
        unv[where[nxt]] = last
        where[last] = where[nxt]
        cur = nxt


@nb.njit(cache=True, nogil=True)
def _ant(a, tours, lengths, starts, uniforms, tau, dist, ht, cand, choice,
         alpha, beta, gamma, use_heat, ls_mode, max2, max3, best_imp):
    tour = tours[a]
    construct_kernel(tour, starts[a], uniforms[a], tau, dist, ht, cand, choice,
                     alpha, beta, gamma, use_heat, False)
    if ls_mode > 0:
        improve_kernel(tour, dist, cand, ls_mode, max2, max3, best_imp)
    n = tour.shape[0]
    s = 0.0
    for t in range(n - 1):
        s += dist[tour[t], tour[t + 1]]
    lengths[a] = s + dist[tour[n - 1], tour[0]]


@nb.njit(cache=True, nogil=True)
def colony_serial(tours, lengths, starts, uniforms, tau, dist, ht, cand, choice,
                  alpha, beta, gamma, use_heat, ls_mode, max2, max3, best_imp):
    for a in range(tours.shape[0]):
        _ant(a, tours, lengths, starts, uniforms, tau, dist, ht, cand, choice,
             alpha, beta, gamma, use_heat, ls_mode, max2, max3, best_imp)


@nb.njit(cache=True, nogil=True, parallel=True)
def colony_parallel(tours, lengths, starts, uniforms, tau, dist, ht, cand, choice,
                    alpha, beta, gamma, use_heat, ls_mode, max2, max3, best_imp):
    for a in nb.prange(tours.shape[0]):
        _ant(a, tours, lengths, starts, uniforms, tau, dist, ht, cand, choice,
             alpha, beta, gamma, use_heat, ls_mode, max2, max3, best_imp)


@nb.njit(cache=True, nogil=True)
def update_kernel(tau, elite, elite_len, rho, tau_min, tau_max, full_evap, full_clamp, eu, ev):
    n = tau.shape[0]
    keep = 1.0 - rho
    if full_evap:
        for i in range(n):
            for j in range(n):
                tau[i, j] *= keep
    else:
        for e in range(eu.shape[0]):
            u = eu[e]
            v = ev[e]
            val = tau[u, v] * keep
            tau[u, v] = val
            tau[v, u] = val
    delta = 1.0 / elite_len
    for t in range(n):
        u = elite[t]
        v = elite[(t + 1) % n]
        val = tau[u, v] + delta
        tau[u, v] = val
        tau[v, u] = val
    if full_evap or full_clamp:
        for i in range(n):
            for j in range(n):
                x = tau[i, j]
                if x < tau_min:
                    tau[i, j] = tau_min
                elif x > tau_max:
                    tau[i, j] = tau_max
    else:
        for e in range(eu.shape[0]):
            u = eu[e]
            v = ev[e]
            x = min(max(tau[u, v], tau_min), tau_max)
            tau[u, v] = x
            tau[v, u] = x
        for t in range(n):
            u = elite[t]
            v = elite[(t + 1) % n]
            x = min(max(tau[u, v], tau_min), tau_max)
            tau[u, v] = x
            tau[v, u] = x


@nb.njit(cache=True, nogil=True)
def nearest_neighbor_kernel(dist, start):
    n = dist.shape[0]
    tour = np.empty(n, dtype=np.int64)
    visited = np.zeros(n, dtype=np.bool_)
    cur = start
    tour[0] = cur
    visited[cur] = True
    for step in range(1, n):
        best = -1
        best_d = np.inf
        for j in range(n):
            if not visited[j] and dist[cur, j] < best_d:
                best_d = dist[cur, j]
                best = j
        tour[step] = best
        visited[best] = True
        cur = best
    return tour


# ----------------------------------------------------------------------------
# python surface


def nearest_neighbor_tour(dist: np.ndarray, start: int = 0) -> Tour:
    perm = nearest_neighbor_kernel(dist, start)
    return Tour(perm, tour_length(perm, dist))


def bounds_for(best_length: float, rho: float, n: int) -> tuple[float, float]:
    tau_max = 1.0 / (rho * best_length)
    return tau_max / (2.0 * n), tau_max


def init_state(dist: np.ndarray, params: MmasParams) -> PheromoneState:
    """Uniform pheromone at the upper bound implied by a nearest-neighbour tour."""
    n = dist.shape[0]
    warm = nearest_neighbor_tour(dist, 0)
    tau_min, tau_max = bounds_for(warm.length, params.rho, n)
    return PheromoneState(np.full((n, n), tau_max), tau_min, tau_max)


def _heat_inputs(floored: FlooredHeatmap | None, params: MmasParams, n: int):
    # without a heatmap the kernels get a 1x1 placeholder they never index
    if floored is None:
        return np.ones((1, 1)), False
    if floored.n != n:
        raise ValueError(f"heatmap has n={floored.n}, instance has n={n}")
    return floored.h_tilde, True


def transition_distribution(i: int, visited, state: PheromoneState, dist: np.ndarray,
                            floored: FlooredHeatmap | None, candidates: CandidateLists | np.ndarray,
                            params: MmasParams) -> tuple[np.ndarray, np.ndarray]:
    """Next-node distribution for an ant at ``i``: ``(nodes, probabilities)``.

    ``visited`` is a boolean mask or an iterable of visited nodes.
    """
    n = dist.shape[0]
    mask = np.zeros(n, dtype=bool)
    visited = np.asarray(visited)
    if visited.dtype == bool and visited.shape == (n,):
        mask |= visited
    else:
        mask[visited.astype(np.int64)] = True
    mask[i] = True
    if mask.all():
        raise ValueError("no unvisited node left")
    cand = getattr(candidates, "neighbors", candidates)
    ht, use_heat = _heat_inputs(floored, params, n)
    row = [j for j in cand[i] if not mask[j]]
    if not row:
        row = list(np.flatnonzero(~mask))
    nodes = np.array(row, dtype=np.int64)
    weights = np.array([
        _weight(state.tau[i, j], dist[i, j], ht[i, j] if use_heat else 1.0,
                params.alpha, params.beta, params.gamma, use_heat)
        for j in nodes
    ])
    total = weights.sum()
    if not total > 0.0:
        return nodes, np.full(nodes.size, 1.0 / nodes.size)
    return nodes, weights / total


def construct_tour(rng: np.random.Generator, start: int, state: PheromoneState, dist: np.ndarray,
                   floored: FlooredHeatmap | None, candidates: CandidateLists | np.ndarray,
                   params: MmasParams, greedy: bool = False) -> Tour:
    n = dist.shape[0]
    cand = np.ascontiguousarray(getattr(candidates, "neighbors", candidates), dtype=np.int64)
    ht, use_heat = _heat_inputs(floored, params, n)
    choice = candidate_weights(state.tau, dist, ht, cand, params.alpha, params.beta, params.gamma, use_heat)
    tour = np.empty(n, dtype=np.int64)
    construct_kernel(tour, start, rng.random(n), state.tau, dist, ht, cand, choice,
                     params.alpha, params.beta, params.gamma, use_heat, greedy)
    return Tour(tour, tour_length(tour, dist))


def local_improve_hook(tour: Tour, dist: np.ndarray, candidates, params: MmasParams,
                       ls_params: LsParams = LsParams()) -> Tour:
    from .localsearch import local_search

    return local_search(tour, dist, candidates, params.local_search, ls_params)


def update_pheromones(state: PheromoneState, elite: Tour, params: MmasParams,
                      candidates: CandidateLists | np.ndarray | None = None,
                      best_length: float | None = None) -> None:
    """Evaporate, deposit ``1/L`` on the elite tour, rebound and clamp, in place."""
    n = state.n
    best = elite.length if best_length is None else best_length
    if state.best_tour is not None:
        best = min(best, state.best_tour.length)
    tau_min, tau_max = bounds_for(best, params.rho, n)
    changed = tau_min != state.tau_min or tau_max != state.tau_max
    full = params.scope is EvaporationScope.FULL_MATRIX
    if full:
        eu = ev = np.empty(0, dtype=np.int64)
    else:
        if candidates is None:
            raise ValueError("candidate-based evaporation needs candidate lists")
        edges = _edge_array(candidates)
        eu, ev = edges[:, 0].copy(), edges[:, 1].copy()
    update_kernel(state.tau, np.ascontiguousarray(elite.perm, dtype=np.int64), float(elite.length),
                  params.rho, tau_min, tau_max, full, changed, eu, ev)
    state.tau_min, state.tau_max = tau_min, tau_max


def _edge_array(candidates) -> np.ndarray:
    if isinstance(candidates, CandidateLists):
        return candidates.edge_array()
    cand = np.asarray(candidates, dtype=np.int64)
    return CandidateLists(cand, np.zeros(cand.shape, dtype=bool)).edge_array()


def run(dist: np.ndarray, floored: FlooredHeatmap | None, candidates: CandidateLists | np.ndarray,
        params: MmasParams, ls_params: LsParams = LsParams(),
        time_limit: float | None = None, state: PheromoneState | None = None,
        target: float | None = None) -> tuple[Tour, ConvergenceTrace]:
    """Run the colony for ``params.iterations`` iterations.

    Stops early once ``time_limit`` seconds have passed or the best length
    reaches ``target``.

    Ctrl-C stops the search and returns the best tour found so far.
    """
    n = dist.shape[0]
    cand = np.ascontiguousarray(getattr(candidates, "neighbors", candidates), dtype=np.int64)
    if cand.shape[0] != n:
        raise ValueError(f"candidate lists cover {cand.shape[0]} nodes, instance has {n}")
    dist = np.ascontiguousarray(dist, dtype=np.float64)
    ht, use_heat = _heat_inputs(floored, params, n)
    ht = np.ascontiguousarray(ht, dtype=np.float64)
    if state is None:
        state = init_state(dist, params)
    full = params.scope is EvaporationScope.FULL_MATRIX
    edges = _edge_array(cand)
    eu, ev = edges[:, 0].copy(), edges[:, 1].copy()
    ls_mode = LS_CODES[params.local_search]
    colony = colony_parallel if params.threads > 1 else colony_serial
    if params.threads > 1:
        nb.set_num_threads(min(params.threads, nb.config.NUMBA_NUM_THREADS))

    m = params.m
    tours = np.empty((m, n), dtype=np.int64)
    lengths = np.empty(m)
    best_perm = None if state.best_tour is None else np.array(state.best_tour.perm)
    best_len = np.inf if state.best_tour is None else state.best_tour.length
    trace = ConvergenceTrace()
    t0 = time.perf_counter()
    try:
        for it in range(params.iterations):
            rng = np.random.default_rng([params.seed, it])
            starts = rng.integers(0, n, size=m)
            uniforms = rng.random((m, n))
            choice = candidate_weights(state.tau, dist, ht, cand, params.alpha, params.beta,
                                       params.gamma, use_heat)
            colony(tours, lengths, starts, uniforms, state.tau, dist, ht, cand, choice,
                   params.alpha, params.beta, params.gamma, use_heat, ls_mode,
                   ls_params.max_passes_2opt, ls_params.max_passes_3opt, ls_params.best_improvement)
            ib = int(np.argmin(lengths))
            if lengths[ib] < best_len:
                best_len = float(lengths[ib])
                best_perm = tours[ib].copy()
            if params.deposit is Deposit.GLOBAL_BEST:
                elite, elite_len = best_perm, best_len
            else:
                elite, elite_len = tours[ib], float(lengths[ib])
            tau_min, tau_max = bounds_for(best_len, params.rho, n)
            changed = tau_min != state.tau_min or tau_max != state.tau_max
            update_kernel(state.tau, elite, elite_len, params.rho, tau_min, tau_max, full, changed, eu, ev)
            state.tau_min, state.tau_max = tau_min, tau_max
            state.iteration += 1
            if params.check_bounds and not state.bounds_hold():
                raise AssertionError(f"pheromone bounds violated at iteration {it + 1}")
            trace.best_lengths.append(best_len)
            trace.seconds.append(time.perf_counter() - t0)
            if time_limit is not None and trace.seconds[-1] >= time_limit:
                break
            if target is not None and best_len <= target:
                break
    except KeyboardInterrupt:
        log.warning("interrupted after %d iterations; returning best so far", len(trace))
        if best_perm is None:
            raise
    state.best_tour = Tour(best_perm, tour_length(best_perm, dist))
    problem = validate_tour(state.best_tour.perm, n)
    if problem is not None:
        raise AssertionError(f"colony produced an invalid tour: {problem}")
    return state.best_tour, trace


def vanilla(params: MmasParams) -> MmasParams:
    """The same configuration with heatmap guidance switched off."""
    return replace(params, gamma=0.0)


# ----------------------------------------------------------------------------
# convergence plot transform


def convergence_transform(traces: dict[str, np.ndarray] | list[np.ndarray], plot_alpha: float = 0.03,
                          t_mid_fraction: float = 0.5):
    """Log-gap transform for comparing best-so-far curves of several methods.

    With ``B`` the smallest final value over methods and
    ``c = max(plot_alpha * median_i(L_i(t_mid) - B), max(|B| * 1e-8, 1e-12))``,
    each curve becomes ``log10(L_i(t) - B + c)``. Returns the transformed
    curves (same container type as the input) and a dict with ``B`` and ``c``.
    """
    keys = list(traces.keys()) if isinstance(traces, dict) else None
    arrays = [np.asarray(v, dtype=np.float64) for v in (traces.values() if keys else traces)]
    if not arrays or any(a.size == 0 for a in arrays):
        raise ValueError("need at least one non-empty trace")
    length = arrays[0].size
    if any(a.size != length for a in arrays):
        raise ValueError("all traces must have the same length")
    stacked = np.stack(arrays)
    base = float(stacked[:, -1].min())
    t_mid = int(t_mid_fraction * length)
    t_mid = min(max(t_mid, 1), length) - 1
    floor = max(abs(base) * 1e-8, 1e-12)
    c = max(plot_alpha * float(np.median(stacked[:, t_mid] - base)), floor)
    ys = np.log10(stacked - base + c)
    info = {"B": base, "c": c, "t_mid": t_mid + 1}
    if keys is not None:
        return {k: ys[i] for i, k in enumerate(keys)}, info
    return list(ys), info
