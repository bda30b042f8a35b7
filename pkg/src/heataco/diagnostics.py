"""Heatmap reliability diagnostics.

Everything here is label-based (needs a reference tour) except the effective
support size and the gamma selection built on it.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .heatmap import CandidateLists, FlooredHeatmap, Heatmap
from .instance import Tour, validate_tour
from .mmas import GAMMA_GRID

CE_CLAMP = 1e-12
DELTA = 1e-12
TARGET_LS = 8.0
TARGET_NO_LS = 4.0

DEFAULT_BIN_EDGES = (0.0, 1e-3, 1e-2, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)


class EntropyUndefined(ValueError):
    """No node has two or more heatmap candidates."""


@dataclass(frozen=True)
class CandidateStats:
    edges_per_node: float
    coverage: float
    miss_count: float
    miss_percent: float


@dataclass(frozen=True)
class IntervalContribution:
    bin_edges: np.ndarray
    candidate_counts_per_node: np.ndarray
    tour_edge_fraction: np.ndarray
    overflow_candidates: float = 0.0
    overflow_tour_edges: float = 0.0


@dataclass(frozen=True)
class GammaSelection:
    gamma: float
    effective_support: float
    target: float
    delta: float
    grid: tuple[float, ...]
    support_by_gamma: tuple[float, ...]


def _tour_edge_array(ref_tour) -> np.ndarray:
    perm = np.asarray(getattr(ref_tour, "perm", ref_tour), dtype=np.int64)
    nxt = np.roll(perm, -1)
    return np.stack([np.minimum(perm, nxt), np.maximum(perm, nxt)], axis=1)


def _edge_keys(edges: np.ndarray, n: int) -> np.ndarray:
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    lo = np.minimum(edges[:, 0], edges[:, 1])
    hi = np.maximum(edges[:, 0], edges[:, 1])
    return np.unique(lo * n + hi)


def candidate_stats(edges: np.ndarray, ref_tour, n: int) -> CandidateStats:
    """Sparsity and benchmark-tour recall of an undirected edge set."""
    perm = getattr(ref_tour, "perm", ref_tour)
    problem = validate_tour(perm, n)
    if problem is not None:
        raise ValueError(f"reference tour invalid: {problem}")
    keys = _edge_keys(edges, n)
    tour_keys = _edge_keys(_tour_edge_array(perm), n)
    hits = np.intersect1d(keys, tour_keys).size
    miss = n - hits
    # derived from the miss count so coverage == 1 - miss/n holds bit for bit
    return CandidateStats(keys.size / n, 1.0 - miss / n, float(miss), 100.0 * miss / n)


def cross_entropy(heatmap: Heatmap, ref_tour) -> tuple[float, float]:
    """Binary and class-balanced cross entropy over all ``i < j`` pairs.

    The balanced variant gives each class a total weight of one half.
    """
    h = heatmap.h.astype(np.float64)
    n = h.shape[0]
    iu, ju = np.triu_indices(n, k=1)
    p = np.clip(h[iu, ju], CE_CLAMP, 1.0 - CE_CLAMP)
    labels = np.zeros((n, n), dtype=bool)
    e = _tour_edge_array(ref_tour)
    labels[e[:, 0], e[:, 1]] = True
    y = labels[iu, ju]
    loss_pos = -np.log(p[y])
    loss_neg = -np.log1p(-p[~y])
    ce = (loss_pos.sum() + loss_neg.sum()) / p.size
    wce = 0.5 * loss_pos.mean() + 0.5 * loss_neg.mean()
    return float(ce), float(wce)


def interval_contribution(heatmap: Heatmap, edges: np.ndarray, ref_tour,
                          bin_edges: Sequence[float] = DEFAULT_BIN_EDGES) -> IntervalContribution:
    """Per-bin candidate counts and reference-tour edge counts, both divided by ``n``.

    Bins are ``(b[t], b[t+1]]``; values outside every bin go to the overflow fields.
    """
    b = np.asarray(bin_edges, dtype=np.float64)
    if b.ndim != 1 or b.size < 2 or np.any(np.diff(b) <= 0):
        raise ValueError("bin edges must be strictly ascending")
    h = heatmap.h
    n = heatmap.n
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    tour_edges = _tour_edge_array(ref_tour)

    def binned(vals):
        idx = np.searchsorted(b, vals, side="left") - 1
        inside = (vals > b[0]) & (vals <= b[-1])
        counts = np.bincount(idx[inside], minlength=b.size - 1)[: b.size - 1]
        return counts.astype(np.float64), float(np.count_nonzero(~inside))

    cand_counts, cand_over = binned(h[edges[:, 0], edges[:, 1]].astype(np.float64))
    tour_counts, tour_over = binned(h[tour_edges[:, 0], tour_edges[:, 1]].astype(np.float64))
    return IntervalContribution(b, cand_counts / n, tour_counts / n, cand_over / n, tour_over / n)


def average_intervals(items: Sequence[IntervalContribution],
                      ns: Sequence[int] | None = None) -> IntervalContribution:
    """Combine per-instance histograms.

    Without ``ns`` this is the plain mean over instances. With node counts the
    mean is weighted by ``n``, which equals pooling all raw counts and dividing
    by the total node count.
    """
    if not items:
        raise ValueError("no histograms to average")
    b = items[0].bin_edges
    if any(not np.array_equal(it.bin_edges, b) for it in items):
        raise ValueError("histograms use different bin edges")
    w = np.ones(len(items)) if ns is None else np.asarray(ns, dtype=np.float64)
    if w.shape != (len(items),) or np.any(w <= 0):
        raise ValueError("need one positive node count per histogram")
    w = w / w.sum()

    def mix(attr):
        return sum(wi * np.asarray(getattr(it, attr), dtype=np.float64) for wi, it in zip(w, items))

    return IntervalContribution(b.copy(), mix("candidate_counts_per_node"), mix("tour_edge_fraction"),
                                float(mix("overflow_candidates")), float(mix("overflow_tour_edges")))


def _support_one(scores: np.ndarray, gamma: float, delta: float) -> float:
    ht = scores / (scores.max() + delta)
    with np.errstate(divide="ignore"):
        logs = gamma * np.log(ht)
    logs -= logs.max()
    w = np.exp(logs)
    q = w / w.sum()
    nz = q[q > 0]
    return float(np.exp(-np.sum(nz * np.log(nz))))


def effective_support(scores: Sequence[np.ndarray], gamma: float, delta: float = DELTA) -> tuple[np.ndarray, float]:
    """Per-node exponentiated entropy of the sharpened heatmap proposal, and its median.

    Nodes with fewer than two scores are skipped; the returned per-node array
    holds NaN for them.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    per_node = np.full(len(scores), np.nan)
    for i, s in enumerate(scores):
        s = np.asarray(s, dtype=np.float64)
        if s.size >= 2:
            per_node[i] = _support_one(s, gamma, delta)
    valid = per_node[~np.isnan(per_node)]
    if valid.size == 0:
        raise EntropyUndefined("entropy undefined: no node has two or more heatmap candidates")
    return per_node, float(np.median(valid))


def heat_scores(floored: FlooredHeatmap, candidates: CandidateLists) -> list[np.ndarray]:
    """Heatmap confidences of each node's heatmap-tagged candidates."""
    out = []
    for i in range(candidates.n):
        js = candidates.heat_neighbors(i)
        out.append(floored.h_tilde[i, js])
    return out


def select_gamma(floored: FlooredHeatmap, candidates: CandidateLists, target: float | None = None,
                 grid: Sequence[float] = GAMMA_GRID, delta: float = DELTA,
                 local_search: bool = True) -> GammaSelection:
    """Grid value whose median effective support is closest to ``target`` (ties: smaller gamma)."""
    grid = tuple(float(g) for g in grid)
    if not grid:
        raise ValueError("gamma grid is empty")
    if target is None:
        target = TARGET_LS if local_search else TARGET_NO_LS
    scores = heat_scores(floored, candidates)
    supports = tuple(effective_support(scores, g, delta)[1] for g in grid)
    order = sorted(range(len(grid)), key=lambda t: (abs(supports[t] - target), grid[t]))
    best = order[0]
    return GammaSelection(grid[best], supports[best], float(target), delta, grid, supports)


# ----------------------------------------------------------------------------
# report export


@dataclass
class DiagnosticsReport:
    instance: str
    heatmap: str
    filter: str
    stats: CandidateStats
    ce: float | None
    wce: float | None
    intervals: IntervalContribution

    def to_record(self) -> dict:
        iv = self.intervals
        return {
            "instance": self.instance,
            "heatmap": self.heatmap,
            "filter": self.filter,
            **asdict(self.stats),
            "ce": self.ce,
            "wce": self.wce,
            "bin_edges": iv.bin_edges.tolist(),
            "candidate_counts_per_node": iv.candidate_counts_per_node.tolist(),
            "tour_edge_fraction": iv.tour_edge_fraction.tolist(),
            "overflow_candidates": iv.overflow_candidates,
            "overflow_tour_edges": iv.overflow_tour_edges,
        }


def write_reports(path: str | Path, reports: Sequence[DiagnosticsReport]) -> None:
    with open(path, "w") as fh:
        for rep in reports:
            fh.write(json.dumps(rep.to_record()) + "\n")


def diagnose(heatmap: Heatmap, ref_tour: Tour | np.ndarray, edges: np.ndarray, *, instance: str = "",
             heatmap_id: str = "", filter_name: str = "", with_ce: bool = True,
             bin_edges: Sequence[float] = DEFAULT_BIN_EDGES) -> DiagnosticsReport:
    n = heatmap.n
    stats = candidate_stats(edges, ref_tour, n)
    ce = wce = None
    if with_ce:
        ce, wce = cross_entropy(heatmap, ref_tour)
    return DiagnosticsReport(instance, heatmap_id, filter_name, stats, ce, wce,
                             interval_contribution(heatmap, edges, ref_tour, bin_edges))
