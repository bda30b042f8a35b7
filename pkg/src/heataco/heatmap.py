"""Edge-confidence heatmaps and the sparse candidate lists derived from them.

Wire formats
------------
Dense binary: ``b"HMAP"``, one version byte (``1``), ``n`` as little-endian
uint32, then ``n*n`` little-endian float32 values in row-major order.

Sparse text: a header line ``n=<count>`` followed by ``i j h`` lines
(0-indexed, ``i != j``). Missing entries are zero and an edge given in both
directions takes the larger confidence. Averaging with the transpose is left
to :func:`symmetrize`.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .instance import ParseError

EPS_H = 1e-4
EPS_FLOOR = 1e-9
DEFAULT_K = 20

MAGIC = b"HMAP"
VERSION = 1


@dataclass(frozen=True)
class Heatmap:
    h: np.ndarray

    def __post_init__(self) -> None:
        h = np.asarray(self.h)
        if h.dtype not in (np.float32, np.float64):
            h = h.astype(np.float64)
        if h.ndim != 2 or h.shape[0] != h.shape[1]:
            raise ValueError(f"heatmap must be square, got shape {h.shape}")
        if not np.all((h >= 0.0) & (h <= 1.0)):
            raise ValueError("heatmap entries must lie in [0, 1]")
        h = np.array(h, copy=True)
        np.fill_diagonal(h, 0.0)
        h.setflags(write=False)
        object.__setattr__(self, "h", h)

    @property
    def n(self) -> int:
        return int(self.h.shape[0])

    @classmethod
    def uniform(cls, n: int, value: float = 0.5) -> "Heatmap":
        return cls(np.full((n, n), value, dtype=np.float64))

    @classmethod
    def from_tour(cls, perm, n: int, on: float = 1.0, off: float = 0.0) -> "Heatmap":
        """Indicator heatmap of a tour's adjacency."""
        h = np.full((n, n), off, dtype=np.float64)
        perm = np.asarray(perm)
        nxt = np.roll(perm, -1)
        h[perm, nxt] = on
        h[nxt, perm] = on
        return cls(h)


@dataclass(frozen=True)
class FlooredHeatmap:
    h_tilde: np.ndarray
    eps_h: float = EPS_H
    eps_floor: float = EPS_FLOOR

    @property
    def n(self) -> int:
        return int(self.h_tilde.shape[0])


@dataclass(frozen=True)
class CandidateLists:
    """Per-node neighbour lists, heatmap-ranked entries first, then nearest fill.

    ``neighbors[i, r]`` is the r-th candidate of node ``i`` and
    ``from_heatmap[i, r]`` says whether it came from the heatmap (as opposed to
    the nearest-neighbour fill).
    """

    neighbors: np.ndarray
    from_heatmap: np.ndarray

    @property
    def n(self) -> int:
        return int(self.neighbors.shape[0])

    @property
    def k(self) -> int:
        return int(self.neighbors.shape[1])

    @property
    def n_heat(self) -> np.ndarray:
        return self.from_heatmap.sum(axis=1)

    def heat_neighbors(self, i: int) -> np.ndarray:
        return self.neighbors[i][self.from_heatmap[i]]

    def edge_array(self) -> np.ndarray:
        """Unique undirected candidate edges as sorted ``(i, j)`` rows with ``i < j``."""
        n, k = self.neighbors.shape
        src = np.repeat(np.arange(n, dtype=np.int64), k)
        dst = self.neighbors.ravel()
        return _unique_edges(src, dst)


def _unique_edges(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    lo = np.minimum(src, dst).astype(np.int64)
    hi = np.maximum(src, dst).astype(np.int64)
    keep = lo != hi
    pairs = np.stack([lo[keep], hi[keep]], axis=1)
    if pairs.size == 0:
        return np.empty((0, 2), dtype=np.int64)
    return np.unique(pairs, axis=0)


# ----------------------------------------------------------------------------
# I/O


def load_heatmap(path: str | Path, n: int | None = None, dtype=np.float64) -> Heatmap:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] == MAGIC:
        h = _decode_dense(raw)
    else:
        h = _decode_sparse(raw.decode())
    if n is not None and h.shape[0] != n:
        raise ParseError(f"heatmap has n={h.shape[0]} but the instance has n={n}")
    return Heatmap(h.astype(dtype, copy=False))


def _decode_dense(raw: bytes) -> np.ndarray:
    if len(raw) < 9:
        raise ParseError("truncated heatmap header")
    version = raw[4]
    if version != VERSION:
        raise ParseError(f"unsupported heatmap version {version}")
    (n,) = struct.unpack("<I", raw[5:9])
    expected = 9 + 4 * n * n
    if len(raw) != expected:
        raise ParseError(f"heatmap payload has {len(raw) - 9} bytes, expected {4 * n * n} for n={n}")
    h = np.frombuffer(raw, dtype="<f4", offset=9).reshape(n, n)
    _check_range(h)
    return h.astype(np.float32)


def _decode_sparse(text: str) -> np.ndarray:
    lines = text.splitlines()
    header_idx = next((i for i, ln in enumerate(lines) if ln.strip()), None)
    if header_idx is None:
        raise ParseError("empty heatmap file")
    head = lines[header_idx].strip().replace(" ", "")
    if not head.startswith("n="):
        raise ParseError(f"line {header_idx + 1}: expected 'n=<count>' header")
    try:
        n = int(head[2:])
    except ValueError as exc:
        raise ParseError(f"line {header_idx + 1}: malformed node count") from exc
    h = np.zeros((n, n), dtype=np.float64)
    seen: set[tuple[int, int]] = set()
    for lineno in range(header_idx + 1, len(lines)):
        line = lines[lineno].strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ParseError(f"line {lineno + 1}: expected 'i j h'")
        try:
            i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError as exc:
            raise ParseError(f"line {lineno + 1}: malformed entry {line!r}") from exc
        if not (0 <= i < n and 0 <= j < n) or i == j:
            raise ParseError(f"line {lineno + 1}: bad node pair ({i}, {j})")
        if not 0.0 <= v <= 1.0:
            raise ParseError(f"line {lineno + 1}: confidence {v} outside [0, 1]")
        if (i, j) in seen:
            raise ParseError(f"line {lineno + 1}: duplicate entry ({i}, {j})")
        seen.add((i, j))
        v = max(v, h[i, j])
        h[i, j] = v
        h[j, i] = v
    return h


def _check_range(h: np.ndarray) -> None:
    bad = ~((h >= 0.0) & (h <= 1.0))
    if np.any(bad):
        i, j = np.argwhere(bad)[0]
        raise ParseError(f"heatmap entry ({i}, {j}) = {h[i, j]} outside [0, 1]")


def save_heatmap_dense(path: str | Path, heatmap: Heatmap) -> None:
    n = heatmap.n
    with open(path, "wb") as fh:
        fh.write(MAGIC + bytes([VERSION]) + struct.pack("<I", n))
        fh.write(np.ascontiguousarray(heatmap.h, dtype="<f4").tobytes())


def save_heatmap_sparse(path: str | Path, heatmap: Heatmap, min_value: float = 0.0) -> None:
    h = heatmap.h
    rows, cols = np.nonzero(h > min_value)
    with open(path, "w") as fh:
        fh.write(f"n={heatmap.n}\n")
        for i, j in zip(rows, cols):
            fh.write(f"{i} {j} {float(h[i, j])!r}\n")


# ----------------------------------------------------------------------------
# transforms


def symmetrize(heatmap: Heatmap) -> Heatmap:
    h = heatmap.h
    if np.array_equal(h, h.T):
        return heatmap
    acc = h.astype(np.float64)
    out = 0.5 * (acc + acc.T)
    return Heatmap(out.astype(h.dtype, copy=False))


def clip_floor(heatmap: Heatmap, eps_h: float = EPS_H, eps_floor: float = EPS_FLOOR) -> FlooredHeatmap:
    """Keep confidences ``>= eps_h`` and replace the rest by ``eps_floor``."""
    if not 0.0 < eps_floor < eps_h < 1.0:
        raise ValueError(f"need 0 < eps_floor < eps_h < 1, got eps_floor={eps_floor}, eps_h={eps_h}")
    h = heatmap.h.astype(np.float64)
    ht = np.where(h >= eps_h, h, eps_floor)
    ht.setflags(write=False)
    return FlooredHeatmap(ht, eps_h, eps_floor)


def build_candidate_lists(floored: FlooredHeatmap, dist: np.ndarray, k: int = DEFAULT_K) -> CandidateLists:
    """Top heatmap neighbours above ``eps_h`` first, nearest neighbours after.

    Heatmap entries are ranked by descending confidence, then ascending
    distance, then ascending index; the fill is ordered by distance then index.
    """
    if k < 1:
        raise ValueError("k must be positive")
    ht = floored.h_tilde
    n = ht.shape[0]
    kk = min(k, n - 1)
    neighbors = np.empty((n, kk), dtype=np.int64)
    tagged = np.zeros((n, kk), dtype=bool)
    idx = np.arange(n)
    for i in range(n):
        row_h = ht[i]
        row_d = dist[i]
        hot = np.flatnonzero(row_h >= floored.eps_h)
        hot = hot[hot != i]
        if hot.size:
            order = np.lexsort((hot, row_d[hot], -row_h[hot]))
            hot = hot[order][:kk]
        m = hot.size
        neighbors[i, :m] = hot
        tagged[i, :m] = True
        if m < kk:
            neighbors[i, m:] = _nearest(row_d, i, kk - m, exclude=hot, idx=idx)
    neighbors.setflags(write=False)
    tagged.setflags(write=False)
    return CandidateLists(neighbors, tagged)


def knn_candidate_lists(dist: np.ndarray, k: int = DEFAULT_K) -> CandidateLists:
    """Pure nearest-neighbour lists; what the decoder uses without a heatmap."""
    n = dist.shape[0]
    kk = min(k, n - 1)
    idx = np.arange(n)
    empty = np.empty(0, dtype=np.int64)
    neighbors = np.empty((n, kk), dtype=np.int64)
    for i in range(n):
        neighbors[i] = _nearest(dist[i], i, kk, exclude=empty, idx=idx)
    neighbors.setflags(write=False)
    tagged = np.zeros((n, kk), dtype=bool)
    tagged.setflags(write=False)
    return CandidateLists(neighbors, tagged)


def _nearest(row_d: np.ndarray, i: int, count: int, exclude: np.ndarray, idx: np.ndarray) -> np.ndarray:
    mask = np.ones(row_d.shape[0], dtype=bool)
    mask[i] = False
    mask[exclude] = False
    pool = idx[mask]
    pd = row_d[pool]
    if count < pool.size:
        # widen the partition so distance ties at the cut are resolved by index
        kth = np.partition(pd, count - 1)[count - 1]
        sel = pd <= kth
        pool, pd = pool[sel], pd[sel]
    order = np.lexsort((pool, pd))
    return pool[order][:count]


# ----------------------------------------------------------------------------
# raw edge sets used by the diagnostics


def thresholded_edge_set(heatmap: Heatmap, eps_h: float = EPS_H) -> np.ndarray:
    """All undirected ``(i, j)``, ``i < j``, with confidence at least ``eps_h``; no cap."""
    h = heatmap.h
    i, j = np.nonzero(np.triu(h >= eps_h, k=1))
    return np.stack([i, j], axis=1).astype(np.int64)


def topk_edge_set(heatmap: Heatmap, k: int) -> np.ndarray:
    """Union over rows of each row's ``k`` most confident neighbours, deduplicated."""
    h = heatmap.h.astype(np.float64)
    n = h.shape[0]
    if not 1 <= k <= n - 1:
        raise ValueError(f"k must lie in [1, {n - 1}]")
    scores = h.copy()
    np.fill_diagonal(scores, -np.inf)
    idx = np.arange(n)
    src, dst = [], []
    for i in range(n):
        order = np.lexsort((idx, -scores[i]))[:k]
        src.append(np.full(k, i))
        dst.append(order)
    return _unique_edges(np.concatenate(src), np.concatenate(dst))
