"""TSP instances: parsing, distance matrices, tour evaluation and validation.

Two input formats are understood: the EUC_2D subset of TSPLIB (distances are
rounded to the nearest integer, as TSPLIB prescribes) and plain coordinate
text with one ``x y`` pair per line (exact Euclidean distances).
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial.distance import cdist


class ParseError(ValueError):
    """Raised when an instance, tour or heatmap file cannot be read."""


class TourError(ValueError):
    """Raised when a node sequence is not a permutation of the instance nodes."""


class DistanceMode(str, enum.Enum):
    EUCLIDEAN_EXACT = "euclidean_exact"
    TSPLIB_EUC2D_ROUNDED = "tsplib_euc2d_rounded"


@dataclass(frozen=True)
class TspInstance:
    coords: np.ndarray
    distance_mode: DistanceMode = DistanceMode.EUCLIDEAN_EXACT
    name: str = ""

    def __post_init__(self) -> None:
        coords = np.ascontiguousarray(self.coords, dtype=np.float64)
        if coords.ndim != 2 or coords.shape[1] != 2:
            raise ValueError(f"coords must have shape (n, 2), got {coords.shape}")
        if coords.shape[0] < 3:
            raise ValueError("instance too small: need at least 3 nodes")
        if not np.all(np.isfinite(coords)):
            raise ValueError("coordinates must be finite")
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "distance_mode", DistanceMode(self.distance_mode))

    @property
    def n(self) -> int:
        return int(self.coords.shape[0])


@dataclass(frozen=True)
class Tour:
    perm: np.ndarray
    length: float

    def __post_init__(self) -> None:
        perm = np.ascontiguousarray(self.perm, dtype=np.int64)
        perm.setflags(write=False)
        object.__setattr__(self, "perm", perm)
        object.__setattr__(self, "length", float(self.length))

    @classmethod
    def from_perm(cls, perm: Sequence[int] | np.ndarray, dist: np.ndarray) -> "Tour":
        perm = np.asarray(perm, dtype=np.int64)
        return cls(perm, tour_length(perm, dist))

    @property
    def n(self) -> int:
        return int(self.perm.shape[0])

    def edges(self) -> set[tuple[int, int]]:
        """Undirected edge set as ``(min, max)`` pairs."""
        a = self.perm
        b = np.roll(a, -1)
        return {(int(min(u, v)), int(max(u, v))) for u, v in zip(a, b)}


# ----------------------------------------------------------------------------
# parsing

_KEY_RE = re.compile(r"^\s*([A-Z_]+)\s*:?\s*(.*?)\s*$")


def parse_tsplib(text: str | Iterable[str]) -> TspInstance:
    """Parse a TSPLIB ``.tsp`` file restricted to ``EDGE_WEIGHT_TYPE: EUC_2D``."""
    lines = text.splitlines() if isinstance(text, str) else list(text)
    header: dict[str, str] = {}
    coords: list[tuple[float, float]] = []
    in_coords = False
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        if in_coords:
            if line == "EOF" or line.endswith("_SECTION"):
                in_coords = False
                if line == "EOF":
                    break
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ParseError(f"line {lineno}: expected 'id x y', got {line!r}")
            try:
                coords.append((float(parts[1]), float(parts[2])))
            except ValueError as exc:
                raise ParseError(f"line {lineno}: malformed number in {line!r}") from exc
            continue
        if line == "EOF":
            break
        if line.startswith("NODE_COORD_SECTION"):
            in_coords = True
            continue
        m = _KEY_RE.match(line)
        if m is None:
            raise ParseError(f"line {lineno}: unrecognised header line {line!r}")
        header[m.group(1)] = m.group(2)

    ewt = header.get("EDGE_WEIGHT_TYPE")
    if ewt is None:
        raise ParseError("missing EDGE_WEIGHT_TYPE")
    if ewt != "EUC_2D":
        raise ParseError(f"unsupported distance type: {ewt}")
    if "DIMENSION" not in header:
        raise ParseError("missing DIMENSION")
    try:
        dim = int(header["DIMENSION"])
    except ValueError as exc:
        raise ParseError(f"malformed DIMENSION {header['DIMENSION']!r}") from exc
    if dim != len(coords):
        raise ParseError(f"DIMENSION is {dim} but {len(coords)} coordinates were listed")
    if dim < 3:
        raise ParseError("instance too small")
    return TspInstance(
        np.array(coords, dtype=np.float64),
        DistanceMode.TSPLIB_EUC2D_ROUNDED,
        header.get("NAME", ""),
    )


def parse_coords(text: str | Iterable[str], name: str = "") -> TspInstance:
    """Parse plain ``x y`` lines into an exact-Euclidean instance."""
    lines = text.splitlines() if isinstance(text, str) else list(text)
    coords = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ParseError(f"line {lineno}: expected 'x y', got {line!r}")
        try:
            coords.append((float(parts[0]), float(parts[1])))
        except ValueError as exc:
            raise ParseError(f"line {lineno}: malformed number in {line!r}") from exc
    if len(coords) < 3:
        raise ParseError("instance too small")
    return TspInstance(np.array(coords, dtype=np.float64), DistanceMode.EUCLIDEAN_EXACT, name)


def load_instance(path: str | Path) -> TspInstance:
    """Load by sniffing: TSPLIB if the text has a NODE_COORD_SECTION, else coords."""
    path = Path(path)
    text = path.read_text()
    if "NODE_COORD_SECTION" in text or "EDGE_WEIGHT_TYPE" in text:
        return parse_tsplib(text)
    return parse_coords(text, name=path.stem)


def format_coords(inst: TspInstance) -> str:
    return "".join(f"{float(x)!r} {float(y)!r}\n" for x, y in inst.coords)


def random_uniform_instance(n: int, rng: np.random.Generator | int | None = None) -> TspInstance:
    """``n`` points uniform in the unit square."""
    rng = np.random.default_rng(rng)
    return TspInstance(rng.random((n, 2)), DistanceMode.EUCLIDEAN_EXACT, f"uniform{n}")


# reference tours -------------------------------------------------------------

_LSTAR_RE = re.compile(r"#\s*L_star\s*=\s*(\S+)")


def parse_reference_tour(text: str) -> tuple[np.ndarray, float | None]:
    """Read a reference tour.

    The native format is whitespace-separated 0-indexed node ids, optionally
    preceded by a ``# L_star=<value>`` comment line. TSPLIB ``.tour`` files
    (1-indexed ``TOUR_SECTION`` terminated by ``-1``) are accepted as well.
    """
    if "TOUR_SECTION" in text:
        body = text.split("TOUR_SECTION", 1)[1]
        ids = []
        for tok in body.split():
            if tok in ("-1", "EOF"):
                break
            try:
                ids.append(int(tok) - 1)
            except ValueError as exc:
                raise ParseError(f"malformed tour entry {tok!r}") from exc
        lstar = None
        m = re.search(r"\((\d+(?:\.\d*)?)\)", text.split("TOUR_SECTION", 1)[0])
        if m:
            lstar = float(m.group(1))
        return np.array(ids, dtype=np.int64), lstar

    lstar = None
    ids = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line.startswith("#"):
            m = _LSTAR_RE.match(line)
            if m:
                try:
                    lstar = float(m.group(1))
                except ValueError as exc:
                    raise ParseError(f"line {lineno}: malformed L_star") from exc
            continue
        for tok in line.split():
            try:
                ids.append(int(tok))
            except ValueError as exc:
                raise ParseError(f"line {lineno}: malformed node id {tok!r}") from exc
    return np.array(ids, dtype=np.int64), lstar


def format_reference_tour(perm: Sequence[int], lstar: float | None = None) -> str:
    head = f"# L_star={lstar!r}\n" if lstar is not None else ""
    return head + " ".join(str(int(v)) for v in perm) + "\n"


# ----------------------------------------------------------------------------
# distances and tours


def compute_distance_matrix(inst: TspInstance) -> np.ndarray:
    """Dense symmetric float64 distance matrix with zero diagonal.

    Built in place so peak memory stays close to the ``8 * n**2`` bytes of the
    result itself.
    """
    d = cdist(inst.coords, inst.coords)
    if inst.distance_mode is DistanceMode.TSPLIB_EUC2D_ROUNDED:
        # TSPLIB nint(): floor(x + 0.5), not banker's rounding
        np.add(d, 0.5, out=d)
        np.floor(d, out=d)
    np.fill_diagonal(d, 0.0)
    return d


def validate_tour(perm: Sequence[int] | np.ndarray, n: int) -> str | None:
    """Return ``None`` for a valid tour, otherwise a description of the first violation."""
    perm = np.asarray(perm)
    if perm.ndim != 1 or perm.shape[0] != n:
        return f"length mismatch: expected {n} nodes, got {perm.size}"
    if perm.size and not np.issubdtype(perm.dtype, np.integer):
        return "node ids must be integers"
    out_of_range = (perm < 0) | (perm >= n)
    if np.any(out_of_range):
        return f"node id {int(perm[np.argmax(out_of_range)])} out of range [0, {n})"
    seen = np.zeros(n, dtype=bool)
    duplicate = None
    for v in perm:
        if seen[v]:
            duplicate = int(v)
            break
        seen[v] = True
    if duplicate is not None:
        counts = np.bincount(perm, minlength=n)
        missing = int(np.argmin(counts > 0))
        return f"duplicate {duplicate} / missing {missing}"
    return None


def tour_length(perm: Sequence[int] | np.ndarray, dist: np.ndarray) -> float:
    """Closed-cycle length of ``perm`` under ``dist``."""
    perm = np.asarray(perm, dtype=np.int64)
    problem = validate_tour(perm, dist.shape[0])
    if problem is not None:
        raise TourError(problem)
    nxt = np.roll(perm, -1)
    return float(np.sum(dist[perm, nxt], dtype=np.float64))


def optimality_gap(length: float, lstar: float) -> float:
    """Percent gap of ``length`` above the benchmark length ``lstar``."""
    if not lstar > 0:
        raise ValueError(f"benchmark length must be positive, got {lstar}")
    return (length - lstar) / lstar * 100.0


def brute_force_optimum(dist: np.ndarray) -> tuple[np.ndarray, float]:
    """Exhaustive optimum over all (n-1)!/2 cycles; only for tiny n."""
    import itertools

    n = dist.shape[0]
    if n > 11:
        raise ValueError("brute force is limited to n <= 11")
    best_len = math.inf
    best = None
    for rest in itertools.permutations(range(1, n)):
        if rest[0] > rest[-1]:
            continue
        length = dist[0, rest[0]] + dist[rest[-1], 0]
        for a, b in zip(rest, rest[1:]):
            length += dist[a, b]
        if length < best_len:
            best_len = length
            best = (0,) + rest
    return np.array(best, dtype=np.int64), float(best_len)
