"""Experiment orchestration: decode instances over seeds and write reports.

Outputs per experiment (in ``output_dir``):

* ``report.csv`` with one :class:`ReportRow` per (instance, decoder, heatmap, gamma);
* ``traces/<instance>__<decoder>__<heatmap>__g<gamma>__s<seed>.jsonl`` with
  one ``{iteration, best_length, elapsed_seconds}`` record per iteration;
* ``tours/...`` with the best tour of each seed (reference-tour format).

Decode time is measured with a monotonic clock around preprocessing and
search only; file I/O, heatmap loading and tour validation are excluded.
"""

from __future__ import annotations

import csv
import enum
import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import mmas as mmas_mod
from .diagnostics import select_gamma
from .greedy import greedy_merge
from .heatmap import (DEFAULT_K, EPS_FLOOR, EPS_H, FlooredHeatmap, Heatmap, build_candidate_lists, clip_floor,
                      knn_candidate_lists, load_heatmap, symmetrize)
from .instance import (Tour, compute_distance_matrix, format_reference_tour, load_instance,
                       optimality_gap, parse_reference_tour, tour_length, validate_tour)
from .localsearch import LocalSearch, LsParams, local_search
from .mmas import GAMMA_GRID, ConvergenceTrace, MmasParams, convergence_transform

log = logging.getLogger(__name__)

THREADS_ENV = "HEATACO_THREADS"


class Decoder(str, enum.Enum):
    GREEDY = "greedy"
    MMAS = "mmas"
    HEATACO = "heataco"


class GammaMode(str, enum.Enum):
    FIXED = "fixed"
    GRID_SWEEP = "grid_sweep"
    ENTROPY_TARGET = "entropy_target"


class InfeasibleTour(RuntimeError):
    pass


@dataclass(frozen=True)
class RunConfig:
    instances: tuple[Path, ...]
    heatmaps: tuple[Path | None, ...] = ()
    references: tuple[Path | None, ...] = ()
    decoder: Decoder = Decoder.HEATACO
    mmas: MmasParams = MmasParams()
    ls: LsParams = LsParams()
    seeds: tuple[int, ...] = tuple(range(10))
    threads: int = 1
    output_dir: Path | None = None
    gamma_mode: GammaMode = GammaMode.FIXED
    gamma_grid: tuple[float, ...] = GAMMA_GRID
    entropy_target: float | None = None
    k: int = DEFAULT_K
    eps_h: float = EPS_H
    eps_floor: float = EPS_FLOOR
    time_limit: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "instances", tuple(Path(p) for p in self.instances))
        object.__setattr__(self, "decoder", Decoder(self.decoder))
        object.__setattr__(self, "gamma_mode", GammaMode(self.gamma_mode))
        n = len(self.instances)
        heatmaps = tuple(None if p is None else Path(p) for p in self.heatmaps) or (None,) * n
        refs = tuple(None if p is None else Path(p) for p in self.references) or (None,) * n
        if len(heatmaps) != n or len(refs) != n:
            raise ValueError("heatmaps and references must align with instances")
        object.__setattr__(self, "heatmaps", heatmaps)
        object.__setattr__(self, "references", refs)
        if not self.instances:
            raise ValueError("no instances given")
        if not self.seeds:
            raise ValueError("seeds must be non-empty")
        if self.decoder in (Decoder.HEATACO, Decoder.GREEDY) and any(h is None for h in heatmaps):
            raise ValueError(f"decoder {self.decoder.value} requires a heatmap for every instance")
        if self.decoder is Decoder.MMAS and self.mmas.gamma > 0:
            raise ValueError("decoder mmas forbids heatmap guidance (gamma must be 0)")

    @classmethod
    def threads_from_env(cls, default: int = 1) -> int:
        raw = os.environ.get(THREADS_ENV)
        return int(raw) if raw else default


@dataclass(frozen=True)
class ReportRow:
    instance: str
    decoder: str
    heatmap: str
    gamma: float
    local_search: str
    mean_length: float
    std_length: float
    gap_percent: float | None
    mean_seconds: float
    seeds: int
    lstar: float | None = None

    def check(self) -> None:
        if self.gap_percent is not None and self.lstar is not None:
            expect = optimality_gap(self.mean_length, self.lstar)
            if abs(expect - self.gap_percent) > 1e-9:
                raise AssertionError("reported gap inconsistent with mean length")


REPORT_FIELDS = [f.name for f in fields(ReportRow)]


@dataclass
class DecodeResult:
    tour: Tour
    trace: ConvergenceTrace | None
    seconds: float
    gamma: float


@dataclass
class ExperimentResult:
    rows: list[ReportRow]
    traces: dict[tuple[str, int], ConvergenceTrace] = field(default_factory=dict)
    tours: dict[tuple[str, int], Tour] = field(default_factory=dict)


# ----------------------------------------------------------------------------
# loading


def load_reference(path: Path | None, dist: np.ndarray) -> tuple[np.ndarray | None, float | None]:
    """Reference tour and benchmark length; ``L_star`` falls back to the tour's own length."""
    if path is None:
        return None, None
    perm, lstar = parse_reference_tour(Path(path).read_text())
    problem = validate_tour(perm, dist.shape[0])
    if problem is not None:
        raise ValueError(f"reference tour {path}: {problem}")
    if lstar is None:
        lstar = tour_length(perm, dist)
    return perm, lstar


# ----------------------------------------------------------------------------
# decoding


@dataclass(frozen=True)
class Prepared:
    floored: FlooredHeatmap | None
    candidates: object


def prepare(dist: np.ndarray, heatmap: Heatmap | None, gamma: float, k: int = DEFAULT_K,
            eps_h: float = EPS_H, eps_floor: float = EPS_FLOOR) -> Prepared:
    """Symmetrize, clip/floor and build candidate lists.

    With ``gamma == 0`` the heatmap carries no weight, so it is not consulted
    at all: candidates are plain nearest neighbours, exactly as for MMAS.
    """
    if heatmap is None or gamma == 0.0:
        return Prepared(None, knn_candidate_lists(dist, k))
    floored = clip_floor(symmetrize(heatmap), eps_h, eps_floor)
    return Prepared(floored, build_candidate_lists(floored, dist, k))


def decode(dist: np.ndarray, heatmap: Heatmap | None, decoder: Decoder | str, params: MmasParams,
           ls: LsParams = LsParams(), *, k: int = DEFAULT_K, eps_h: float = EPS_H,
           eps_floor: float = EPS_FLOOR, gamma_mode: GammaMode | str = GammaMode.FIXED,
           entropy_target: float | None = None, gamma_grid: Sequence[float] = GAMMA_GRID,
           time_limit: float | None = None, target: float | None = None) -> DecodeResult:
    decoder = Decoder(decoder)
    gamma_mode = GammaMode(gamma_mode)
    t0 = time.perf_counter()
    if decoder is Decoder.GREEDY:
        if heatmap is None:
            raise ValueError("greedy decoding needs a heatmap")
        tour = greedy_merge(symmetrize(heatmap), dist)
        if params.local_search is not LocalSearch.NONE:
            prep = prepare(dist, heatmap, 1.0, k, eps_h, eps_floor)
            tour = local_search(tour, dist, prep.candidates, params.local_search, ls)
        return DecodeResult(tour, None, time.perf_counter() - t0, float("nan"))

    if decoder is Decoder.MMAS:
        heatmap = None
        params = replace(params, gamma=0.0)
    gamma = params.gamma
    if decoder is Decoder.HEATACO and gamma_mode is GammaMode.ENTROPY_TARGET:
        probe = prepare(dist, heatmap, 1.0, k, eps_h, eps_floor)
        sel = select_gamma(probe.floored, probe.candidates, entropy_target, gamma_grid,
                           local_search=params.local_search is not LocalSearch.NONE)
        gamma = sel.gamma
        params = replace(params, gamma=gamma)
    prep = prepare(dist, heatmap, gamma, k, eps_h, eps_floor)
    tour, trace = mmas_mod.run(dist, prep.floored, prep.candidates, params, ls, time_limit=time_limit, target=target)
    return DecodeResult(tour, trace, time.perf_counter() - t0, gamma)


def _slug(path: Path | None) -> str:
    return "none" if path is None else Path(path).stem


def run_experiment(config: RunConfig) -> ExperimentResult:
    """Decode every instance for every seed, validate, aggregate and (optionally) write files."""
    out = Path(config.output_dir) if config.output_dir is not None else None
    if out is not None:
        (out / "traces").mkdir(parents=True, exist_ok=True)
        (out / "tours").mkdir(parents=True, exist_ok=True)
    result = ExperimentResult(rows=[])
    params = replace(config.mmas, threads=config.threads)
    for inst_path, hm_path, ref_path in zip(config.instances, config.heatmaps, config.references):
        inst = load_instance(inst_path)
        heatmap = None
        if hm_path is not None and config.decoder is not Decoder.MMAS:
            heatmap = load_heatmap(hm_path, inst.n)
        dist = compute_distance_matrix(inst)
        _, lstar = load_reference(ref_path, dist)
        inst_id = inst.name or _slug(inst_path)
        hm_id = _slug(hm_path) if config.decoder is not Decoder.MMAS else "none"
        lengths, secs, gammas = [], [], []
        for seed in config.seeds:
            res = decode(dist, heatmap, config.decoder, replace(params, seed=seed), config.ls,
                         k=config.k, eps_h=config.eps_h, eps_floor=config.eps_floor,
                         gamma_mode=config.gamma_mode, entropy_target=config.entropy_target,
                         gamma_grid=config.gamma_grid, time_limit=config.time_limit)
            problem = validate_tour(res.tour.perm, inst.n)
            if problem is not None:
                raise InfeasibleTour(f"{inst_id} seed {seed}: {problem}")
            length = tour_length(res.tour.perm, dist)
            lengths.append(length)
            secs.append(res.seconds)
            gammas.append(res.gamma)
            key = (inst_id, seed)
            result.tours[key] = res.tour
            if res.trace is not None:
                result.traces[key] = res.trace
            if out is not None:
                stem = f"{inst_id}__{config.decoder.value}__{hm_id}__g{res.gamma:g}__s{seed}"
                if res.trace is not None:
                    res.trace.to_jsonl(out / "traces" / f"{stem}.jsonl")
                (out / "tours" / f"{stem}.tour").write_text(format_reference_tour(res.tour.perm, lstar))
        mean = float(np.mean(lengths))
        gap = None
        if lstar is None:
            log.warning("%s: no benchmark length available, gap left blank", inst_id)
        else:
            gap = optimality_gap(mean, lstar)
        row = ReportRow(
            instance=inst_id,
            decoder=config.decoder.value,
            heatmap=hm_id,
            gamma=float(gammas[0]) if len(set(gammas)) == 1 else float(np.mean(gammas)),
            local_search=params.local_search.value,
            mean_length=mean,
            std_length=float(np.std(lengths)),
            gap_percent=gap,
            mean_seconds=float(np.mean(secs)),
            seeds=len(lengths),
            lstar=lstar,
        )
        row.check()
        result.rows.append(row)
    if out is not None:
        write_report(out / "report.csv", result.rows)
    return result


def write_report(path: str | Path, rows: Sequence[ReportRow]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=REPORT_FIELDS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            rec = asdict(row)
            rec = {k: ("" if v is None else (repr(v) if isinstance(v, float) else v)) for k, v in rec.items()}
            writer.writerow(rec)


def read_report(path: str | Path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def sweep_gamma(config: RunConfig, grid: Sequence[float] = GAMMA_GRID) -> dict[float, list[ReportRow]]:
    """One experiment per gamma; writes ``gamma_grid.csv`` (instance x gamma gaps) when an output dir is set."""
    if config.decoder is not Decoder.HEATACO:
        raise ValueError("gamma sweeps need the heataco decoder")
    results: dict[float, list[ReportRow]] = {}
    for g in grid:
        sub_out = None if config.output_dir is None else Path(config.output_dir) / f"gamma_{g:g}"
        sub = replace(config, mmas=replace(config.mmas, gamma=float(g)), gamma_mode=GammaMode.FIXED,
                      output_dir=sub_out)
        results[float(g)] = run_experiment(sub).rows
    if config.output_dir is not None:
        path = Path(config.output_dir) / "gamma_grid.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["instance", "gamma", "mean_length", "gap_percent"])
            for g, rows in results.items():
                for r in rows:
                    writer.writerow([r.instance, repr(g), repr(r.mean_length),
                                     "" if r.gap_percent is None else repr(r.gap_percent)])
    return results


def mean_trace(traces: Sequence[ConvergenceTrace]) -> np.ndarray:
    arrays = [np.asarray(t.best_lengths, dtype=np.float64) for t in traces]
    if not arrays:
        raise ValueError("no traces")
    if any(a.size != arrays[0].size for a in arrays):
        raise ValueError("traces of one method must all have the same length")
    return np.mean(np.stack(arrays), axis=0)


def emit_convergence(traces: dict[str, Sequence[ConvergenceTrace] | np.ndarray], path: str | Path | None = None,
                     plot_alpha: float = 0.03, t_mid_fraction: float = 0.5) -> dict:
    """Average each method's traces, apply the log-gap transform and write plot data as JSON.

    The written object holds ``B``, ``c``, ``t`` (1-based iterations), and per
    method the raw mean curve ``L`` and the transformed curve ``y``.
    """
    if not traces:
        raise ValueError("need at least one method")
    curves = {}
    for name, tr in traces.items():
        if isinstance(tr, np.ndarray) or (len(tr) and not isinstance(tr[0], ConvergenceTrace)):
            curves[name] = np.asarray(tr, dtype=np.float64)
        else:
            curves[name] = mean_trace(tr)
    ys, info = convergence_transform(curves, plot_alpha, t_mid_fraction)
    length = next(iter(curves.values())).size
    data = {
        "B": info["B"],
        "c": info["c"],
        "t": list(range(1, length + 1)),
        "methods": {name: {"L": curves[name].tolist(), "y": ys[name].tolist()} for name in curves},
    }
    if path is not None:
        Path(path).write_text(json.dumps(data))
    return data


def summarize(rows: Sequence[ReportRow]) -> str:
    lines = []
    for r in rows:
        gap = "" if r.gap_percent is None else f"{r.gap_percent:.2f}%"
        lines.append(f"{r.instance:<20} {r.decoder:<8} {r.heatmap:<12} gamma={r.gamma:<5g} "
                     f"L={r.mean_length:.4f} gap={gap:<8} T={r.mean_seconds:.2f}s seeds={r.seeds}")
    return "\n".join(lines)


__all__ = [
    "Decoder", "GammaMode", "RunConfig", "ReportRow", "InfeasibleTour", "decode", "prepare",
    "run_experiment", "sweep_gamma", "emit_convergence", "write_report", "read_report",
    "load_reference", "summarize",
]
