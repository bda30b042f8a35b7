"""Command line entry point: ``heataco {decode,bench,sweep-gamma,diagnose,select-gamma}``.

Exit codes: 0 success, 1 infeasible output tour, 2 input or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from .diagnostics import DEFAULT_BIN_EDGES, diagnose, select_gamma, write_reports
from .harness import (Decoder, GammaMode, InfeasibleTour, RunConfig, decode, emit_convergence,
                      load_reference, prepare, run_experiment, summarize, sweep_gamma)
from .heatmap import (DEFAULT_K, EPS_FLOOR, EPS_H, load_heatmap, symmetrize, thresholded_edge_set,
                      topk_edge_set)
from .instance import ParseError, compute_distance_matrix, format_reference_tour, load_instance, optimality_gap
from .localsearch import LocalSearch, LsParams
from .mmas import GAMMA_GRID, ConvergenceTrace, Deposit, EvaporationScope, MmasParams

EXIT_OK, EXIT_INFEASIBLE, EXIT_INPUT = 0, 1, 2


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(","))


def _ints(text: str) -> tuple[int, ...]:
    if "-" in text and "," not in text:
        lo, hi = text.split("-")
        return tuple(range(int(lo), int(hi) + 1))
    return tuple(int(v) for v in text.split(","))


def _add_search_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--decoder", choices=[d.value for d in Decoder], default="heataco")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=2.0)
    p.add_argument("--gamma", type=float, default=None, help="heatmap exponent (default 1; 0 for mmas)")
    p.add_argument("--gamma-mode", choices=[g.value for g in GammaMode], default="fixed")
    p.add_argument("--entropy-target", type=float, default=None)
    p.add_argument("--rho", type=float, default=0.02)
    p.add_argument("--ants", type=int, default=32)
    p.add_argument("--iterations", type=int, default=5000)
    p.add_argument("--local-search", choices=[m.value for m in LocalSearch], default="none")
    p.add_argument("--evaporation", choices=[e.value for e in EvaporationScope], default=None)
    p.add_argument("--deposit", choices=[d.value for d in Deposit], default="global_best")
    p.add_argument("--max-passes-2opt", type=int, default=50)
    p.add_argument("--max-passes-3opt", type=int, default=10)
    p.add_argument("--k", type=int, default=DEFAULT_K)
    p.add_argument("--eps-h", type=float, default=EPS_H)
    p.add_argument("--eps-floor", type=float, default=EPS_FLOOR)
    p.add_argument("--threads", type=int, default=None, help="default: $HEATACO_THREADS or 1")
    p.add_argument("--time-limit", type=float, default=None, help="seconds per run")


def _params(args, seed: int = 0) -> MmasParams:
    gamma = args.gamma
    if gamma is None:
        gamma = 0.0 if args.decoder == "mmas" else 1.0
    return MmasParams(alpha=args.alpha, beta=args.beta, gamma=gamma, rho=args.rho, m=args.ants,
                      iterations=args.iterations, seed=seed, evaporation_scope=args.evaporation,
                      local_search=args.local_search, deposit=args.deposit,
                      threads=args.threads or RunConfig.threads_from_env())


def _ls(args) -> LsParams:
    return LsParams(args.max_passes_2opt, args.max_passes_3opt)


def _config(args, instances, heatmaps, refs) -> RunConfig:
    return RunConfig(
        instances=tuple(instances), heatmaps=tuple(heatmaps), references=tuple(refs),
        decoder=args.decoder, mmas=_params(args), ls=_ls(args), seeds=args.seeds,
        threads=args.threads or RunConfig.threads_from_env(), output_dir=args.out_dir,
        gamma_mode=args.gamma_mode, entropy_target=args.entropy_target, k=args.k,
        eps_h=args.eps_h, eps_floor=args.eps_floor, time_limit=args.time_limit,
    )


def _aligned(values, count, name):
    values = values or []
    if not values:
        return [None] * count
    if len(values) == 1 and count > 1:
        raise ValueError(f"give one {name} per instance")
    if len(values) != count:
        raise ValueError(f"{len(values)} {name}s for {count} instances")
    return [None if v in ("none", None) else v for v in values]


# ----------------------------------------------------------------------------
# verbs


def cmd_decode(args) -> int:
    inst = load_instance(args.instance)
    heatmap = None if args.heatmap in (None, "none") else load_heatmap(args.heatmap, inst.n)
    dist = compute_distance_matrix(inst)
    _, lstar = load_reference(args.ref, dist)
    res = decode(dist, heatmap, args.decoder, _params(args, args.seed), _ls(args), k=args.k,
                 eps_h=args.eps_h, eps_floor=args.eps_floor, gamma_mode=args.gamma_mode,
                 entropy_target=args.entropy_target, time_limit=args.time_limit)
    from .instance import validate_tour

    problem = validate_tour(res.tour.perm, inst.n)
    if problem is not None:
        print(f"infeasible tour: {problem}", file=sys.stderr)
        return EXIT_INFEASIBLE
    gap = "" if lstar is None else f" gap={optimality_gap(res.tour.length, lstar):.4f}%"
    print(f"length={res.tour.length!r}{gap} seconds={res.seconds:.3f} gamma={res.gamma:g}")
    if args.out:
        Path(args.out).write_text(format_reference_tour(res.tour.perm, lstar))
    if args.trace and res.trace is not None:
        res.trace.to_jsonl(args.trace)
    return EXIT_OK


def cmd_bench(args) -> int:
    n = len(args.instance)
    cfg = _config(args, args.instance, _aligned(args.heatmap, n, "heatmap"), _aligned(args.ref, n, "reference"))
    result = run_experiment(cfg)
    print(summarize(result.rows))
    return EXIT_OK


def cmd_sweep(args) -> int:
    n = len(args.instance)
    cfg = _config(args, args.instance, _aligned(args.heatmap, n, "heatmap"), _aligned(args.ref, n, "reference"))
    results = sweep_gamma(cfg, args.grid)
    for g, rows in results.items():
        print(f"# gamma={g:g}")
        print(summarize(rows))
    return EXIT_OK


def cmd_diagnose(args) -> int:
    inst = load_instance(args.instance)
    dist = compute_distance_matrix(inst)
    ref, _ = load_reference(args.ref, dist)
    if ref is None:
        raise ValueError("diagnose needs --ref")
    heatmap = symmetrize(load_heatmap(args.heatmap, inst.n))
    if args.topk:
        edges, fname = topk_edge_set(heatmap, args.topk), f"top{args.topk}"
    else:
        edges, fname = thresholded_edge_set(heatmap, args.eps_h), f"eps{args.eps_h:g}"
    report = diagnose(heatmap, ref, edges, instance=inst.name or Path(args.instance).stem,
                      heatmap_id=Path(args.heatmap).stem, filter_name=fname,
                      bin_edges=args.bins or DEFAULT_BIN_EDGES)
    rec = report.to_record()
    if args.out:
        write_reports(args.out, [report])
    print(json.dumps({k: rec[k] for k in ("edges_per_node", "coverage", "miss_count", "miss_percent", "ce", "wce")}))
    return EXIT_OK


def cmd_select_gamma(args) -> int:
    inst = load_instance(args.instance)
    dist = compute_distance_matrix(inst)
    heatmap = load_heatmap(args.heatmap, inst.n)
    prep = prepare(dist, heatmap, 1.0, args.k, args.eps_h, args.eps_floor)
    sel = select_gamma(prep.floored, prep.candidates, args.target, args.grid,
                       local_search=not args.no_local_search)
    print(json.dumps(asdict(sel)))
    return EXIT_OK


def cmd_convergence(args) -> int:
    methods: dict[str, list[ConvergenceTrace]] = {}
    for spec in args.method:
        name, _, pattern = spec.partition("=")
        files = sorted(Path().glob(pattern)) if not Path(pattern).is_file() else [Path(pattern)]
        if not files:
            raise ValueError(f"no trace files match {pattern!r}")
        methods[name] = [ConvergenceTrace.from_jsonl(f) for f in files]
    data = emit_convergence(methods, args.out, args.plot_alpha, args.t_mid)
    print(json.dumps({"B": data["B"], "c": data["c"], "methods": list(data["methods"])}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="heataco", description="Heatmap-guided MMAS decoding for Euclidean TSP")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("decode", help="decode one instance with one seed")
    p.add_argument("--instance", required=True)
    p.add_argument("--heatmap", default=None)
    p.add_argument("--ref", default=None, help="reference tour (for the gap)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="write the tour here")
    p.add_argument("--trace", default=None, help="write the convergence trace (jsonl) here")
    _add_search_args(p)
    p.set_defaults(func=cmd_decode)

    for verb, func, helptext in (("bench", cmd_bench, "multi-instance, multi-seed protocol"),
                                 ("sweep-gamma", cmd_sweep, "bench over a gamma grid")):
        p = sub.add_parser(verb, help=helptext)
        p.add_argument("--instance", action="append", required=True)
        p.add_argument("--heatmap", action="append", default=None)
        p.add_argument("--ref", action="append", default=None)
        p.add_argument("--seeds", type=_ints, default=tuple(range(10)), help="e.g. 0-9 or 1,2,3")
        p.add_argument("--out-dir", type=Path, default=None)
        if verb == "sweep-gamma":
            p.add_argument("--grid", type=_floats, default=GAMMA_GRID)
        _add_search_args(p)
        p.set_defaults(func=func)

    p = sub.add_parser("diagnose", help="candidate sparsity, recall, CE/WCE and interval histograms")
    p.add_argument("--instance", required=True)
    p.add_argument("--heatmap", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--eps-h", type=float, default=EPS_H)
    p.add_argument("--topk", type=int, default=None, help="use the row-wise top-k filter instead")
    p.add_argument("--bins", type=_floats, default=None)
    p.add_argument("--out", default=None, help="write the jsonl report here")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("select-gamma", help="entropy-targeted gamma choice")
    p.add_argument("--instance", required=True)
    p.add_argument("--heatmap", required=True)
    p.add_argument("--target", type=float, default=None, help="default 8 with local search, 4 without")
    p.add_argument("--grid", type=_floats, default=GAMMA_GRID)
    p.add_argument("--no-local-search", action="store_true")
    p.add_argument("--k", type=int, default=DEFAULT_K)
    p.add_argument("--eps-h", type=float, default=EPS_H)
    p.add_argument("--eps-floor", type=float, default=EPS_FLOOR)
    p.set_defaults(func=cmd_select_gamma)

    p = sub.add_parser("convergence", help="log-gap plot data from trace files")
    p.add_argument("--method", action="append", required=True, help="NAME=GLOB of jsonl traces")
    p.add_argument("--out", required=True)
    p.add_argument("--plot-alpha", type=float, default=0.03)
    p.add_argument("--t-mid", type=float, default=0.5)
    p.set_defaults(func=cmd_convergence)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InfeasibleTour as exc:
        print(f"infeasible tour: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ParseError, ValueError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
