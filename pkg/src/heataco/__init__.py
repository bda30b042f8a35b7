"""Heatmap-guided Max-Min Ant System decoding for Euclidean TSP."""

from .diagnostics import (CandidateStats, GammaSelection, IntervalContribution, candidate_stats, cross_entropy,
                          effective_support, interval_contribution, select_gamma)
from .greedy import greedy_merge, greedy_score
from .harness import Decoder, GammaMode, ReportRow, RunConfig, decode, emit_convergence, run_experiment, sweep_gamma
from .heatmap import (CandidateLists, FlooredHeatmap, Heatmap, build_candidate_lists, clip_floor,
                      knn_candidate_lists, load_heatmap, symmetrize, thresholded_edge_set, topk_edge_set)
from .instance import (DistanceMode, ParseError, Tour, TourError, TspInstance, compute_distance_matrix,
                       optimality_gap, parse_coords, parse_tsplib, tour_length, validate_tour)
from .localsearch import LocalSearch, LsParams, three_opt, two_opt
from .mmas import ConvergenceTrace, MmasParams, PheromoneState, convergence_transform, run

__version__ = "0.1.0"
