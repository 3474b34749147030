"""Diversity-aware collocation point selection for PINNs on viscous Burgers."""

from .baselines import greedy_kcenter, random_select, topk_residual, uniform_select
from .geometry import KnnGraph, SimilarityConfig, build_knn_graph, lhs_anchors
from .pinn import LossWeights, MlpParams, TrainConfig, TrainingSets, init_params, train
from .qubo import SaConfig, SelectionWeights, anneal, build_dense_khot, build_sparse_bqm
from .reference import BurgersProblem, ReferenceSolution, sample_reference, solve_reference
from .scoring import CandidatePool, ScoringConfig, sample_pool, score_candidates
from .selection import PipelineConfig, Selection, hybrid_select, one_shot_select, repair_exact_k

__all__ = [
    "BurgersProblem", "CandidatePool", "KnnGraph", "LossWeights", "MlpParams",
    "PipelineConfig", "ReferenceSolution", "SaConfig", "ScoringConfig", "Selection",
    "SelectionWeights", "SimilarityConfig", "TrainConfig", "TrainingSets", "anneal",
    "build_dense_khot", "build_knn_graph", "build_sparse_bqm", "greedy_kcenter",
    "hybrid_select", "init_params", "lhs_anchors", "one_shot_select", "random_select",
    "repair_exact_k", "sample_pool", "sample_reference", "score_candidates", "solve_reference",
    "topk_residual", "train", "uniform_select",
]
