"""Weighted graph contrastive learning for implicit-feedback recommendation.

Lightweight graph convolution over the user-item bipartite graph, uniform
noise on the final layer's view, a squeeze-and-excitation gate that weights
the two contrastive views feature-wise, and joint pairwise-ranking +
InfoNCE training with exact analytic gradients.
"""

from .data import (Dataset, Interaction, SplitSpec, compute_sparsity, dataset_stats,
                   kcore_filter, load_dataset, load_interactions, save_dataset, split)
from .errors import ConfigError, DataError, NumericError, ParseError, WeightedGCLError
from .estimator import WeightedGCL, check_interactions
from .evaluation import EvalReport, evaluate, ndcg_at_k, rank_items, recall_at_k
from .graph import (BipartiteGraph, NormalizedAdjacency, build_adjacency,
                    graph_from_dataset, propagate)
from .model import (ForwardState, GranularitySchedule, ModelParams, PerturbRecord,
                    aggregate_mean, compute_layer_views, excite, forward,
                    granularity_dims, init_params, load_checkpoint, perturb,
                    recalibrate, save_checkpoint, squeeze)
from .objective import (Batch, Gradients, LossBreakdown, LossConfig, Pools,
                        batch_pools, bpr_loss, full_pools, infonce_loss,
                        total_loss_and_grads)
from .synth import generate_interactions
from .training import (AdamState, TrainConfig, TrainResult, adam_step,
                       clean_aggregate, sample_negatives, train_loop)

__version__ = "0.1.0"

__all__ = [
    "AdamState", "Batch", "BipartiteGraph", "ConfigError", "DataError", "Dataset",
    "EvalReport", "ForwardState", "Gradients", "GranularitySchedule", "Interaction",
    "LossBreakdown", "LossConfig", "ModelParams", "NormalizedAdjacency", "NumericError",
    "ParseError", "PerturbRecord", "Pools", "SplitSpec", "TrainConfig", "TrainResult",
    "WeightedGCL", "WeightedGCLError", "adam_step", "aggregate_mean", "batch_pools",
    "bpr_loss", "build_adjacency", "check_interactions", "clean_aggregate",
    "compute_layer_views", "compute_sparsity", "dataset_stats", "evaluate", "excite",
    "forward", "full_pools", "generate_interactions", "graph_from_dataset",
    "granularity_dims", "infonce_loss", "init_params", "kcore_filter",
    "load_checkpoint", "load_dataset", "load_interactions", "ndcg_at_k", "perturb",
    "propagate", "rank_items", "recalibrate", "recall_at_k", "sample_negatives",
    "save_checkpoint", "save_dataset", "split", "squeeze", "total_loss_and_grads",
    "train_loop",
]
