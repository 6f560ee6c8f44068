"""gatefuse: gated fusion of graph and text signals for explainable
social-network user embeddings.

The library trains a joint model over a heterogeneous interaction graph and
per-user text embeddings. A small learnable gate assigns each user a pair of
modality weights (alpha for graph, beta for text, alpha + beta = 1) that both
scales the fused representation and doubles as a per-user explanation of
which modality drove the prediction.
"""

__version__ = "0.1.0"

from .autodiff import GradTape, Tensor
from .data import DatasetBundle
from .fusion import FusionConfig, GateOutput, contribution_of
from .graph import HeteroGraph, build_graph, normalize, permute_nodes
from .synthetic import SynthConfig, bayes_oracle_accuracy, generate_synthetic
from .training import (
    EvalReport,
    TrainConfig,
    evaluate,
    make_split,
    run_grid,
    train,
)

__all__ = [
    "DatasetBundle",
    "EvalReport",
    "FusionConfig",
    "GateOutput",
    "GradTape",
    "HeteroGraph",
    "SynthConfig",
    "Tensor",
    "TrainConfig",
    "bayes_oracle_accuracy",
    "build_graph",
    "contribution_of",
    "evaluate",
    "generate_synthetic",
    "make_split",
    "normalize",
    "permute_nodes",
    "run_grid",
    "train",
    "__version__",
]
