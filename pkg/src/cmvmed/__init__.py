"""Consensus-based multi-view maximum entropy discrimination (CMV-MED).

Semi-supervised training of one Gaussian-kernel MED classifier per view,
coupled through a consensus label distribution on unlabeled samples and
solved by deterministic-annealing EM.
"""

from .consensus import ConsensusDistribution, curvature_weights, lambda_at, update_consensus
from .data import MultiViewDataset, length_normalize, load, split, synth_two_view
from .errors import CmvMedError, InputError, NumericalError, TrainingError, UsageError
from .kernel import GramBundle, KernelSpec, cross_gram, gram, kernel_eval, modified_kernel
from .med import MedPosterior, train_single_view
from .qp import DualSolution, brute_force_dual, solve_dual
from .trainer import CmvMedModel, TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "CmvMedError",
    "CmvMedModel",
    "ConsensusDistribution",
    "DualSolution",
    "GramBundle",
    "InputError",
    "KernelSpec",
    "MedPosterior",
    "MultiViewDataset",
    "NumericalError",
    "TrainConfig",
    "TrainingError",
    "UsageError",
    "brute_force_dual",
    "cross_gram",
    "curvature_weights",
    "gram",
    "kernel_eval",
    "lambda_at",
    "length_normalize",
    "load",
    "modified_kernel",
    "solve_dual",
    "split",
    "synth_two_view",
    "train",
    "train_single_view",
    "update_consensus",
]
