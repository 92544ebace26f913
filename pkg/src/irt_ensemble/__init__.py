"""Bagged decision trees weighted by item-response-theory abilities.

Trees are scored on their training samples; the resulting classifier x
sample 0/1 matrix is fitted with one of three latent-trait models and each
tree votes with weight ``softmax(theta)``.
"""

__version__ = "0.1.0"

from .data import (Dataset, Preprocessor, gen_checkerboard, load_bundled, load_csv,
                   simulate_responses, train_test_split)
from .em import EmConfig, fit_em
from .ensemble import (IrtEnsembleModel, build_performance_matrix, compute_weights,
                       fit_irt_ensemble, load_bundle, majority_vote, predict_batch,
                       predict_weighted, save_bundle)
from .gibbs import Model2Priors, fit_gibbs
from .mh import Model1Priors, fit_mh
from .results import FitResult, McmcConfig
from .tree import BasePool, TreeConfig, fit_base_pool, fit_tree

__all__ = [
    "BasePool",
    "Dataset",
    "EmConfig",
    "FitResult",
    "IrtEnsembleModel",
    "McmcConfig",
    "Model1Priors",
    "Model2Priors",
    "Preprocessor",
    "TreeConfig",
    "build_performance_matrix",
    "compute_weights",
    "fit_base_pool",
    "fit_em",
    "fit_gibbs",
    "fit_irt_ensemble",
    "fit_mh",
    "fit_tree",
    "gen_checkerboard",
    "load_bundle",
    "load_bundled",
    "load_csv",
    "majority_vote",
    "predict_batch",
    "predict_weighted",
    "save_bundle",
    "simulate_responses",
    "train_test_split",
]
