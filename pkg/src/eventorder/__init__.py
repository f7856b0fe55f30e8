"""Infer the ordering of feature-level events in a progressive condition
from cross-sectional snapshots.

The main entry points are fit() (variational inference over orderings),
stage() (per-individual stage posteriors under a fitted model), the
synth module for synthetic cohorts, and the baseline module for the
classic greedy/MCMC approach. The command line mirrors these as
`eventorder simulate|fit|stage|evaluate`.
"""

from .baseline import McmcTrace, ebm_greedy, ebm_mcmc, hard_seq_loglik
from .core import (
    Dataset,
    DivergenceError,
    EventSequence,
    FittedModel,
    Label,
    LikelihoodTables,
    MixtureParams,
    ModelConfig,
    SoftPermutation,
    StagePosterior,
    log_sum_exp,
    validate_dataset,
)
from .evaluate import (
    BenchmarkRow,
    benchmark,
    fraction_correct,
    kendalls_tau,
    positional_variance_diagram,
)
from .mixture import build_tables, fit_mixtures
from .model import data_loglik, elbo, fit, sample_positional_variance, stage
from .synth import SynthSpec, generate

__version__ = "0.1.0"

__all__ = [
    "BenchmarkRow",
    "Dataset",
    "DivergenceError",
    "EventSequence",
    "FittedModel",
    "Label",
    "LikelihoodTables",
    "McmcTrace",
    "MixtureParams",
    "ModelConfig",
    "SoftPermutation",
    "StagePosterior",
    "SynthSpec",
    "benchmark",
    "build_tables",
    "data_loglik",
    "ebm_greedy",
    "ebm_mcmc",
    "elbo",
    "fit",
    "fit_mixtures",
    "fraction_correct",
    "generate",
    "hard_seq_loglik",
    "kendalls_tau",
    "log_sum_exp",
    "positional_variance_diagram",
    "sample_positional_variance",
    "stage",
    "validate_dataset",
    "__version__",
]
