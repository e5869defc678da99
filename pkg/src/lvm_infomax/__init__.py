"""Bayesian active learning (infomax input selection) for discrete latent variable models."""

from .core import (
    CandidateSet,
    ExperimentConfig,
    ExperimentLog,
    RngStream,
    TrialRecord,
    build_candidate_set,
    load_housing_pool,
    log_append,
)
from .estimators import BernoulliIOHMM, InfomaxSelector, MixtureBernoulliGLM, MixtureLinearRegression
from .fisher import fisher_angle_scan, fisher_identifiable, fisher_mc_trace, fisher_nonidentifiable
from .harness import (
    get_preset,
    run_closed_loop,
    run_parallel_chains,
    run_pool,
    run_replicated,
    run_state_decoding_eval,
)
from .infomax import aligned_rmse, bic, mutual_information, posterior_entropy, select_input
from .params import GlmParams, IoHmmParams, MglmParams, MlrParams, ParamSampleSet

__version__ = "0.1.0"

__all__ = [
    "BernoulliIOHMM",
    "CandidateSet",
    "ExperimentConfig",
    "ExperimentLog",
    "GlmParams",
    "InfomaxSelector",
    "IoHmmParams",
    "MglmParams",
    "MixtureBernoulliGLM",
    "MixtureLinearRegression",
    "MlrParams",
    "ParamSampleSet",
    "RngStream",
    "TrialRecord",
    "aligned_rmse",
    "bic",
    "build_candidate_set",
    "fisher_angle_scan",
    "fisher_identifiable",
    "fisher_mc_trace",
    "fisher_nonidentifiable",
    "get_preset",
    "load_housing_pool",
    "log_append",
    "mutual_information",
    "posterior_entropy",
    "run_closed_loop",
    "run_parallel_chains",
    "run_pool",
    "run_replicated",
    "run_state_decoding_eval",
    "select_input",
]
