"""Bernoulli input-output HMM and its mixture-of-GLMs special case."""

from .gibbs import glm_mismatch_posterior, iohmm_gibbs_run, mglm_gibbs_run, mglm_state_probs
from .glm import (
    GlmPrior,
    LaplaceStepResult,
    augmented_to_bias,
    bernoulli_glm_prob,
    bias_to_augmented,
    glm_design,
    glm_map,
    glm_sample_posterior,
)
from .hmm import (
    HmmMessages,
    bernoulli_loglik_matrix,
    decode_states,
    design_for,
    forward_backward,
    forward_backward_lik,
    sample_state_sequence,
)
from .vi import IoHmmVariationalState, expected_log_simplex, iohmm_vi_run, iohmm_vi_sample

__all__ = [
    "GlmPrior",
    "HmmMessages",
    "IoHmmVariationalState",
    "LaplaceStepResult",
    "augmented_to_bias",
    "bernoulli_glm_prob",
    "bernoulli_loglik_matrix",
    "bias_to_augmented",
    "decode_states",
    "design_for",
    "expected_log_simplex",
    "forward_backward",
    "forward_backward_lik",
    "glm_design",
    "glm_map",
    "glm_mismatch_posterior",
    "glm_sample_posterior",
    "iohmm_gibbs_run",
    "iohmm_vi_run",
    "iohmm_vi_sample",
    "mglm_gibbs_run",
    "mglm_state_probs",
    "sample_state_sequence",
]
