"""Mean-field variational inference for the Bernoulli IO-HMM.

The factorization is q(pi0) q(A) q(w) q(z): Dirichlet factors for the
initial distribution and each transition row, a Gaussian per state for the
GLM weights (refit by a responsibility-weighted Laplace approximation) and
an HMM-structured q(z) obtained by forward-backward on the tilde
quantities exp E[ln pi0], exp E[ln A] and exp E[ln p(y | w)].
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..core import ExperimentConfig, as_stream
from ..params import ParamSampleSet
from ..randkit import digamma, jittered_cholesky
from .glm import LIK_BERNOULLI, nb_glm_map
from .hmm import bernoulli_loglik_matrix, design_for, forward_backward_lik

__all__ = ["IoHmmVariationalState", "expected_log_simplex", "iohmm_vi_run", "iohmm_vi_sample"]

logger = logging.getLogger(__name__)


@dataclass
class IoHmmVariationalState:
    """Variational factors of an IO-HMM fit.

    Attributes
    ----------
    alpha_pi0 : ndarray (K,)
    alpha_A : ndarray (K, K)
        Dirichlet parameters of q(pi0) and of each row of q(A).
    mu, Sigma : ndarray (K, P), (K, P, P)
        Gaussian factors q(w_k).
    gamma : ndarray (T, K)
        Unary marginals q(z_t = k).
    xi : ndarray (T-1, K, K)
        Pairwise marginals q(z_t-1 = j, z_t = k).
    """

    alpha_pi0: np.ndarray
    alpha_A: np.ndarray
    mu: np.ndarray
    Sigma: np.ndarray
    gamma: np.ndarray
    xi: np.ndarray
    bias: bool = True
    n_iter: int = 0
    converged: bool = False
    loglik: list = field(default_factory=list)

    @property
    def K(self) -> int:
        return self.mu.shape[0]


def expected_log_simplex(alpha) -> np.ndarray:
    """E[ln p] under Dir(alpha), row-wise: psi(alpha) - psi(sum alpha)."""
    a = np.asarray(alpha, dtype=np.float64)
    return digamma(a) - digamma(a.sum(axis=-1, keepdims=True))


def _weighted_laplace(Xd, y, wts, w0, sigma0_sq, w_init):
    w, H, ok = nb_glm_map(Xd, y, np.ascontiguousarray(wts), w0, sigma0_sq, w_init, LIK_BERNOULLI)
    if not ok:
        logger.warning("weighted MAP fit did not converge; keeping the last iterate")
    return w, np.linalg.inv(H)


def iohmm_vi_run(log, config: ExperimentConfig, rng=None, max_iter: int | None = None,
                 tol: float | None = None) -> IoHmmVariationalState:
    """Coordinate-ascent VI for the IO-HMM.

    Each iteration forms exp E[ln pi0] and exp E[ln A] from the Dirichlet
    factors, estimates exp E[ln p(y_t | w_k)] from ``config.vi_samples``
    fixed standard-normal draws pushed through each q(w_k), runs
    forward-backward on those quantities, updates the Dirichlet factors
    from the unary and pairwise marginals, and refits each q(w_k). It stops
    when the relative change of the forward-backward log normalizer drops
    below ``tol`` or after ``max_iter`` iterations.
    """
    K, P = config.K, config.n_weights
    Xd, y, bias = design_for(log, P)
    T = len(y)
    if T == 0:
        raise ValueError("variational inference needs at least one trial")
    max_iter = config.vi_max_iter if max_iter is None else int(max_iter)
    tol = config.vi_tol if tol is None else float(tol)
    stream = as_stream(config.seed).child(992) if rng is None else as_stream(rng)
    g = stream.generator
    w0 = config.prior_mean()
    s0 = float(config.sigma0_sq)
    prior = config.dirichlet_alpha()

    mu = w0 + np.sqrt(s0) * g.standard_normal((K, P))
    Sigma = np.tile(np.eye(P) * s0, (K, 1, 1))
    a_pi0 = prior[0].copy()
    a_A = prior[1:].copy()
    eps = g.standard_normal((config.vi_samples, P))  # common random numbers across iterations
    gamma = np.full((T, K), 1.0 / K)
    xi = np.full((max(T - 1, 0), K, K), 1.0 / K**2)
    history: list[float] = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        pi_t = np.exp(expected_log_simplex(a_pi0))
        A_t = np.exp(expected_log_simplex(a_A))
        logL = np.zeros((T, K))
        for k in range(K):
            Wk = mu[k] + eps @ jittered_cholesky(Sigma[k]).T
            logL[:, k] = bernoulli_loglik_matrix(Xd, y, Wk).mean(axis=1)
        msgs = forward_backward_lik(pi_t, A_t, logL=logL)
        gamma = msgs.posteriors
        xi = msgs.pairwise(A_t)
        a_pi0 = prior[0] + gamma[0]
        a_A = prior[1:] + xi.sum(axis=0)
        for k in range(K):
            mu[k], Sigma[k] = _weighted_laplace(Xd, y, gamma[:, k], w0, s0, mu[k].copy())
        history.append(msgs.loglik)
        if len(history) > 1 and abs(history[-1] - history[-2]) <= tol * max(abs(history[-2]), 1e-12):
            converged = True
            break
    return IoHmmVariationalState(a_pi0, a_A, mu, Sigma, gamma, xi, bias, it, converged, history)


def iohmm_vi_sample(state: IoHmmVariationalState, M: int, rng) -> ParamSampleSet:
    """M independent draws from the variational posterior.

    The next-trial state distribution of each draw is q(z_T) propagated
    through that draw's transition matrix.
    """
    g = as_stream(rng).generator
    K, P = state.mu.shape
    W = np.empty((M, K, P))
    for k in range(K):
        W[:, k] = state.mu[k] + g.standard_normal((M, P)) @ _chol_or_zero(state.Sigma[k]).T
    pi0 = _dirichlet_rows(state.alpha_pi0, M, g)
    A = np.stack([_dirichlet_rows(state.alpha_A[k], M, g) for k in range(K)], axis=1)
    nxt = np.einsum("k,mkl->ml", state.gamma[-1], A)
    return ParamSampleSet("iohmm", W, pi0, trans=A, state_probs=nxt, bias=state.bias)


def _chol_or_zero(S):
    if not np.any(S):
        return np.zeros_like(S)
    return jittered_cholesky(S)


def _dirichlet_rows(alpha, M, g):
    if np.size(alpha) == 1:
        return np.ones((M, 1))
    return g.dirichlet(alpha, size=M)
