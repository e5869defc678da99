"""Gibbs samplers for the Bernoulli IO-HMM, the mixture of GLMs and the single GLM."""

from __future__ import annotations

import numba
import numpy as np

from ..core import ExperimentConfig, as_stream
from ..params import IoHmmParams, MglmParams, ParamSampleSet
from ..randkit import nb_dirichlet
from .glm import LIK_BERNOULLI, GlmPrior, nb_glm_logpost, nb_glm_map, nb_laplace_mh
from .hmm import design_for, nb_backward, nb_bernoulli_loglik, nb_forward, nb_sample_path, nb_shift_rows

__all__ = ["iohmm_gibbs_run", "mglm_gibbs_run", "glm_mismatch_posterior", "mglm_state_probs"]

MGLM_SWEEPS = 700
MGLM_BURN_IN = 200


@numba.njit(cache=True, nogil=True)
def _iohmm_kernel(X, y, W, A, pi0, z, w0, s0, alpha, burn_in, n_keep, seed):
    np.random.seed(seed)
    T, P = X.shape
    K = W.shape[0]
    W_out = np.empty((n_keep, K, P))
    A_out = np.empty((n_keep, K, K))
    pi_out = np.empty((n_keep, K))
    next_out = np.empty((n_keep, K))
    wts = np.empty(T)
    counts = np.empty(K)
    n_acc = 0
    n_prop = 0
    for it in range(burn_in + n_keep):
        # weights, then transition row, per state
        for k in range(K):
            for t in range(T):
                wts[t] = 1.0 if z[t] == k else 0.0
            w_new, acc, _, _ = nb_laplace_mh(X, y, wts, w0, s0, W[k].copy(), LIK_BERNOULLI)
            W[k] = w_new
            n_acc += acc
            n_prop += 1
            for l in range(K):
                counts[l] = alpha[k + 1, l]
            for t in range(T - 1):
                if z[t] == k:
                    counts[z[t + 1]] += 1.0
            A[k] = nb_dirichlet(counts)
        # states
        L, _ = nb_shift_rows(nb_bernoulli_loglik(X, y, W))
        F, logc = nb_forward(pi0, A, L)
        B = nb_backward(A, L, logc)
        nb_sample_path(pi0, A, L, B, z)
        # initial distribution
        for l in range(K):
            counts[l] = alpha[0, l]
        counts[z[0]] += 1.0
        pi0[:] = nb_dirichlet(counts)
        if it >= burn_in:
            j = it - burn_in
            W_out[j] = W
            A_out[j] = A
            pi_out[j] = pi0
            # next-trial state distribution under the retained draw
            F, logc = nb_forward(pi0, A, L)
            for l in range(K):
                s = 0.0
                for m in range(K):
                    s += F[T - 1, m] * A[m, l]
                next_out[j, l] = s
    return W_out, A_out, pi_out, next_out, n_acc, n_prop


@numba.njit(cache=True, nogil=True)
def _mglm_kernel(X, y, W, pi, z, w0, s0, alpha0, burn_in, n_keep, seed):
    np.random.seed(seed)
    T, P = X.shape
    K = W.shape[0]
    W_out = np.empty((n_keep, K, P))
    pi_out = np.empty((n_keep, K))
    wts = np.empty(T)
    counts = np.empty(K)
    p = np.empty(K)
    n_acc = 0
    n_prop = 0
    for it in range(burn_in + n_keep):
        for k in range(K):
            for t in range(T):
                wts[t] = 1.0 if z[t] == k else 0.0
            w_new, acc, _, _ = nb_laplace_mh(X, y, wts, w0, s0, W[k].copy(), LIK_BERNOULLI)
            W[k] = w_new
            n_acc += acc
            n_prop += 1
        for l in range(K):
            counts[l] = alpha0[l]
        for t in range(T):
            counts[z[t]] += 1.0
        pi[:] = nb_dirichlet(counts)
        L, _ = nb_shift_rows(nb_bernoulli_loglik(X, y, W))
        for t in range(T):
            s = 0.0
            for k in range(K):
                p[k] = L[t, k] * pi[k]
                s += p[k]
            u = np.random.random() * s
            acc_p = 0.0
            zt = K - 1
            for k in range(K):
                acc_p += p[k]
                if u < acc_p:
                    zt = k
                    break
            z[t] = zt
        if it >= burn_in:
            j = it - burn_in
            W_out[j] = W
            pi_out[j] = pi
    return W_out, pi_out, n_acc, n_prop


@numba.njit(cache=True, nogil=True)
def _glm_chain(X, y, w0, s0, w_init, burn_in, n_keep, seed):
    np.random.seed(seed)
    T, P = X.shape
    wts = np.ones(T)
    # the target is fixed, so one MAP fit serves every proposal
    w_map, Pm, ok = nb_glm_map(X, y, wts, w0, s0, w_init, LIK_BERNOULLI)
    out = np.empty((n_keep, P))
    if not ok:
        return out, 0, 0, False
    L = np.linalg.cholesky(Pm)
    w = w_map.copy()
    lp = nb_glm_logpost(X, y, wts, w, w0, s0, LIK_BERNOULLI)
    q = 0.0
    n_acc = 0
    dev = np.empty(P)
    for it in range(burn_in + n_keep):
        for i in range(P):
            dev[i] = np.random.standard_normal()
        for i in range(P - 1, -1, -1):
            s = dev[i]
            for j in range(i + 1, P):
                s -= L[j, i] * dev[j]
            dev[i] = s / L[i, i]
        w_star = w_map + dev
        q_star = 0.0
        for i in range(P):
            for j in range(P):
                q_star += dev[i] * Pm[i, j] * dev[j]
        lp_star = nb_glm_logpost(X, y, wts, w_star, w0, s0, LIK_BERNOULLI)
        log_alpha = lp_star - lp - 0.5 * q + 0.5 * q_star
        if log_alpha >= 0.0 or np.log(np.random.random()) < log_alpha:
            w = w_star
            lp = lp_star
            q = q_star
            n_acc += 1
        if it >= burn_in:
            out[it - burn_in] = w
    return out, n_acc, burn_in + n_keep, True


# ---------------------------------------------------------------------------
# python API


def _data(log, P):
    Xd, y, bias = design_for(log, P)
    if len(y) == 0:
        raise ValueError("sampling needs at least one trial")
    return Xd, y, bias


def _prior_init(K, P, w0, s0, g):
    return w0 + np.sqrt(s0) * g.standard_normal((K, P))


def iohmm_gibbs_run(log, config: ExperimentConfig, rng, init: IoHmmParams | None = None,
                    n_keep: int | None = None, burn_in: int | None = None, chain: int = 0) -> ParamSampleSet:
    """Gibbs sampler for the Bernoulli IO-HMM.

    Each sweep draws, for every state k, the weights ``w_k`` by a Laplace-MH
    step on the trials currently assigned to k and then row k of ``A`` from
    its Dirichlet conditional; it then redraws the whole state path by
    forward filtering and backward-message sampling, and finally the
    initial-state distribution.

    Parameters
    ----------
    log : ExperimentLog or (X, y)
    config : ExperimentConfig
        Uses K, M, burn_in, sigma0_sq, w0, alpha and bias.
    rng : RngStream, Generator or int
    init : IoHmmParams, optional
        Starting point. By default states are drawn uniformly and weights
        and transition rows from their priors.

    Returns
    -------
    ParamSampleSet
        ``state_probs`` holds p(z_T+1 | data, draw) for every retained draw.
    """
    K, P = config.K, config.n_weights
    Xd, y, bias = _data(log, P)
    T = len(y)
    n_keep = config.M if n_keep is None else int(n_keep)
    burn_in = config.burn_in if burn_in is None else int(burn_in)
    stream = as_stream(rng)
    g = stream.generator
    w0 = config.prior_mean()
    alpha = config.dirichlet_alpha()
    if init is None:
        W = _prior_init(K, P, w0, config.sigma0_sq, g)
        A = np.vstack([g.dirichlet(alpha[k + 1]) for k in range(K)]) if K > 1 else np.ones((1, 1))
        pi0 = np.full(K, 1.0 / K)
        z = g.integers(0, K, size=T)
    else:
        W, A, pi0 = init.weights.copy(), init.A.copy(), init.pi0.copy()
        msgs_L = nb_bernoulli_loglik(Xd, y, W)
        z = np.argmax(msgs_L + np.log(np.maximum(pi0, 1e-300)), axis=1)
    W_s, A_s, pi_s, nxt, n_acc, n_prop = _iohmm_kernel(
        Xd, y, np.ascontiguousarray(W, dtype=np.float64), np.ascontiguousarray(A, dtype=np.float64),
        np.ascontiguousarray(pi0, dtype=np.float64), z.astype(np.int64), w0, float(config.sigma0_sq),
        alpha, int(burn_in), int(n_keep), stream.kernel_seed(),
    )
    return ParamSampleSet("iohmm", W_s, pi_s, trans=A_s, state_probs=nxt, bias=bias,
                          chain=np.full(n_keep, chain), info={"accept_rate": n_acc / max(n_prop, 1)})


def mglm_state_probs(lik, pi) -> np.ndarray:
    """p(z_t = k | y_t, x_t) proportional to p(y_t | x_t, w_k) pi_k, per row of ``lik``."""
    p = np.atleast_2d(np.asarray(lik, dtype=np.float64)) * np.asarray(pi, dtype=np.float64)
    return p / p.sum(axis=1, keepdims=True)


def mglm_gibbs_run(log, config: ExperimentConfig, rng, init: MglmParams | None = None,
                   n_keep: int | None = None, burn_in: int | None = None, chain: int = 0) -> ParamSampleSet:
    """Gibbs sampler for a mixture of Bernoulli GLMs.

    A sweep draws each ``w_k`` by Laplace-MH, then ``pi`` from its
    Dirichlet conditional, then every ``z_t`` independently. By default the
    chain runs 700 sweeps and keeps the last 500 unless ``n_keep`` or
    ``burn_in`` are given.
    """
    K, P = config.K, config.n_weights
    Xd, y, bias = _data(log, P)
    T = len(y)
    n_keep = MGLM_SWEEPS - MGLM_BURN_IN if n_keep is None else int(n_keep)
    burn_in = MGLM_BURN_IN if burn_in is None else int(burn_in)
    stream = as_stream(rng)
    g = stream.generator
    w0 = config.prior_mean()
    alpha0 = config.dirichlet_alpha()[0]
    if init is None:
        W = _prior_init(K, P, w0, config.sigma0_sq, g)
        pi = np.full(K, 1.0 / K)
        z = g.integers(0, K, size=T)
    else:
        W, pi = init.weights.copy(), init.pi.copy()
        z = np.argmax(nb_bernoulli_loglik(Xd, y, W) + np.log(np.maximum(pi, 1e-300)), axis=1)
    W_s, pi_s, n_acc, n_prop = _mglm_kernel(
        Xd, y, np.ascontiguousarray(W, dtype=np.float64), np.ascontiguousarray(pi, dtype=np.float64),
        z.astype(np.int64), w0, float(config.sigma0_sq), alpha0, int(burn_in), int(n_keep),
        stream.kernel_seed(),
    )
    return ParamSampleSet("mglm", W_s, pi_s, bias=bias,
                          chain=np.full(n_keep, chain), info={"accept_rate": n_acc / max(n_prop, 1)})


def glm_mismatch_posterior(log, prior: GlmPrior, M: int, rng, burn_in: int = 0) -> ParamSampleSet:
    """M Laplace-MH draws of one Bernoulli GLM fit to every trial, ignoring latent states.

    With no trials the draws come from the prior.
    """
    P = prior.w0.size
    Xd, y, bias = design_for(log, P)
    stream = as_stream(rng)
    out, n_acc, n_prop, ok = _glm_chain(
        np.ascontiguousarray(Xd, dtype=np.float64), np.ascontiguousarray(y, dtype=np.float64),
        prior.w0, float(prior.sigma0_sq), prior.w0.copy(), int(burn_in), int(M), stream.kernel_seed(),
    )
    if not ok:
        raise RuntimeError("MAP optimization did not converge in 100 Newton steps")
    return ParamSampleSet("glm", out[:, None, :], np.ones((M, 1)), bias=bool(bias),
                          info={"accept_rate": n_acc / max(n_prop, 1)})
