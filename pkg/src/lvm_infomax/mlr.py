"""Mixture of linear regressions: likelihood, Gibbs sampler, mean-field VI and EM.

Model::

    z_t ~ Cat(pi)
    y_t | x_t, z_t = k ~ N(x_t . w_k, sigma^2)

with an isotropic Gaussian prior N(w0, sigma0^2 I) on every ``w_k``. The
noise variance is a fixed, known hyperparameter. State indices are 0-based.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numba
import numpy as np

from .core import ExperimentConfig, ExperimentLog, as_generator, as_stream
from .params import MlrParams, ParamSampleSet
from .randkit import (
    DirichletParams,
    MvnParams,
    log_sum_exp,
    nb_categorical,
    nb_dirichlet,
    nb_seed,
    sample_dirichlet,
    sample_mvn,
)

__all__ = [
    "MlrParams",
    "MixturePredictive",
    "MlrVariationalState",
    "EmResult",
    "mlr_component_loglik",
    "mlr_marginal_predictive",
    "linreg_posterior",
    "mlr_gibbs_z_step",
    "mlr_gibbs_pi_step",
    "mlr_gibbs_w_step",
    "mlr_gibbs_run",
    "mlr_vi_run",
    "mlr_vi_sample",
    "mlr_em_fit",
    "mlr_loglik",
]

logger = logging.getLogger(__name__)

LOG_2PI = np.log(2.0 * np.pi)


def mlr_component_loglik(x, y: float, w, sigma_sq: float) -> float:
    """log N(y; x . w, sigma_sq)."""
    if sigma_sq <= 0:
        raise ValueError("sigma_sq must be positive")
    r = float(y) - float(np.dot(x, w))
    return -0.5 * (LOG_2PI + np.log(sigma_sq)) - 0.5 * r * r / sigma_sq


@dataclass(frozen=True)
class MixturePredictive:
    """One-dimensional Gaussian mixture with a shared component variance."""

    means: np.ndarray
    weights: np.ndarray
    var: float

    def logpdf(self, y):
        y = np.asarray(y, dtype=np.float64)
        d = y[..., None] - self.means
        with np.errstate(divide="ignore"):
            lw = np.log(self.weights)
        comp = lw - 0.5 * (LOG_2PI + np.log(self.var)) - 0.5 * d * d / self.var
        return log_sum_exp(comp, axis=-1)

    def pdf(self, y):
        return np.exp(self.logpdf(y))

    def mean(self) -> float:
        return float(self.weights @ self.means)


def mlr_marginal_predictive(x, params: MlrParams) -> MixturePredictive:
    """p(y | x, theta) = sum_k pi_k N(y; x . w_k, sigma^2)."""
    return MixturePredictive(params.weights @ np.asarray(x, dtype=np.float64), params.pi, params.sigma_sq)


def mlr_loglik(X, y, params: MlrParams) -> float:
    """Marginal log-likelihood of a dataset under fixed parameters."""
    X = np.atleast_2d(X)
    d = np.asarray(y)[:, None] - X @ params.weights.T
    with np.errstate(divide="ignore"):
        comp = np.log(params.pi) - 0.5 * (LOG_2PI + np.log(params.sigma_sq)) - 0.5 * d * d / params.sigma_sq
    return float(np.sum(log_sum_exp(comp, axis=1)))


def linreg_posterior(X, y, w0, sigma0_sq: float, sigma_sq: float):
    """Conjugate posterior (mean, cov) of Bayesian linear regression.

    cov = (I / sigma0^2 + X'X / sigma^2)^-1,
    mean = cov (w0 / sigma0^2 + X'y / sigma^2).
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    D = X.shape[1]
    prec = np.eye(D) / sigma0_sq + X.T @ X / sigma_sq
    cov = np.linalg.inv(prec)
    cov = 0.5 * (cov + cov.T)
    mean = cov @ (np.asarray(w0, dtype=np.float64) / sigma0_sq + X.T @ np.asarray(y, dtype=np.float64) / sigma_sq)
    return mean, cov


# ---------------------------------------------------------------------------
# compiled sweep pieces


@numba.njit(cache=True, nogil=True)
def _z_step(X, y, W, pi, sigma_sq, z):
    T = X.shape[0]
    K = W.shape[0]
    logp = np.empty(K)
    p = np.empty(K)
    for t in range(T):
        for k in range(K):
            mu = 0.0
            for d in range(X.shape[1]):
                mu += X[t, d] * W[k, d]
            r = y[t] - mu
            logp[k] = (np.log(pi[k]) if pi[k] > 0 else -np.inf) - 0.5 * r * r / sigma_sq
        m = logp.max()
        for k in range(K):
            p[k] = np.exp(logp[k] - m)
        z[t] = nb_categorical(p)


@numba.njit(cache=True, nogil=True)
def _pi_step(z, K, alpha):
    counts = alpha.copy()
    for t in range(z.shape[0]):
        counts[z[t]] += 1.0
    return nb_dirichlet(counts)


@numba.njit(cache=True, nogil=True)
def _chol_solve_lower(L, b):
    n = b.shape[0]
    out = b.copy()
    for i in range(n):
        s = out[i]
        for j in range(i):
            s -= L[i, j] * out[j]
        out[i] = s / L[i, i]
    return out


@numba.njit(cache=True, nogil=True)
def _chol_solve_upper_t(L, b):
    # solves L^T x = b
    n = b.shape[0]
    out = b.copy()
    for i in range(n - 1, -1, -1):
        s = out[i]
        for j in range(i + 1, n):
            s -= L[j, i] * out[j]
        out[i] = s / L[i, i]
    return out


@numba.njit(cache=True, nogil=True)
def _w_step(X, y, z, k, w0, sigma0_sq, sigma_sq):
    D = X.shape[1]
    prec = np.zeros((D, D))
    rhs = np.zeros(D)
    for i in range(D):
        prec[i, i] = 1.0 / sigma0_sq
        rhs[i] = w0[i] / sigma0_sq
    for t in range(X.shape[0]):
        if z[t] != k:
            continue
        for i in range(D):
            rhs[i] += X[t, i] * y[t] / sigma_sq
            for j in range(D):
                prec[i, j] += X[t, i] * X[t, j] / sigma_sq
    L = np.linalg.cholesky(prec)
    mean = _chol_solve_upper_t(L, _chol_solve_lower(L, rhs))
    eps = np.empty(D)
    for i in range(D):
        eps[i] = np.random.standard_normal()
    # prec = L L^T, so L^-T eps has covariance prec^-1
    return mean + _chol_solve_upper_t(L, eps)


@numba.njit(cache=True, nogil=True)
def _gibbs_kernel(X, y, W, pi, z, w0, sigma0_sq, sigma_sq, alpha, burn_in, n_keep, seed):
    nb_seed(seed)
    K, D = W.shape
    W_out = np.empty((n_keep, K, D))
    pi_out = np.empty((n_keep, K))
    for sweep in range(burn_in + n_keep):
        _z_step(X, y, W, pi, sigma_sq, z)
        pi[:] = _pi_step(z, K, alpha)
        for k in range(K):
            W[k] = _w_step(X, y, z, k, w0, sigma0_sq, sigma_sq)
        j = sweep - burn_in
        if j >= 0:
            W_out[j] = W
            pi_out[j] = pi
    return W_out, pi_out


def _as_xy(log):
    if isinstance(log, ExperimentLog):
        return np.ascontiguousarray(log.X), np.ascontiguousarray(log.y)
    X, y = log
    return np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64), np.ascontiguousarray(y, dtype=np.float64)


def mlr_gibbs_z_step(log, params: MlrParams, rng) -> np.ndarray:
    """Draw every z_t from p(z_t = k | y_t, x_t) proportional to N(y_t; x_t . w_k, sigma^2) pi_k."""
    X, y = _as_xy(log)
    z = np.zeros(len(y), dtype=np.int64)
    nb_seed(as_stream(rng).kernel_seed())
    _z_step(X, y, np.ascontiguousarray(params.weights), params.pi, params.sigma_sq, z)
    return z


def mlr_gibbs_pi_step(z, K: int, rng, alpha=None) -> np.ndarray:
    """Draw pi ~ Dir(alpha + n) with n_k the count of state k (alpha defaults to ones)."""
    alpha = np.ones(K) if alpha is None else np.asarray(alpha, dtype=np.float64)
    counts = alpha + np.bincount(np.asarray(z, dtype=np.int64), minlength=K)[:K]
    return sample_dirichlet(DirichletParams(counts), rng)


def mlr_gibbs_w_step(log, z, k: int, w0, sigma0_sq: float, sigma_sq: float, rng) -> np.ndarray:
    """Draw w_k from the conjugate posterior given the trials currently assigned to k."""
    X, y = _as_xy(log)
    mask = np.asarray(z) == k
    mean, cov = linreg_posterior(X[mask], y[mask], np.broadcast_to(w0, X.shape[1]), sigma0_sq, sigma_sq)
    return sample_mvn(MvnParams(mean, cov), rng)


def _prior_mean(config: ExperimentConfig, D: int) -> np.ndarray:
    if config.w0 is None:
        return np.zeros(D)
    return np.array(np.broadcast_to(np.asarray(config.w0, dtype=np.float64), (D,)))


def _init_state(K, D, w0, sigma0_sq, g):
    W = w0 + np.sqrt(sigma0_sq) * g.standard_normal((K, D))
    return W, np.full(K, 1.0 / K)


def mlr_gibbs_run(log, config: ExperimentConfig, rng, init: MlrParams | None = None,
                  n_keep: int | None = None, burn_in: int | None = None, chain: int = 0) -> ParamSampleSet:
    """Run one Gibbs chain and keep the post-burn-in draws of (w_{1:K}, pi).

    Each sweep samples z, then pi, then every w_k. The chain starts from
    ``init`` or, by default, from uniform mixing weights and prior draws of
    the weights.
    """
    X, y = _as_xy(log)
    if len(y) == 0:
        raise ValueError("Gibbs sampling needs at least one trial")
    K, D = config.K, X.shape[1]
    n_keep = config.M if n_keep is None else n_keep
    burn_in = config.burn_in if burn_in is None else burn_in
    stream = as_stream(rng)
    w0 = _prior_mean(config, D)
    if init is None:
        W, pi = _init_state(K, D, w0, config.sigma0_sq, stream.generator)
    else:
        W, pi = init.weights.copy(), init.pi.copy()
    z = np.zeros(len(y), dtype=np.int64)
    alpha = config.dirichlet_alpha()[0]
    W_s, pi_s = _gibbs_kernel(X, y, np.ascontiguousarray(W, dtype=np.float64), pi.astype(np.float64), z,
                              w0, float(config.sigma0_sq), float(config.noise_var), alpha,
                              int(burn_in), int(n_keep), stream.kernel_seed())
    return ParamSampleSet("mlr", W_s, pi_s, sigma_sq=float(config.noise_var),
                          chain=np.full(n_keep, chain), info={"last_z": z})


# ---------------------------------------------------------------------------
# mean-field VI


@dataclass
class MlrVariationalState:
    """q(z_t) = Cat(phi_t), q(w_k) = N(mu_k, Sigma_k)."""

    phi: np.ndarray
    mu: np.ndarray
    Sigma: np.ndarray
    sigma_sq: float
    n_iter: int = 0
    converged: bool = False
    elbo: list = field(default_factory=list)

    @property
    def K(self) -> int:
        return self.mu.shape[0]


def _vi_weight_update(X, y, phi, w0, sigma0_sq, sigma_sq):
    K = phi.shape[1]
    D = X.shape[1]
    mu = np.empty((K, D))
    Sig = np.empty((K, D, D))
    for k in range(K):
        r = phi[:, k]
        prec = np.eye(D) / sigma0_sq + (X * r[:, None]).T @ X / sigma_sq
        S = np.linalg.inv(prec)
        S = 0.5 * (S + S.T)
        Sig[k] = S
        mu[k] = S @ (w0 / sigma0_sq + X.T @ (r * y) / sigma_sq)
    return mu, Sig


def _vi_resp_update(X, y, mu, Sig, sigma_sq):
    xm = X @ mu.T  # (T, K)
    quad = np.einsum("td,kde,te->tk", X, Sig, X)
    logit = (y[:, None] * xm - 0.5 * (xm**2 + quad)) / sigma_sq
    logit -= logit.max(axis=1, keepdims=True)
    phi = np.exp(logit)
    return phi / phi.sum(axis=1, keepdims=True)


def _vi_elbo(X, y, phi, mu, Sig, w0, sigma0_sq, sigma_sq):
    T, K = phi.shape
    D = X.shape[1]
    xm = X @ mu.T
    quad = np.einsum("td,kde,te->tk", X, Sig, X)
    exp_sq = (y[:, None] - xm) ** 2 + quad
    e_lik = np.sum(phi * (-0.5 * (LOG_2PI + np.log(sigma_sq)) - 0.5 * exp_sq / sigma_sq))
    e_z = -T * np.log(K)
    with np.errstate(divide="ignore", invalid="ignore"):
        h_z = -np.sum(np.where(phi > 0, phi * np.log(phi), 0.0))
    e_w = 0.0
    h_w = 0.0
    for k in range(K):
        dm = mu[k] - w0
        e_w += -0.5 * (D * np.log(2 * np.pi * sigma0_sq) + (dm @ dm + np.trace(Sig[k])) / sigma0_sq)
        h_w += 0.5 * (D * (1 + LOG_2PI) + np.linalg.slogdet(Sig[k])[1])
    return float(e_lik + e_z + h_z + e_w + h_w)


def mlr_vi_run(log, config: ExperimentConfig, rng=None, max_iter: int | None = None,
               tol: float | None = None) -> MlrVariationalState:
    """Coordinate-ascent mean-field VI.

    Alternates the Gaussian weight update and the responsibility update
    until the relative ELBO change drops below ``tol`` or ``max_iter``
    iterations have run. Responsibilities start perturbed-uniform (uniform
    plus 1% Dirichlet noise) and each q(w_k) starts at the prior.
    """
    X, y = _as_xy(log)
    if len(y) == 0:
        raise ValueError("VI needs at least one trial")
    K, D = config.K, X.shape[1]
    max_iter = config.vi_max_iter if max_iter is None else max_iter
    tol = config.vi_tol if tol is None else tol
    g = as_generator(rng if rng is not None else as_stream(config.seed).child(991))
    w0 = _prior_mean(config, D)
    s0, s2 = float(config.sigma0_sq), float(config.noise_var)

    phi = np.full((len(y), K), 1.0 / K)
    if K > 1:
        phi = 0.99 * phi + 0.01 * g.dirichlet(np.ones(K), size=len(y))
    mu = np.tile(w0, (K, 1))
    Sig = np.tile(np.eye(D) * s0, (K, 1, 1))
    state = MlrVariationalState(phi, mu, Sig, s2)
    prev = None
    for it in range(max_iter):
        mu, Sig = _vi_weight_update(X, y, phi, w0, s0, s2)
        phi = _vi_resp_update(X, y, mu, Sig, s2)
        cur = _vi_elbo(X, y, phi, mu, Sig, w0, s0, s2)
        state = MlrVariationalState(phi, mu, Sig, s2, it + 1, False, state.elbo + [cur])
        if prev is not None and abs(cur - prev) <= tol * max(1.0, abs(prev)):
            state.converged = True
            break
        prev = cur
    return state


def mlr_vi_sample(state: MlrVariationalState, M: int, rng) -> ParamSampleSet:
    """M draws of w from q(w_k); pi from state proportions of z drawn from phi."""
    g = as_generator(rng)
    K, D = state.mu.shape
    W = np.empty((M, K, D))
    for k in range(K):
        W[:, k] = sample_mvn(MvnParams(state.mu[k], state.Sigma[k]), g, size=M)
    T = len(state.phi)
    cum = np.cumsum(state.phi, axis=1)
    cum[:, -1] = 1.0
    u = g.random((M, T))
    z = (u[:, :, None] >= cum[None, :, :]).sum(axis=2)
    pi = np.stack([np.bincount(row, minlength=K)[:K] for row in z]) / T
    return ParamSampleSet("mlr", W, pi, sigma_sq=state.sigma_sq)


# ---------------------------------------------------------------------------
# maximum likelihood (used for BIC and reference fits)


@dataclass
class EmResult:
    params: MlrParams
    loglik: float
    converged: bool
    n_iter: int


def _em_single(X, y, K, resp, tol, max_iter, ridge):
    T, D = X.shape
    ll_prev = -np.inf
    var_floor = 1e-10 * max(np.var(y), 1e-12)
    converged = False
    params = None
    ll = -np.inf
    for it in range(1, max_iter + 1):
        Nk = resp.sum(axis=0)
        W = np.empty((K, D))
        for k in range(K):
            Xr = X * resp[:, k : k + 1]
            W[k] = np.linalg.solve(Xr.T @ X + ridge * np.eye(D), Xr.T @ y)
        pi = np.maximum(Nk / T, 1e-300)
        pi /= pi.sum()
        res = y[:, None] - X @ W.T
        s2 = max(float(np.sum(resp * res**2) / T), var_floor)
        params = MlrParams(W, pi, s2)
        comp = np.log(pi) - 0.5 * (LOG_2PI + np.log(s2)) - 0.5 * res**2 / s2
        lse = log_sum_exp(comp, axis=1)
        ll = float(lse.sum())
        resp = np.exp(comp - lse[:, None])
        if abs(ll - ll_prev) <= tol * max(1.0, abs(ll)):
            converged = True
            break
        ll_prev = ll
    return params, ll, converged, it


def mlr_em_fit(X, y, K: int, rng=None, n_init: int = 10, tol: float = 1e-6,
               max_iter: int = 500) -> EmResult:
    """Maximum-likelihood MLR with shared noise variance, best of ``n_init`` EM restarts.

    Restarts begin from random hard assignments. When no restart converges
    within ``max_iter`` iterations the best value found is returned with
    ``converged=False`` and a warning is logged.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    if len(y) == 0:
        raise ValueError("EM needs at least one observation")
    g = as_generator(rng)
    ridge = 1e-10 * max(1.0, float(np.trace(X.T @ X)) / X.shape[1])
    best = None
    for _ in range(1 if K == 1 else n_init):
        labels = g.integers(0, K, size=len(y))
        resp = np.eye(K)[labels] * 0.9 + 0.1 / K
        params, ll, conv, it = _em_single(X, y, K, resp, tol, max_iter, ridge)
        if best is None or ll > best.loglik:
            best = EmResult(params, ll, conv, it)
    if not best.converged:
        logger.warning("EM did not converge in %d iterations (K=%d); returning best value", max_iter, K)
    return best
