"""Bernoulli GLM pieces: choice probability, MAP fit and the Laplace-proposal MH step."""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from ..core import as_stream
from ..randkit import nb_seed

__all__ = [
    "GlmPrior",
    "LaplaceStepResult",
    "bernoulli_glm_prob",
    "glm_design",
    "bias_to_augmented",
    "augmented_to_bias",
    "glm_map",
    "glm_sample_posterior",
    "LIK_BERNOULLI",
    "LIK_GAUSSIAN",
]

LIK_BERNOULLI = 0
LIK_GAUSSIAN = 1  # unit-variance Gaussian surrogate, used to check the MH step
NEWTON_MAX_ITER = 100
NEWTON_TOL = 1e-8


@dataclass(frozen=True)
class GlmPrior:
    """Isotropic Gaussian prior N(w0, sigma0_sq I) on GLM weights."""

    w0: np.ndarray
    sigma0_sq: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "w0", np.atleast_1d(np.asarray(self.w0, dtype=np.float64)))
        if not self.sigma0_sq > 0:
            raise ValueError("sigma0_sq must be positive")


def bernoulli_glm_prob(x, w, b: float = 0.0):
    """p(y = 1) = 1 / (1 + exp(-w.x + b)).

    ``b`` enters with the sign used for one-dimensional stimulus models, so a
    positive bias shifts the curve to the right.
    """
    eta = np.dot(np.asarray(x, dtype=np.float64), np.asarray(w, dtype=np.float64)) - b
    return 1.0 / (1.0 + np.exp(-eta))


def glm_design(x, bias: bool = True) -> np.ndarray:
    """Design rows: the inputs with a trailing column of ones when ``bias``."""
    X = np.asarray(x, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if not bias:
        return np.ascontiguousarray(X)
    return np.ascontiguousarray(np.column_stack([X, np.ones(len(X))]))


def bias_to_augmented(w, b) -> np.ndarray:
    """(w, b) in the ``sigmoid(w.x - b)`` convention -> weights on ``[x, 1]``."""
    return np.append(np.atleast_1d(np.asarray(w, dtype=np.float64)), -float(b))


def augmented_to_bias(w_aug):
    w_aug = np.asarray(w_aug, dtype=np.float64)
    return w_aug[:-1].copy(), -float(w_aug[-1])


# ---------------------------------------------------------------------------
# compiled core


@numba.njit(cache=True, nogil=True)
def _log1pexp(a):
    if a > 0:
        return a + np.log1p(np.exp(-a))
    return np.log1p(np.exp(a))


@numba.njit(cache=True, nogil=True)
def _sigmoid(a):
    if a >= 0:
        return 1.0 / (1.0 + np.exp(-a))
    e = np.exp(a)
    return e / (1.0 + e)


@numba.njit(cache=True, nogil=True)
def nb_glm_logpost(X, y, wts, w, w0, sigma0_sq, lik):
    """Weighted log-likelihood plus Gaussian log-prior (up to a constant)."""
    T, P = X.shape
    lp = 0.0
    for t in range(T):
        if wts[t] == 0.0:
            continue
        eta = 0.0
        for d in range(P):
            eta += X[t, d] * w[d]
        if lik == LIK_BERNOULLI:
            lp += wts[t] * (y[t] * eta - _log1pexp(eta))
        else:
            r = y[t] - eta
            lp -= 0.5 * wts[t] * r * r
    for d in range(P):
        dw = w[d] - w0[d]
        lp -= 0.5 * dw * dw / sigma0_sq
    return lp


@numba.njit(cache=True, nogil=True)
def _grad_neg_hess(X, y, wts, w, w0, sigma0_sq, lik):
    T, P = X.shape
    g = np.zeros(P)
    H = np.zeros((P, P))
    for d in range(P):
        g[d] = -(w[d] - w0[d]) / sigma0_sq
        H[d, d] = 1.0 / sigma0_sq
    for t in range(T):
        if wts[t] == 0.0:
            continue
        eta = 0.0
        for d in range(P):
            eta += X[t, d] * w[d]
        if lik == LIK_BERNOULLI:
            p = _sigmoid(eta)
            r = wts[t] * (y[t] - p)
            c = wts[t] * p * (1.0 - p)
        else:
            r = wts[t] * (y[t] - eta)
            c = wts[t]
        for i in range(P):
            g[i] += r * X[t, i]
            xi = c * X[t, i]
            for j in range(P):
                H[i, j] += xi * X[t, j]
    return g, H


@numba.njit(cache=True, nogil=True)
def nb_glm_map(X, y, wts, w0, sigma0_sq, w_init, lik):
    """Newton ascent with step halving. Returns (w_map, precision, converged)."""
    w = w_init.copy()
    lp = nb_glm_logpost(X, y, wts, w, w0, sigma0_sq, lik)
    for it in range(NEWTON_MAX_ITER):
        g, H = _grad_neg_hess(X, y, wts, w, w0, sigma0_sq, lik)
        gmax = 0.0
        for d in range(g.shape[0]):
            gmax = max(gmax, abs(g[d]))
        if gmax < NEWTON_TOL:
            return w, H, True
        step = np.linalg.solve(H, g)
        t = 1.0
        improved = False
        for _ in range(60):
            w_new = w + t * step
            lp_new = nb_glm_logpost(X, y, wts, w_new, w0, sigma0_sq, lik)
            if lp_new >= lp - 1e-12 * abs(lp):
                improved = True
                break
            t *= 0.5
        if not improved:
            # no ascent direction left at machine precision
            g, H = _grad_neg_hess(X, y, wts, w, w0, sigma0_sq, lik)
            return w, H, True
        w = w_new
        lp = lp_new
    g, H = _grad_neg_hess(X, y, wts, w, w0, sigma0_sq, lik)
    gmax = 0.0
    for d in range(g.shape[0]):
        gmax = max(gmax, abs(g[d]))
    return w, H, gmax < NEWTON_TOL


@numba.njit(cache=True, nogil=True)
def _quad_prec(dw, Pm):
    q = 0.0
    n = dw.shape[0]
    for i in range(n):
        for j in range(n):
            q += dw[i] * Pm[i, j] * dw[j]
    return q


@numba.njit(cache=True, nogil=True)
def nb_laplace_mh(X, y, wts, w0, sigma0_sq, w_old, lik):
    """One independence-MH step with a Laplace proposal.

    Returns (w, accepted, log_alpha, status); status 0 = ok, 1 = MAP
    optimizer did not converge.
    """
    w_map, Pm, ok = nb_glm_map(X, y, wts, w0, sigma0_sq, w_old, lik)
    if not ok:
        return w_old.copy(), False, -np.inf, 1
    L = np.linalg.cholesky(Pm)
    P = w_map.shape[0]
    eps = np.empty(P)
    for i in range(P):
        eps[i] = np.random.standard_normal()
    # w* = w_map + L^-T eps has covariance Pm^-1
    dev = eps.copy()
    for i in range(P - 1, -1, -1):
        s = dev[i]
        for j in range(i + 1, P):
            s -= L[j, i] * dev[j]
        dev[i] = s / L[i, i]
    w_star = w_map + dev
    log_alpha = (
        nb_glm_logpost(X, y, wts, w_star, w0, sigma0_sq, lik)
        - nb_glm_logpost(X, y, wts, w_old, w0, sigma0_sq, lik)
        - 0.5 * _quad_prec(w_old - w_map, Pm)
        + 0.5 * _quad_prec(w_star - w_map, Pm)
    )
    if log_alpha >= 0.0 or np.log(np.random.random()) < log_alpha:
        return w_star, True, log_alpha, 0
    return w_old.copy(), False, log_alpha, 0


# ---------------------------------------------------------------------------
# python API


def _lik_code(likelihood: str) -> int:
    if likelihood == "bernoulli":
        return LIK_BERNOULLI
    if likelihood == "gaussian":
        return LIK_GAUSSIAN
    raise ValueError(f"unknown likelihood {likelihood!r}")


def glm_map(X, y, prior: GlmPrior, w_init=None, weights=None, likelihood: str = "bernoulli"):
    """MAP weights and the Laplace covariance ``(-Hessian of the log posterior)^-1``."""
    X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    wts = np.ones(len(y)) if weights is None else np.ascontiguousarray(weights, dtype=np.float64)
    w_init = prior.w0.copy() if w_init is None else np.asarray(w_init, dtype=np.float64)
    w, H, ok = nb_glm_map(X, y, wts, prior.w0, float(prior.sigma0_sq), w_init, _lik_code(likelihood))
    if not ok:
        raise RuntimeError(f"MAP optimization did not converge in {NEWTON_MAX_ITER} Newton steps")
    return w, np.linalg.inv(H)


@dataclass(frozen=True)
class LaplaceStepResult:
    w: np.ndarray
    accepted: bool
    log_alpha: float

    @property
    def alpha(self) -> float:
        return float(min(1.0, np.exp(self.log_alpha)))


def glm_sample_posterior(X, y, prior: GlmPrior, w_old, rng, likelihood: str = "bernoulli") -> LaplaceStepResult:
    """Draw GLM weights given the trials of one state.

    Proposes from the Laplace approximation N(w_map, C) of the posterior and
    accepts with the independence Metropolis-Hastings ratio against the
    unnormalized posterior; on rejection ``w_old`` is kept.
    """
    X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64).reshape(-1, prior.w0.size)
    y = np.ascontiguousarray(y, dtype=np.float64)
    nb_seed(as_stream(rng).kernel_seed())
    w, acc, log_alpha, status = nb_laplace_mh(
        X, y, np.ones(len(y)), prior.w0, float(prior.sigma0_sq),
        np.asarray(w_old, dtype=np.float64).copy(), _lik_code(likelihood),
    )
    if status:
        raise RuntimeError(f"MAP optimization did not converge in {NEWTON_MAX_ITER} Newton steps")
    return LaplaceStepResult(w, bool(acc), float(log_alpha))
