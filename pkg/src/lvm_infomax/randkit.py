"""Sampling primitives and special functions.

The ``nb_*`` functions are numba-compiled twins used inside the compiled
Gibbs kernels. They draw from numba's own generator, which the kernels seed
from an :class:`~lvm_infomax.core.RngStream` on entry.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .core import as_generator

__all__ = [
    "MvnParams",
    "DirichletParams",
    "CholeskyError",
    "sample_mvn",
    "sample_dirichlet",
    "sample_categorical",
    "digamma",
    "log_sum_exp",
    "jittered_cholesky",
]

EULER_GAMMA = 0.57721566490153286061
JITTER_START = 1e-10
JITTER_MAX = 1e-4


class CholeskyError(np.linalg.LinAlgError):
    """Covariance could not be factorized even after jitter escalation."""


@dataclass(frozen=True)
class MvnParams:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=np.float64))
        if cov.shape != (mean.size, mean.size):
            raise ValueError("covariance shape does not match mean")
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-10 * max(1.0, np.abs(cov).max())):
            raise ValueError("covariance is not symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)


@dataclass(frozen=True)
class DirichletParams:
    alpha: np.ndarray

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.alpha, dtype=np.float64))
        if a.size == 0 or np.any(~(a > 0)):
            raise ValueError("Dirichlet concentrations must be positive")
        object.__setattr__(self, "alpha", a)


def jittered_cholesky(cov: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of ``cov``, adding 1e-10 .. 1e-4 to the diagonal if needed."""
    cov = np.asarray(cov, dtype=np.float64)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    eye = np.eye(len(cov))
    jitter = JITTER_START
    while jitter <= JITTER_MAX * (1 + 1e-12):
        try:
            return np.linalg.cholesky(cov + jitter * eye)
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise CholeskyError("covariance is not positive semi-definite (jitter up to 1e-4 failed)")


def sample_mvn(p: MvnParams, rng, size: int | None = None) -> np.ndarray:
    """Draw from N(mean, cov). A zero covariance returns the mean exactly."""
    if not isinstance(p, MvnParams):
        p = MvnParams(*p)
    g = as_generator(rng)
    if not np.any(p.cov):
        return p.mean.copy() if size is None else np.tile(p.mean, (size, 1))
    L = jittered_cholesky(p.cov)
    shape = (p.mean.size,) if size is None else (size, p.mean.size)
    eps = g.standard_normal(shape)
    return p.mean + eps @ L.T


def _log_gamma_draws(alpha: np.ndarray, g: np.random.Generator) -> np.ndarray:
    # shape < 1: Gamma(a) = Gamma(a + 1) * U**(1/a), done in log space so tiny
    # concentrations do not underflow to an all-zero vector
    small = alpha < 1.0
    out = np.empty_like(alpha)
    out[~small] = np.log(g.standard_gamma(alpha[~small]))
    if small.any():
        a = alpha[small]
        out[small] = np.log(g.standard_gamma(a + 1.0)) + np.log(g.random(a.size)) / a
    return out


def sample_dirichlet(p: DirichletParams, rng) -> np.ndarray:
    if not isinstance(p, DirichletParams):
        p = DirichletParams(p)
    if p.alpha.size == 1:
        return np.ones(1)
    lg = _log_gamma_draws(p.alpha, as_generator(rng))
    w = np.exp(lg - lg.max())
    return w / w.sum()


def sample_categorical(p, rng) -> int:
    """Index (0-based) drawn with probabilities proportional to ``p``."""
    p = np.asarray(p, dtype=np.float64)
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ValueError("categorical probabilities must be finite and non-negative")
    s = p.sum()
    if s <= 0:
        raise ValueError("categorical probabilities are all zero")
    c = np.cumsum(p / s)
    u = as_generator(rng).random()
    return int(min(np.searchsorted(c, u, side="right"), len(p) - 1))


# Bernoulli numbers B_2k / (2k) for the asymptotic series of psi
_PSI_COEFS = np.array(
    [1 / 12, -1 / 120, 1 / 252, -1 / 240, 1 / 132, -691 / 32760, 1 / 12]
)


def digamma(x):
    """Digamma function for positive arguments.

    Shifts the argument above 10 with psi(x) = psi(x + 1) - 1/x and then
    applies the asymptotic expansion ln x - 1/(2x) - sum B_2k / (2k x^2k).
    """
    x = np.asarray(x, dtype=np.float64)
    if np.any(~(x > 0)):
        raise ValueError("digamma is only defined here for x > 0")
    scalar = x.ndim == 0
    x = np.atleast_1d(x).copy()
    acc = np.zeros_like(x)
    while True:
        low = x < 10.0
        if not low.any():
            break
        acc[low] -= 1.0 / x[low]
        x[low] += 1.0
    inv2 = 1.0 / (x * x)
    series = np.zeros_like(x)
    for c in _PSI_COEFS[::-1]:
        series = (series + c) * inv2
    out = acc + np.log(x) - 0.5 / x - series
    return float(out[0]) if scalar else out


def log_sum_exp(v, axis=None):
    """Overflow-safe log(sum(exp(v))); all -inf inputs give -inf."""
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        raise ValueError("log_sum_exp of an empty vector")
    m = np.max(v, axis=axis, keepdims=True)
    m_safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(v - m_safe), axis=axis, keepdims=True)) + m_safe
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


# ---------------------------------------------------------------------------
# compiled twins

@numba.njit(cache=True)
def nb_seed(seed):
    np.random.seed(seed)


@numba.njit(cache=True)
def nb_dirichlet(alpha):
    K = alpha.shape[0]
    lg = np.empty(K)
    for k in range(K):
        a = alpha[k]
        if a < 1.0:
            lg[k] = np.log(np.random.gamma(a + 1.0, 1.0)) + np.log(np.random.random()) / a
        else:
            lg[k] = np.log(np.random.gamma(a, 1.0))
    m = lg.max()
    out = np.exp(lg - m)
    return out / out.sum()


@numba.njit(cache=True)
def nb_categorical(p):
    s = 0.0
    for k in range(p.shape[0]):
        s += p[k]
    u = np.random.random() * s
    c = 0.0
    for k in range(p.shape[0]):
        c += p[k]
        if u < c:
            return k
    return p.shape[0] - 1


@numba.njit(cache=True)
def nb_cholesky(cov):
    """Cholesky with the same jitter ladder as :func:`jittered_cholesky`.

    Returns an empty matrix when factorization fails.
    """
    n = cov.shape[0]
    jitter = 0.0
    while True:
        L = np.zeros((n, n))
        ok = True
        for i in range(n):
            for j in range(i + 1):
                s = cov[i, j]
                if i == j:
                    s += jitter
                for k in range(j):
                    s -= L[i, k] * L[j, k]
                if i == j:
                    if s <= 0.0:
                        ok = False
                        break
                    L[i, i] = np.sqrt(s)
                else:
                    L[i, j] = s / L[j, j]
            if not ok:
                break
        if ok:
            return L
        if jitter == 0.0:
            jitter = JITTER_START
        else:
            jitter *= 10.0
        if jitter > JITTER_MAX * (1 + 1e-12):
            return np.zeros((0, 0))


@numba.njit(cache=True)
def nb_mvn(mean, L):
    n = mean.shape[0]
    eps = np.empty(n)
    for i in range(n):
        eps[i] = np.random.standard_normal()
    out = mean.copy()
    for i in range(n):
        for j in range(i + 1):
            out[i] += L[i, j] * eps[j]
    return out
