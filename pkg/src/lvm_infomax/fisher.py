"""Fisher information of mixture-of-linear-regression weights.

The full matrix is KD x KD, arranged as a K x K grid of D x D blocks; block
(i, j) is

    E[(y - x.w_i)(y - x.w_j) r_i(y) r_j(y)] / sigma^4 * x x'

with r_k(y) = p(z = k | y, x, theta) and the expectation over the marginal
predictive of y. Two regimes have closed forms: well separated component
means (block diagonal, diag(pi) kron xx' / sigma^2) and identical component
means (rank one, pi pi' kron xx' / sigma^2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import as_generator
from .params import MlrParams
from .randkit import log_sum_exp

__all__ = [
    "FisherMatrix",
    "fisher_identifiable",
    "fisher_nonidentifiable",
    "fisher_mc_trace",
    "fisher_mc_matrix",
    "fisher_angle_scan",
]


@dataclass(frozen=True)
class FisherMatrix:
    J: np.ndarray
    K: int
    D: int

    def block(self, i: int, j: int) -> np.ndarray:
        D = self.D
        return self.J[i * D : (i + 1) * D, j * D : (j + 1) * D]

    @property
    def trace(self) -> float:
        return float(np.trace(self.J))


def _simplex(pi) -> np.ndarray:
    pi = np.atleast_1d(np.asarray(pi, dtype=np.float64))
    if np.any(pi < 0) or abs(pi.sum() - 1.0) > 1e-9:
        raise ValueError("pi must lie on the probability simplex")
    return pi


def fisher_identifiable(x, pi, sigma_sq: float) -> FisherMatrix:
    """Perfect-identifiability limit: diag(pi) kron xx' / sigma^2."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    pi = _simplex(pi)
    return FisherMatrix(np.kron(np.diag(pi), np.outer(x, x)) / sigma_sq, pi.size, x.size)


def fisher_nonidentifiable(x, pi, sigma_sq: float) -> FisherMatrix:
    """Non-identifiable limit: (pi pi') kron xx' / sigma^2."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    pi = _simplex(pi)
    return FisherMatrix(np.kron(np.outer(pi, pi), np.outer(x, x)) / sigma_sq, pi.size, x.size)


def _score_factors(x, params: MlrParams, n: int, g) -> np.ndarray:
    """Per-draw factors (y - x.w_k) r_k(y) / sigma^2, shape (n, K)."""
    means = params.weights @ x
    s2 = params.sigma_sq
    z = g.choice(params.K, size=n, p=params.pi)
    y = means[z] + np.sqrt(s2) * g.standard_normal(n)
    res = y[:, None] - means[None, :]
    with np.errstate(divide="ignore"):
        logc = np.log(params.pi)[None, :] - 0.5 * res**2 / s2
    resp = np.exp(logc - log_sum_exp(logc, axis=1)[:, None])
    return res * resp / s2


def fisher_mc_trace(x, params: MlrParams, n_samples: int, rng) -> tuple[float, float]:
    """Monte-Carlo estimate of Tr J(x) and its standard error.

    The standard error is NaN when ``n_samples == 1``.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    f = _score_factors(x, params, n_samples, as_generator(rng))
    vals = np.sum(f**2, axis=1) * (x @ x)
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / np.sqrt(n_samples)) if n_samples > 1 else float("nan")
    return mean, se


def fisher_mc_matrix(x, params: MlrParams, n_samples: int, rng) -> FisherMatrix:
    """Monte-Carlo estimate of the full KD x KD matrix."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    f = _score_factors(x, params, n_samples, as_generator(rng))
    C = f.T @ f / n_samples
    return FisherMatrix(np.kron(C, np.outer(x, x)), params.K, x.size)


def fisher_angle_scan(model: MlrParams, angles_deg, sigma_sq_list, n_samples: int, rng) -> list[dict]:
    """Trace of the Fisher information for unit inputs at each angle and noise level.

    Returns rows ``{angle_deg, sigma_sq, trace, stderr}`` ordered by noise
    level, then angle.
    """
    if model.D != 2:
        raise ValueError("the angle scan needs a 2-D model")
    g = as_generator(rng)
    rows = []
    for s2 in sigma_sq_list:
        m = MlrParams(model.weights, model.pi, float(s2))
        for a in angles_deg:
            th = np.deg2rad(a)
            tr, se = fisher_mc_trace(np.array([np.cos(th), np.sin(th)]), m, n_samples, g)
            rows.append({"angle_deg": float(a), "sigma_sq": float(s2), "trace": tr, "stderr": se})
    return rows
