"""Sample-based mutual information, input selection and learning metrics.

For posterior draws theta^1..theta^M the information an output y carries
about the parameters at input x is

    I(x) = (1/M) sum_j KL( p(y | theta^j, x) || pbar(y | x) ),
    pbar = (1/M) sum_j p(y | theta^j, x),

and the next input is the candidate maximizing it. Binary outputs use the
exact two-term KL. Gaussian-mixture outputs (MLR) have two evaluators: a
reference trapezoid rule on a fixed 2048-point grid, and a fast one using
I = H(pbar) - mean_j H(p_j) with Gauss-Hermite entropies per draw and a
binned convolution for the pooled density.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numba
import numpy as np

from .core import CandidateSet, ExperimentLog
from .params import GlmParams, IoHmmParams, MglmParams, MlrParams, ParamSampleSet

__all__ = [
    "MetricRow",
    "BicResult",
    "REF_GRID_POINTS",
    "ENTROPY_JITTER",
    "predictive_bernoulli",
    "mutual_information",
    "mutual_information_table",
    "bernoulli_mi",
    "discrete_mi",
    "select_input",
    "posterior_entropy",
    "aligned_rmse",
    "bic",
    "selection_histogram",
    "angle_region_count",
]

logger = logging.getLogger(__name__)

REF_GRID_POINTS = 2048
REF_GRID_HALFWIDTH = 6.0  # in noise standard deviations beyond the extreme means
ENTROPY_JITTER = 1e-10

# fast evaluator resolution
_FAST_STEPS_PER_SIGMA = 8
_FAST_HALFWIDTH = 8.0
_FAST_KERNEL_HALFWIDTH = 7.0
_GH_T, _GH_W = np.polynomial.hermite.hermgauss(24)
# fast values within this margin of the best are re-scored by the reference rule
_SCREEN_ABS = 2e-4
_SCREEN_REL = 0.01
_TIE_REL = 1e-10


# ---------------------------------------------------------------------------
# predictive distributions


def _design(X, samples: ParamSampleSet) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if samples.bias:
        X = np.column_stack([X, np.ones(len(X))])
    if X.shape[1] != samples.weights.shape[2]:
        raise ValueError(f"inputs of width {X.shape[1]} do not match weights of width {samples.weights.shape[2]}")
    return X


def predictive_bernoulli(samples: ParamSampleSet, X) -> np.ndarray:
    """(N, M) matrix of p(y = 1 | theta^j, x_n), marginalizing the next-trial state."""
    Xd = _design(X, samples)
    eta = np.einsum("np,mkp->nmk", Xd, samples.weights)
    p = 0.5 * (1.0 + np.tanh(0.5 * eta))  # overflow-free logistic
    return np.einsum("nmk,mk->nm", p, samples.state_probs)


def _xlogy_ratio(p, q):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(p > 0, p * (np.log(p) - np.log(q)), 0.0)


def bernoulli_mi(p) -> np.ndarray:
    """MI from per-sample success probabilities ``p`` (..., M); exact two-term KL."""
    p = np.clip(np.asarray(p, dtype=np.float64), 0.0, 1.0)
    pbar = p.mean(axis=-1, keepdims=True)
    kl = _xlogy_ratio(p, pbar) + _xlogy_ratio(1.0 - p, 1.0 - pbar)
    mi = kl.mean(axis=-1)
    same = np.ptp(p, axis=-1) == 0
    return np.where(same, 0.0, np.maximum(mi, 0.0))


def discrete_mi(P) -> np.ndarray:
    """MI from per-sample pmfs ``P`` (..., M, n_outcomes) by direct summation over outcomes."""
    P = np.asarray(P, dtype=np.float64)
    pbar = P.mean(axis=-2, keepdims=True)
    return _xlogy_ratio(P, pbar).sum(axis=-1).mean(axis=-1)


# --- Gaussian mixtures (MLR) ------------------------------------------------


def _mlr_components(samples: ParamSampleSet, X):
    Xd = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if Xd.shape[1] != samples.weights.shape[2]:
        raise ValueError("input width does not match the weights")
    means = np.einsum("np,mkp->nmk", Xd, samples.weights)
    return means, samples.state_probs


def _mixture_logpdf(y, means, pi, sigma):
    """log sum_k pi_k N(y | means_k, sigma^2) for y (G,), means/pi (M, K) -> (M, G)."""
    with np.errstate(divide="ignore"):
        logc = np.log(pi)[:, :, None] - 0.5 * ((y[None, None, :] - means[:, :, None]) / sigma) ** 2
    m = logc.max(axis=1, keepdims=True)
    out = np.log(np.exp(logc - m).sum(axis=1)) + m[:, 0, :]
    return out - 0.5 * np.log(2 * np.pi * sigma**2)


def _mlr_mi_reference(means, pi, sigma) -> float:
    lo = means.min() - REF_GRID_HALFWIDTH * sigma
    hi = means.max() + REF_GRID_HALFWIDTH * sigma
    y = np.linspace(lo, hi, REF_GRID_POINTS)
    logp = _mixture_logpdf(y, means, pi, sigma)
    p = np.exp(logp)
    pbar = p.mean(axis=0)
    if not np.trapezoid(pbar, y) > 0.5:
        raise ValueError("predictive has no mass on the quadrature grid")
    with np.errstate(divide="ignore", invalid="ignore"):
        integrand = np.where(p > 0, p * (logp - np.log(pbar)[None, :]), 0.0)
    return float(np.trapezoid(integrand, y, axis=1).mean())


@numba.njit(cache=True, nogil=True, fastmath={"afn", "contract", "reassoc", "arcp"})
def _mlr_mi_fast_kernel(means, pi, sigma, gh_t, gh_w, steps, halfwidth, khalf):
    M, K = means.shape
    s2 = sigma * sigma
    # mean per-sample entropy: with y = m_k + sigma u, u ~ N(0, 1),
    # log p_j(y) = log N(y | m_k) + log(pi_k + sum_{l != k} pi_l exp(-d u - d^2 / 2)), d = (m_k - m_l) / sigma
    n_gh = gh_t.shape[0]
    u = np.sqrt(2.0) * gh_t
    u_max = np.abs(u).max()
    w_sum = gh_w.sum()
    acc = 0.0
    for j in range(M):
        for k in range(K):
            pk = pi[j, k]
            if pk <= 0.0:
                continue
            far = True
            for l in range(K):
                if l != k and pi[j, l] > 0.0:
                    d = abs(means[j, k] - means[j, l]) / sigma
                    if d * u_max - 0.5 * d * d > -40.0:
                        far = False
            if far:
                acc += pk * np.log(pk) * w_sum
                continue
            e_k = 0.0
            for n in range(n_gh):
                s = pk
                for l in range(K):
                    if l == k or pi[j, l] <= 0.0:
                        continue
                    d = (means[j, k] - means[j, l]) / sigma
                    e = -d * u[n] - 0.5 * d * d
                    if e > -40.0:  # below this the term is under 1e-17 of pi_k
                        s += pi[j, l] * np.exp(e)
                e_k += gh_w[n] * np.log(s)
            acc += pk * e_k
    h_each = 0.5 * np.log(2.0 * np.pi * np.e * s2) - acc / (M * np.sqrt(np.pi))
    # pooled density: linear binning of component means, then Gaussian smoothing
    h = sigma / steps
    lo = means.min() - halfwidth * sigma
    hi = means.max() + halfwidth * sigma
    G = int(np.ceil((hi - lo) / h)) + 2
    mass = np.zeros(G)
    for j in range(M):
        for k in range(K):
            pos = (means[j, k] - lo) / h
            i = int(np.floor(pos))
            u = pos - i
            mass[i] += pi[j, k] * (1.0 - u) / M
            mass[i + 1] += pi[j, k] * u / M
    # binning adds h^2/6 variance on average; take it out of the kernel
    kv = s2 - h * h / 6.0
    R = int(np.ceil(khalf * sigma / h))
    kern = np.empty(2 * R + 1)
    ks = 0.0
    for r in range(-R, R + 1):
        kern[r + R] = np.exp(-0.5 * (r * h) ** 2 / kv)
        ks += kern[r + R]
    for r in range(2 * R + 1):
        kern[r] /= ks * h
    h_pool = 0.0
    for g in range(G):
        d = 0.0
        for r in range(-R, R + 1):
            gi = g - r
            if 0 <= gi < G and mass[gi] != 0.0:
                d += mass[gi] * kern[r + R]
        if d > 0.0:
            h_pool -= d * np.log(d) * h
    return h_pool - h_each


def _mlr_mi(means, pi, sigma, method: str) -> float:
    if np.all(means == means[:1]) and np.all(pi == pi[:1]):
        return 0.0
    if method == "reference":
        return _mlr_mi_reference(means, pi, sigma)
    if method == "fast":
        v = _mlr_mi_fast_kernel(np.ascontiguousarray(means), np.ascontiguousarray(pi), float(sigma),
                                _GH_T, _GH_W, _FAST_STEPS_PER_SIGMA, _FAST_HALFWIDTH, _FAST_KERNEL_HALFWIDTH)
        return max(float(v), 0.0)
    raise ValueError(f"unknown MI method {method!r}")


# --- public MI ----------------------------------------------------------------


def mutual_information_table(samples: ParamSampleSet, X, method: str = "fast") -> np.ndarray:
    """MI (nats) for every row of ``X``.

    Parameters
    ----------
    samples : ParamSampleSet
        Posterior draws; ``state_probs`` supplies the latent-state weights of
        each draw's predictive.
    X : array (N, D)
    method : {"fast", "reference"}
        Only affects Gaussian-mixture outputs; binary outputs are always exact.
    """
    if samples.M < 1:
        raise ValueError("need at least one posterior draw")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if samples.family == "mlr":
        means, pi = _mlr_components(samples, X)
        sigma = float(np.sqrt(samples.sigma_sq))
        return np.array([_mlr_mi(means[n], pi, sigma, method) for n in range(len(X))])
    return bernoulli_mi(predictive_bernoulli(samples, X))


def mutual_information(samples: ParamSampleSet, x, method: str = "fast") -> float:
    """MI (nats) between the next output at input ``x`` and the parameters."""
    return float(mutual_information_table(samples, np.atleast_1d(x)[None, :], method)[0])


def select_input(samples: ParamSampleSet, candidates: CandidateSet, method: str = "fast"):
    """Index of the available candidate with maximal MI, and the MI table.

    Consumed pool rows are skipped and carry NaN in the table. Ties (equal
    within a relative 1e-10) go to the lowest index. With ``method="fast"``
    on Gaussian-mixture outputs, candidates within the screening margin of
    the best fast value are re-scored with the reference evaluator before
    the argmax, so exact ties such as x and -x stay ties.
    """
    avail = candidates.available()
    if avail.size == 0:
        raise ValueError("pool exhausted: every candidate has been revealed")
    table = np.full(len(candidates), np.nan)
    vals = mutual_information_table(samples, candidates.inputs[avail], method)
    if samples.family == "mlr" and method == "fast":
        top = vals.max()
        near = np.flatnonzero(vals >= top - (_SCREEN_ABS + _SCREEN_REL * top))
        vals[near] = mutual_information_table(samples, candidates.inputs[avail[near]], "reference")
    table[avail] = vals
    top = vals.max()
    best = avail[int(np.flatnonzero(vals >= top - _TIE_REL * max(abs(top), 1e-300))[0])]
    return int(best), table


# ---------------------------------------------------------------------------
# metrics


@dataclass
class MetricRow:
    t: int
    strategy: str
    entropy: float
    rmse_w: float
    rmse_A: float = float("nan")
    rmse_pi: float = float("nan")
    selected_idx: int = -1
    selected_x: np.ndarray = field(default_factory=lambda: np.zeros(0))
    wall_ms: float = 0.0

    def as_list(self) -> list:
        return [self.t, self.strategy, self.entropy, self.rmse_w, self.rmse_A, self.rmse_pi,
                self.selected_idx, *np.atleast_1d(self.selected_x).tolist(), self.wall_ms]


def posterior_entropy(samples) -> float:
    """log|cov(theta) + 1e-10 I| over the flattened draws.

    Accepts a ParamSampleSet or an (M, d) array.
    """
    F = samples.flatten() if isinstance(samples, ParamSampleSet) else np.asarray(samples, dtype=np.float64)
    if F.ndim == 1:
        F = F[:, None]
    if F.shape[0] < 2:
        raise ValueError("posterior entropy needs at least two draws")
    C = np.atleast_2d(np.cov(F, rowvar=False)) + ENTROPY_JITTER * np.eye(F.shape[1])
    sign, logdet = np.linalg.slogdet(C)
    if sign <= 0:
        raise np.linalg.LinAlgError("sample covariance is not positive definite")
    return float(logdet)


def _bundle_blocks(b):
    W = np.atleast_2d(b.weights)
    if isinstance(b, IoHmmParams):
        return W, b.pi0, b.A
    if isinstance(b, (MlrParams, MglmParams)):
        return W, b.pi, None
    if isinstance(b, GlmParams):
        return W, None, None
    raise TypeError(f"unsupported parameter bundle {type(b).__name__}")


def _rmse(a, b) -> float:
    return float(np.sqrt(np.mean((np.asarray(a) - np.asarray(b)) ** 2)))


def aligned_rmse(estimate, truth) -> dict:
    """Per-block RMSE after the state relabeling that best matches the weights.

    All K! permutations are searched; the one minimizing the weight RMSE is
    applied to every block (weights, mixing or initial distribution, and
    both axes of the transition matrix). Returns ``{"w", "pi", "A", "perm"}``
    with NaN for blocks the family lacks.
    """
    We, pe, Ae = _bundle_blocks(estimate)
    Wt, pt, At = _bundle_blocks(truth)
    if We.shape != Wt.shape:
        raise ValueError("estimate and truth differ in shape")
    K = We.shape[0]
    best, best_perm = np.inf, tuple(range(K))
    for perm in itertools.permutations(range(K)):
        r = _rmse(We[list(perm)], Wt)
        if r < best - 1e-15:
            best, best_perm = r, perm
    p = list(best_perm)
    out = {"w": best, "pi": float("nan"), "A": float("nan"), "perm": best_perm}
    if pe is not None and pt is not None:
        out["pi"] = _rmse(pe[p], pt)
    if Ae is not None and At is not None:
        out["A"] = _rmse(Ae[np.ix_(p, p)], At)
    return out


@dataclass(frozen=True)
class BicResult:
    bic: float
    loglik: float
    n_params: int
    converged: bool


def bic(log, family: str, K: int, rng=None, n_init: int = 10) -> BicResult:
    """k ln T - 2 max log-likelihood for a K-state mixture of linear regressions.

    ``k = K*D + (K - 1) + 1`` counts the weights, the mixing weights and the
    shared noise variance; the maximum comes from EM with restarts.
    """
    from .mlr import mlr_em_fit

    if family != "mlr":
        raise ValueError("BIC is implemented for the mixture of linear regressions only")
    if isinstance(log, ExperimentLog):
        X, y = log.X, log.y
    else:
        X, y = log
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    T = len(y)
    if T == 0:
        raise ValueError("BIC needs at least one trial")
    D = X.shape[1]
    res = mlr_em_fit(X, y, K, rng=rng, n_init=n_init)
    k = K * D + (K - 1) + 1
    return BicResult(k * np.log(T) - 2.0 * res.loglik, res.loglik, k, res.converged)


def selection_histogram(selected, candidates: CandidateSet, magnitude_threshold: float = 3.0) -> dict:
    """Counts of selected candidate indices with bucket summaries.

    Returns a dict with ``counts`` (per candidate), ``n`` and, depending on
    the candidate kind, ``angle_deg`` (per candidate, circle grids) or
    ``frac_above`` (share of selections with |x| above the threshold,
    scalar-input grids).
    """
    sel = np.asarray(list(selected), dtype=np.int64)
    if sel.size == 0:
        raise ValueError("no selections recorded")
    N = len(candidates)
    counts = np.bincount(sel, minlength=N)
    out = {"counts": counts, "n": int(sel.size)}
    X = candidates.inputs
    if X.shape[1] == 2 and candidates.kind.startswith("circle"):
        out["angle_deg"] = np.round(np.degrees(np.arctan2(X[:, 1], X[:, 0])) % 360.0, 9)
    if X.shape[1] == 1:
        mag = np.abs(X[:, 0])
        out["frac_above"] = float(counts[mag > magnitude_threshold].sum() / sel.size)
        out["threshold"] = magnitude_threshold
    return out


def angle_region_count(hist: dict, centers_deg, halfwidth_deg: float = 10.0) -> int:
    """Selections whose candidate angle is within ``halfwidth`` of any of ``centers``."""
    ang = hist["angle_deg"]
    mask = np.zeros(ang.shape, dtype=bool)
    for c in centers_deg:
        d = np.abs((ang - c + 180.0) % 360.0 - 180.0)
        mask |= d <= halfwidth_deg + 1e-9
    return int(hist["counts"][mask].sum())
