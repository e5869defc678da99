"""Scaled forward-backward recursions, posterior path sampling and state decoding."""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from ..core import ExperimentLog, as_stream
from ..params import IoHmmParams
from ..randkit import nb_seed
from .glm import glm_design

__all__ = [
    "HmmMessages",
    "bernoulli_loglik_matrix",
    "forward_backward",
    "forward_backward_lik",
    "sample_state_sequence",
    "decode_states",
    "design_for",
]


@dataclass
class HmmMessages:
    """Scaled forward/backward messages.

    ``F[t]`` is the filtered distribution p(z_t | y_1..t) (rows sum to 1) and
    ``B[t]`` is p(y_t+1..T | z_t) divided by the product of the later scale
    factors. ``L`` holds the per-trial likelihoods after dividing each row by
    ``exp(L_shift[t])``; ``log_scale[t]`` is the log normalizer of step t
    including that shift, so ``loglik = log_scale.sum()``.
    """

    F: np.ndarray
    B: np.ndarray
    L: np.ndarray
    log_scale: np.ndarray
    L_shift: np.ndarray

    @property
    def T(self) -> int:
        return self.F.shape[0]

    @property
    def loglik(self) -> float:
        return float(self.log_scale.sum())

    @property
    def posteriors(self) -> np.ndarray:
        G = self.F * self.B
        return G / G.sum(axis=1, keepdims=True)

    def pairwise(self, A) -> np.ndarray:
        """(T-1, K, K) joint posteriors q(z_t-1 = j, z_t = k)."""
        A = np.asarray(A, dtype=np.float64)
        if self.T < 2:
            return np.zeros((0,) + A.shape)
        X = self.F[:-1, :, None] * A[None] * (self.L[1:] * self.B[1:])[:, None, :]
        return X / X.sum(axis=(1, 2), keepdims=True)


# ---------------------------------------------------------------------------
# compiled core


@numba.njit(cache=True, nogil=True)
def nb_shift_rows(logL):
    """exp(logL) with each row divided by its max; returns (L, shift)."""
    T, K = logL.shape
    L = np.empty((T, K))
    shift = np.empty(T)
    for t in range(T):
        m = logL[t, 0]
        for k in range(1, K):
            if logL[t, k] > m:
                m = logL[t, k]
        if not np.isfinite(m):
            m = 0.0
        shift[t] = m
        for k in range(K):
            L[t, k] = np.exp(logL[t, k] - m)
    return L, shift


@numba.njit(cache=True, nogil=True)
def nb_forward(pi0, A, L):
    T, K = L.shape
    F = np.zeros((T, K))
    logc = np.zeros(T)
    if T == 0:
        return F, logc
    c = 0.0
    for k in range(K):
        F[0, k] = pi0[k] * L[0, k]
        c += F[0, k]
    logc[0] = np.log(c)
    if c > 0:
        for k in range(K):
            F[0, k] /= c
    for t in range(1, T):
        c = 0.0
        for k in range(K):
            s = 0.0
            for j in range(K):
                s += F[t - 1, j] * A[j, k]
            F[t, k] = s * L[t, k]
            c += F[t, k]
        logc[t] = np.log(c)
        if c > 0:
            for k in range(K):
                F[t, k] /= c
    return F, logc


@numba.njit(cache=True, nogil=True)
def nb_backward(A, L, logc):
    T, K = L.shape
    B = np.ones((T, K))
    for t in range(T - 2, -1, -1):
        c = np.exp(logc[t + 1])
        for j in range(K):
            s = 0.0
            for k in range(K):
                s += A[j, k] * L[t + 1, k] * B[t + 1, k]
            B[t, j] = s / c if c > 0 else 0.0
    return B


@numba.njit(cache=True, nogil=True)
def nb_sample_path(pi0, A, L, B, z):
    """Forward draw z_1 ~ pi0 B_1 L_1, then z_t ~ A[z_t-1] B_t L_t. Writes into z."""
    T, K = L.shape
    p = np.empty(K)
    for t in range(T):
        s = 0.0
        for k in range(K):
            prior = pi0[k] if t == 0 else A[z[t - 1], k]
            p[k] = prior * B[t, k] * L[t, k]
            s += p[k]
        u = np.random.random() * s
        acc = 0.0
        zt = K - 1
        for k in range(K):
            acc += p[k]
            if u < acc:
                zt = k
                break
        z[t] = zt


@numba.njit(cache=True, nogil=True)
def nb_bernoulli_loglik(X, y, W):
    """(T, K) matrix of log p(y_t | x_t, w_k)."""
    T, P = X.shape
    K = W.shape[0]
    out = np.empty((T, K))
    for t in range(T):
        for k in range(K):
            eta = 0.0
            for d in range(P):
                eta += X[t, d] * W[k, d]
            # log sigmoid(eta) if y = 1, log sigmoid(-eta) if y = 0
            a = -eta if y[t] > 0.5 else eta
            if a > 0:
                out[t, k] = -(a + np.log1p(np.exp(-a)))
            else:
                out[t, k] = -np.log1p(np.exp(a))
    return out


# ---------------------------------------------------------------------------
# python API


def design_for(log_or_X, P: int) -> tuple[np.ndarray, np.ndarray, bool]:
    """Design matrix, outputs and bias flag for weights of length ``P``.

    One more column than the raw inputs means a trailing bias column.
    """
    if isinstance(log_or_X, ExperimentLog):
        X, y = log_or_X.X, log_or_X.y
        X = np.asarray(X, dtype=np.float64).reshape(len(y), log_or_X.D)
    else:
        X, y = log_or_X
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
    if P == X.shape[1] + 1:
        Xd, bias = glm_design(X, bias=True), True
    elif P == X.shape[1]:
        Xd, bias = np.ascontiguousarray(X), False
    else:
        raise ValueError(f"weights of length {P} do not fit inputs of dimension {X.shape[1]}")
    return Xd, np.ascontiguousarray(y, dtype=np.float64), bias


def bernoulli_loglik_matrix(Xd, y, W) -> np.ndarray:
    return nb_bernoulli_loglik(
        np.ascontiguousarray(Xd, dtype=np.float64),
        np.ascontiguousarray(y, dtype=np.float64),
        np.ascontiguousarray(np.atleast_2d(W), dtype=np.float64),
    )


def forward_backward_lik(pi0, A, L=None, logL=None) -> HmmMessages:
    """Forward-backward from explicit likelihoods (``L``) or log-likelihoods (``logL``)."""
    pi0 = np.ascontiguousarray(pi0, dtype=np.float64)
    A = np.ascontiguousarray(np.atleast_2d(A), dtype=np.float64)
    if (L is None) == (logL is None):
        raise ValueError("pass exactly one of L and logL")
    if logL is not None:
        Ls, shift = nb_shift_rows(np.ascontiguousarray(logL, dtype=np.float64))
    else:
        Ls = np.ascontiguousarray(np.atleast_2d(L), dtype=np.float64)
        shift = np.zeros(len(Ls))
    F, logc = nb_forward(pi0, A, Ls)
    B = nb_backward(A, Ls, logc)
    return HmmMessages(F, B, Ls, logc + shift, shift)


def forward_backward(log, params: IoHmmParams) -> HmmMessages:
    """Scaled forward-backward for a Bernoulli IO-HMM on the trials in ``log``."""
    Xd, y, _ = design_for(log, params.weights.shape[1])
    return forward_backward_lik(params.pi0, params.A, logL=bernoulli_loglik_matrix(Xd, y, params.weights))


def sample_state_sequence(pi0, A, L, messages: HmmMessages | None, rng) -> np.ndarray:
    """Draw a whole latent path from its posterior given the observations.

    ``messages`` must come from the same ``(pi0, A, L)``; pass ``None`` to
    compute them here. Returned states are 0-based.
    """
    if messages is None:
        messages = forward_backward_lik(pi0, A, L=L)
    z = np.zeros(messages.T, dtype=np.int64)
    nb_seed(as_stream(rng).kernel_seed())
    nb_sample_path(
        np.ascontiguousarray(pi0, dtype=np.float64),
        np.ascontiguousarray(A, dtype=np.float64),
        messages.L,
        messages.B,
        z,
    )
    return z


def decode_states(log, params: IoHmmParams) -> np.ndarray:
    """(T, K) posterior state probabilities; ``argmax(axis=1)`` is the hard decoding."""
    return forward_backward(log, params).posteriors
