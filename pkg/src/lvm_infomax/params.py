"""Parameter bundles and posterior sample sets shared by all model families."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["MlrParams", "IoHmmParams", "MglmParams", "GlmParams", "ParamSampleSet"]

_SIMPLEX_TOL = 1e-9


def _check_simplex(p: np.ndarray, name: str, axis=-1) -> None:
    if np.any(p < -_SIMPLEX_TOL) or not np.allclose(p.sum(axis=axis), 1.0, rtol=0, atol=_SIMPLEX_TOL):
        raise ValueError(f"{name} must lie on the probability simplex")


@dataclass(frozen=True)
class MlrParams:
    """Mixture of linear regressions: state weights (K, D), mixing pi (K,), noise variance."""

    weights: np.ndarray
    pi: np.ndarray
    sigma_sq: float = 0.1

    def __post_init__(self):
        W = np.atleast_2d(np.asarray(self.weights, dtype=np.float64))
        pi = np.atleast_1d(np.asarray(self.pi, dtype=np.float64))
        if pi.shape != (W.shape[0],):
            raise ValueError("pi must have one entry per state")
        _check_simplex(pi, "pi")
        if not self.sigma_sq > 0:
            raise ValueError("sigma_sq must be positive")
        object.__setattr__(self, "weights", W)
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "sigma_sq", float(self.sigma_sq))

    @property
    def K(self) -> int:
        return self.weights.shape[0]

    @property
    def D(self) -> int:
        return self.weights.shape[1]

    family = "mlr"


@dataclass(frozen=True)
class IoHmmParams:
    """Bernoulli input-output HMM.

    ``weights`` has shape (K, P) and acts on the design row (the raw input
    with a trailing 1 when a bias is used), so ``p(y=1) = sigmoid(w . x)``.
    """

    weights: np.ndarray
    A: np.ndarray
    pi0: np.ndarray

    def __post_init__(self):
        W = np.atleast_2d(np.asarray(self.weights, dtype=np.float64))
        A = np.atleast_2d(np.asarray(self.A, dtype=np.float64))
        pi0 = np.atleast_1d(np.asarray(self.pi0, dtype=np.float64))
        K = W.shape[0]
        if A.shape != (K, K) or pi0.shape != (K,):
            raise ValueError("A must be (K, K) and pi0 (K,)")
        _check_simplex(A, "rows of A", axis=1)
        _check_simplex(pi0, "pi0")
        object.__setattr__(self, "weights", W)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "pi0", pi0)

    @property
    def K(self) -> int:
        return self.weights.shape[0]

    family = "iohmm"


@dataclass(frozen=True)
class MglmParams:
    """Mixture of Bernoulli GLMs: states redrawn independently from ``pi`` on every trial."""

    weights: np.ndarray
    pi: np.ndarray

    def __post_init__(self):
        W = np.atleast_2d(np.asarray(self.weights, dtype=np.float64))
        pi = np.atleast_1d(np.asarray(self.pi, dtype=np.float64))
        if pi.shape != (W.shape[0],):
            raise ValueError("pi must have one entry per state")
        _check_simplex(pi, "pi")
        object.__setattr__(self, "weights", W)
        object.__setattr__(self, "pi", pi)

    @property
    def K(self) -> int:
        return self.weights.shape[0]

    family = "mglm"


@dataclass(frozen=True)
class GlmParams:
    """Single Bernoulli GLM (the latent-free baseline)."""

    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "weights", np.atleast_2d(np.asarray(self.weights, dtype=np.float64)))

    @property
    def K(self) -> int:
        return 1

    family = "glm"


@dataclass
class ParamSampleSet:
    """M posterior draws of one family's parameter bundle.

    Attributes
    ----------
    family : {"mlr", "iohmm", "mglm", "glm"}
    weights : ndarray (M, K, P)
    mix : ndarray (M, K)
        Mixing weights (MLR, MGLM) or the initial-state distribution (IO-HMM).
    trans : ndarray (M, K, K) or None
        Transition matrices, IO-HMM only.
    state_probs : ndarray (M, K)
        Distribution of the latent state on the *next* trial under each draw;
        this is what the predictive for a new input marginalizes over.
    sigma_sq : float or None
        Fixed observation noise variance (MLR only).
    bias : bool
        GLM families: weights act on the input with a trailing 1 appended.
    chain : ndarray (M,)
        Index of the chain that produced each draw.
    """

    family: str
    weights: np.ndarray
    mix: np.ndarray
    trans: np.ndarray | None = None
    state_probs: np.ndarray | None = None
    sigma_sq: float | None = None
    bias: bool = False
    chain: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 3 or len(self.weights) < 1:
            raise ValueError("weights must have shape (M, K, P) with M >= 1")
        M, K, _ = self.weights.shape
        self.mix = np.asarray(self.mix, dtype=np.float64).reshape(M, K)
        if self.trans is not None:
            self.trans = np.asarray(self.trans, dtype=np.float64).reshape(M, K, K)
        if self.state_probs is None:
            self.state_probs = self.mix
        self.state_probs = np.asarray(self.state_probs, dtype=np.float64).reshape(M, K)
        self.chain = np.zeros(M, dtype=np.int64) if self.chain is None else np.asarray(self.chain, dtype=np.int64)
        if self.family == "mlr" and self.sigma_sq is None:
            raise ValueError("MLR sample sets need the noise variance")

    def __len__(self) -> int:
        return self.weights.shape[0]

    @property
    def M(self) -> int:
        return len(self)

    @property
    def K(self) -> int:
        return self.weights.shape[1]

    def flatten(self) -> np.ndarray:
        """(M, P) matrix: weights, then transitions (if any), then mixing weights."""
        parts = [self.weights.reshape(self.M, -1)]
        if self.trans is not None:
            parts.append(self.trans.reshape(self.M, -1))
        if self.family != "glm":
            parts.append(self.mix)
        return np.hstack(parts)

    def subset(self, idx) -> "ParamSampleSet":
        idx = np.asarray(idx)
        return ParamSampleSet(
            self.family,
            self.weights[idx],
            self.mix[idx],
            None if self.trans is None else self.trans[idx],
            self.state_probs[idx],
            self.sigma_sq,
            self.bias,
            self.chain[idx],
            dict(self.info),
        )

    def relabel(self, perm) -> "ParamSampleSet":
        """Copy with state ``perm[k]`` renamed to state ``k`` in every block."""
        p = list(perm)
        return ParamSampleSet(
            self.family,
            self.weights[:, p],
            self.mix[:, p],
            None if self.trans is None else self.trans[:, p][:, :, p],
            self.state_probs[:, p],
            self.sigma_sq,
            self.bias,
            self.chain.copy(),
            dict(self.info),
        )

    @classmethod
    def concat(cls, sets: list["ParamSampleSet"]) -> "ParamSampleSet":
        first = sets[0]
        if any(s.family != first.family or s.weights.shape[1:] != first.weights.shape[1:] for s in sets):
            raise ValueError("cannot merge sample sets of different families or shapes")
        trans = None if first.trans is None else np.concatenate([s.trans for s in sets])
        return cls(
            first.family,
            np.concatenate([s.weights for s in sets]),
            np.concatenate([s.mix for s in sets]),
            trans,
            np.concatenate([s.state_probs for s in sets]),
            first.sigma_sq,
            first.bias,
            np.concatenate([s.chain for s in sets]),
        )

    def mean_params(self):
        """Posterior-mean bundle in the family's parameter type."""
        W = self.weights.mean(axis=0)
        mix = self.mix.mean(axis=0)
        mix = mix / mix.sum()
        if self.family == "mlr":
            return MlrParams(W, mix, self.sigma_sq)
        if self.family == "iohmm":
            A = self.trans.mean(axis=0)
            return IoHmmParams(W, A / A.sum(axis=1, keepdims=True), mix)
        if self.family == "mglm":
            return MglmParams(W, mix)
        return GlmParams(W)
