"""scikit-learn style estimators over the functional samplers.

Each estimator stores its hyperparameters verbatim in ``__init__`` (so
``get_params``/``set_params``/``clone`` work) and exposes fitted state
through trailing-underscore attributes.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .core import CandidateSet, ExperimentConfig, ExperimentLog, RngStream
from .infomax import mutual_information_table, posterior_entropy, select_input
from .iohmm import decode_states, iohmm_gibbs_run, iohmm_vi_run, iohmm_vi_sample, mglm_gibbs_run
from .mlr import mlr_em_fit, mlr_gibbs_run, mlr_vi_run, mlr_vi_sample
from .params import MglmParams, MlrParams, ParamSampleSet

__all__ = ["MixtureLinearRegression", "BernoulliIOHMM", "MixtureBernoulliGLM", "InfomaxSelector"]


def _check_binary(y):
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("y must contain only 0 and 1")


class _PosteriorMixin:
    """Shared helpers for estimators that keep posterior draws in ``samples_``."""

    def posterior_entropy(self) -> float:
        check_is_fitted(self, "samples_")
        return posterior_entropy(self.samples_)

    def mutual_information(self, X) -> np.ndarray:
        """MI between the next output and the parameters at each row of ``X``."""
        check_is_fitted(self, "samples_")
        return mutual_information_table(self.samples_, check_array(X))


class MixtureLinearRegression(_PosteriorMixin, RegressorMixin, BaseEstimator):
    """K-state mixture of linear regressions.

    Parameters
    ----------
    n_states : int
    inference : {"gibbs", "vi", "em"}
        Gibbs sampling, mean-field VI (sampled for ``samples_``) or
        maximum-likelihood EM (no ``samples_``).
    n_samples, burn_in : int
        Retained draws and discarded sweeps (Gibbs) or draws from q (VI).
    noise_var : float
        Fixed output noise variance for the Bayesian fits.
    prior_var : float
        Isotropic prior variance of each weight vector.
    random_state : int
    """

    def __init__(self, n_states=2, inference="gibbs", n_samples=500, burn_in=100, noise_var=0.1,
                 prior_var=10.0, random_state=0):
        self.n_states = n_states
        self.inference = inference
        self.n_samples = n_samples
        self.burn_in = burn_in
        self.noise_var = noise_var
        self.prior_var = prior_var
        self.random_state = random_state

    def _config(self, D):
        return ExperimentConfig(family="mlr", K=self.n_states, D=D, M=self.n_samples, burn_in=self.burn_in,
                                noise_var=self.noise_var, sigma0_sq=self.prior_var, seed=self.random_state)

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        rng = RngStream(self.random_state)
        if self.inference == "em":
            res = mlr_em_fit(X, y, self.n_states, rng=rng)
            self.params_ = res.params
            self.loglik_ = res.loglik
        else:
            log = ExperimentLog(X.shape[1], X, y)
            cfg = self._config(X.shape[1])
            if self.inference == "gibbs":
                self.samples_ = mlr_gibbs_run(log, cfg, rng)
            elif self.inference == "vi":
                self.vi_state_ = mlr_vi_run(log, cfg, rng.child(0))
                self.samples_ = mlr_vi_sample(self.vi_state_, self.n_samples, rng.child(1))
            else:
                raise ValueError(f"unknown inference {self.inference!r}")
            self.params_ = self.samples_.mean_params()
        self.coef_ = self.params_.weights
        self.mix_ = self.params_.pi
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        """Mixture mean sum_k pi_k x.w_k."""
        check_is_fitted(self, "params_")
        X = check_array(X)
        return X @ self.coef_.T @ self.mix_

    def predict_state_proba(self, X, y):
        """Responsibilities p(z | x, y) under the fitted parameters."""
        check_is_fitted(self, "params_")
        X, y = check_X_y(X, y, y_numeric=True)
        s2 = self.params_.sigma_sq
        logp = np.log(self.mix_) - 0.5 * (y[:, None] - X @ self.coef_.T) ** 2 / s2
        logp -= logp.max(axis=1, keepdims=True)
        p = np.exp(logp)
        return p / p.sum(axis=1, keepdims=True)


class BernoulliIOHMM(_PosteriorMixin, ClassifierMixin, BaseEstimator):
    """Input-output HMM with Bernoulli-GLM emissions and input-independent transitions.

    ``fit`` treats the rows of ``X`` as one time-ordered sequence.
    """

    def __init__(self, n_states=3, inference="gibbs", n_samples=500, burn_in=200, bias=True, prior_var=10.0,
                 random_state=0):
        self.n_states = n_states
        self.inference = inference
        self.n_samples = n_samples
        self.burn_in = burn_in
        self.bias = bias
        self.prior_var = prior_var
        self.random_state = random_state

    def _config(self, D, family="iohmm"):
        return ExperimentConfig(family=family, K=self.n_states, D=D, M=self.n_samples, burn_in=self.burn_in,
                                bias=self.bias, sigma0_sq=self.prior_var, seed=self.random_state)

    def _log(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        _check_binary(y)
        return ExperimentLog(X.shape[1], X, y, binary=True)

    def fit(self, X, y):
        log = self._log(X, y)
        cfg = self._config(log.D)
        rng = RngStream(self.random_state)
        if self.inference == "gibbs":
            self.samples_ = iohmm_gibbs_run(log, cfg, rng)
        elif self.inference == "vi":
            self.vi_state_ = iohmm_vi_run(log, cfg, rng.child(0))
            self.samples_ = iohmm_vi_sample(self.vi_state_, self.n_samples, rng.child(1))
        else:
            raise ValueError(f"unknown inference {self.inference!r}")
        self.params_ = self.samples_.mean_params()
        self.coef_ = self.params_.weights
        self.transmat_ = self.params_.A
        self.startprob_ = self.params_.pi0
        self.classes_ = np.array([0.0, 1.0])
        self.n_features_in_ = log.D
        return self

    def _design(self, X):
        X = check_array(X)
        return np.column_stack([X, np.ones(len(X))]) if self.bias else X

    def predict_proba(self, X):
        """p(y = 1) per row under the stationary state distribution of the fitted chain."""
        check_is_fitted(self, "params_")
        evals, evecs = np.linalg.eig(self.transmat_.T)
        stat = np.real(evecs[:, np.argmin(np.abs(evals - 1.0))])
        stat = stat / stat.sum()
        p1 = 0.5 * (1.0 + np.tanh(0.5 * self._design(X) @ self.coef_.T)) @ stat
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] > 0.5).astype(float)

    def predict_state_proba(self, X, y):
        """Posterior state marginals p(z_t | x_1:T, y_1:T) under the fitted parameters."""
        check_is_fitted(self, "params_")
        return decode_states(self._log(X, y), self.params_)

    def decode(self, X, y):
        return self.predict_state_proba(X, y).argmax(axis=1)


class MixtureBernoulliGLM(BernoulliIOHMM):
    """Mixture of Bernoulli GLMs: the state is redrawn independently on every trial."""

    def __init__(self, n_states=2, n_samples=500, burn_in=200, bias=True, prior_var=10.0, random_state=0):
        super().__init__(n_states=n_states, inference="gibbs", n_samples=n_samples, burn_in=burn_in, bias=bias,
                         prior_var=prior_var, random_state=random_state)

    def fit(self, X, y):
        log = self._log(X, y)
        self.samples_ = mglm_gibbs_run(log, self._config(log.D, "mglm"), RngStream(self.random_state),
                                       n_keep=self.n_samples, burn_in=self.burn_in)
        self.params_ = self.samples_.mean_params()
        self.coef_ = self.params_.weights
        self.mix_ = self.params_.pi
        self.classes_ = np.array([0.0, 1.0])
        self.n_features_in_ = log.D
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "params_")
        p1 = 0.5 * (1.0 + np.tanh(0.5 * self._design(X) @ self.coef_.T)) @ self.mix_
        return np.column_stack([1.0 - p1, p1])

    def predict_state_proba(self, X, y):
        check_is_fitted(self, "params_")
        log = self._log(X, y)
        p1 = 0.5 * (1.0 + np.tanh(0.5 * self._design(log.X) @ self.coef_.T))
        lik = np.where(log.y[:, None] == 1.0, p1, 1.0 - p1) * self.mix_
        return lik / lik.sum(axis=1, keepdims=True)


class InfomaxSelector(BaseEstimator):
    """Picks the candidate input with maximal MI under a fitted estimator's posterior.

    Parameters
    ----------
    method : {"fast", "reference"}
        MI evaluator for Gaussian-mixture outputs.
    """

    def __init__(self, method="fast"):
        self.method = method

    def select(self, estimator_or_samples, candidates):
        """Index of the chosen row; the MI table is kept in ``mi_``."""
        samples = estimator_or_samples
        if not isinstance(samples, ParamSampleSet):
            check_is_fitted(samples, "samples_")
            samples = samples.samples_
        if not isinstance(candidates, CandidateSet):
            candidates = CandidateSet(check_array(candidates))
        idx, self.mi_ = select_input(samples, candidates, self.method)
        return idx
