"""scikit-learn style wrappers around the solver and the cross-validation search.

``X`` is always a :class:`~bsccs.data.Dataset`: the outcome counts live
inside it, so ``y`` is accepted and ignored as in unsupervised estimators.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import engine
from .data import Dataset
from .priors import PriorSpec
from .selection import CVConfig, default_grid, grid_search_cv, predictive_log_likelihood
from .solver import SolverConfig, fit


def check_dataset(X, J: int | None = None) -> Dataset:
    """Reject anything that is not a valid Dataset with the expected number of drugs."""
    if not isinstance(X, Dataset):
        raise TypeError(f"expected a bsccs Dataset, got {type(X).__name__}")
    X.validate()
    if J is not None and X.J != J:
        raise ValueError(f"dataset has J={X.J} drugs, estimator was fitted with J={J}")
    return X


class _SCCSBase(BaseEstimator):

    def _solver_config(self) -> SolverConfig:
        return SolverConfig(epsilon=self.epsilon, max_cycles=self.max_cycles,
                            convergence=self.convergence, precision=self.precision,
                            partitions=self.partitions)

    def predict(self, X) -> np.ndarray:
        """Expected event count per era given each subject's observed total."""
        check_is_fitted(self, "coef_")
        X = check_dataset(X, self.coef_.shape[0])
        state = engine.init_state(X, self.coef_)
        lexp = state.l_exp_xbeta.astype(np.float64)
        denom = state.denominators.astype(np.float64)
        return X.n[X.row_subject] * lexp / denom[X.row_subject]

    def score(self, X, y=None) -> float:
        """Conditioned log-likelihood of ``X`` at the fitted coefficients."""
        check_is_fitted(self, "coef_")
        X = check_dataset(X, self.coef_.shape[0])
        return predictive_log_likelihood(self.coef_, X, self.precision)


class SCCSRegression(_SCCSBase):
    """MAP fit of the conditioned Poisson model under a fixed prior."""

    def __init__(self, prior="laplace", variance=1.0, epsilon=0.0005, max_cycles=1000,
                 convergence="raw_sum", precision="double", partitions=1):
        self.prior = prior
        self.variance = variance
        self.epsilon = epsilon
        self.max_cycles = max_cycles
        self.convergence = convergence
        self.precision = precision
        self.partitions = partitions

    def fit(self, X, y=None, init_beta=None):
        X = check_dataset(X)
        res = fit(X, PriorSpec(self.prior, self.variance), self._solver_config(), init_beta)
        self.coef_ = res.beta_map
        self.log_posterior_ = res.log_posterior
        self.log_likelihood_ = res.log_likelihood
        self.n_cycles_ = res.cycles_run
        self.converged_ = res.converged
        self.drug_ids_ = res.drug_ids
        self.n_features_in_ = X.J
        return self


class SCCSRegressionCV(_SCCSBase):
    """Choose the prior variance by k-fold CV, then refit on all subjects."""

    def __init__(self, prior="laplace", grid=None, k=10, seed=0, warm_start=True, threads=1,
                 epsilon=0.0005, max_cycles=1000, convergence="raw_sum", precision="double",
                 partitions=1):
        self.prior = prior
        self.grid = grid
        self.k = k
        self.seed = seed
        self.warm_start = warm_start
        self.threads = threads
        self.epsilon = epsilon
        self.max_cycles = max_cycles
        self.convergence = convergence
        self.precision = precision
        self.partitions = partitions

    def fit(self, X, y=None):
        X = check_dataset(X)
        solver = self._solver_config()
        grid = default_grid() if self.grid is None else tuple(self.grid)
        cv = grid_search_cv(X, CVConfig(k=self.k, grid=grid, seed=self.seed, solver=solver,
                                        prior_kind=self.prior, warm_start=self.warm_start,
                                        threads=self.threads))
        res = fit(X, PriorSpec(self.prior, cv.selected_variance), solver)
        self.cv_results_ = cv
        self.variance_ = cv.selected_variance
        self.coef_ = res.beta_map
        self.log_posterior_ = res.log_posterior
        self.n_cycles_ = res.cycles_run
        self.converged_ = res.converged
        self.drug_ids_ = res.drug_ids
        self.n_features_in_ = X.J
        return self
