"""scikit-learn style front end for the tester-learner.

MassartTesterLearner wraps the tester in the fit/predict idiom so it
composes with the wider ecosystem: fit() splits the sample into the two
phases, runs the learner and the three tests, and records the verdict;
predict() applies the learned halfspace.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .data import Dataset, Halfspace
from .learner import LearnerSpec, get_learner
from .tester import schedule, run_tester

__all__ = ["MassartTesterLearner"]


class MassartTesterLearner(BaseEstimator, ClassifierMixin):
    """Tester-learner for gamma-biased Massart halfspaces under N(0, I).

    Parameters
    ----------
    epsilon, eta, gamma : the accuracy, noise bound and bias parameters.
    learner : "chow_sweep", "oracle" (needs planted metadata) or a
        callable Dataset -> Halfspace.
    overrides : desk-scale schedule overrides (l, N, tolerances, ...);
        N is ignored here because fit() uses the sample it is given.
    phase_split : fraction of the sample used for the learning phase.

    After fit: `verdict_` is "Accept" or "Reject", `report_` holds the
    full per-slice diagnostics, and `coef_`/`intercept_` define the
    halfspace sign(x @ coef_ + intercept_), with predictions in {-1, +1}.
    """

    def __init__(self, epsilon=0.05, eta=0.2, gamma=0.3, delta=0.1,
                 learner="chow_sweep", overrides=None, phase_split=0.5,
                 planted_target=None):
        self.epsilon = epsilon
        self.eta = eta
        self.gamma = gamma
        self.delta = delta
        self.learner = learner
        self.overrides = overrides
        self.phase_split = phase_split
        self.planted_target = planted_target

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        y = np.asarray(y)
        labels = np.unique(y)
        if not np.all(np.isin(labels, (-1, 1))):
            raise ValueError("labels must be in {-1, +1}")
        n = X.shape[0]
        n1 = int(n * self.phase_split)
        if n1 < 1 or n - n1 < 1:
            raise ValueError("phase split leaves an empty phase")
        overrides = dict(self.overrides or {})
        overrides["N"] = n - n1
        params = schedule(self.epsilon, self.delta, self.eta, self.gamma,
                          overrides=overrides, d=X.shape[1])
        prov = {}
        if self.planted_target is not None:
            v = np.asarray(self.planted_target[0], dtype=float)
            prov["target"] = {"v": [float(c) for c in v],
                              "t": float(self.planted_target[1])}
        phase1 = Dataset(X=X[:n1], y=y[:n1].astype(np.int8), seed=0,
                         provenance=prov)
        phase2 = Dataset(X=X[n1:], y=y[n1:].astype(np.int8), seed=0,
                         provenance=prov)
        if callable(self.learner):
            learner_fn = self.learner
        else:
            spec = LearnerSpec(kind=self.learner, gamma=params.gamma)
            learner_fn = get_learner(spec)
        self.report_ = run_tester(learner_fn, phase1, phase2, params)
        self.verdict_ = self.report_.verdict
        h = learner_fn(phase1)
        self.hypothesis_ = h
        self.coef_ = h.v.copy()
        self.intercept_ = -float(h.t)
        self.classes_ = np.array([-1, 1])
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        return X @ self.coef_ + self.intercept_

    def predict(self, X):
        scores = self.decision_function(X)
        return np.where(scores >= 0, 1, -1)
