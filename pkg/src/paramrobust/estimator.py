"""scikit-learn style wrappers.

``NetworkClassifier`` exposes a fixed network as a classifier (``fit`` only
checks the data; nothing is trained).  ``ParameterRobustness`` estimates
the global eps* and sigma* over the bounding box of the data it is fitted
on, then scores individual inputs.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .dataset import domain_from_dataset
from .encoder import SIDES, QueryKind, RobustnessQuery, encode_local_flip
from .fixtures import resolve_model
from .network import Network, classify, forward
from .optimizer import DEFAULT_TOLERANCE, estimate_eps_global, estimate_eps_local, estimate_sigma, estimation_config
from .solver import DeltaSat, SolverConfig, Unsat, decide


def _network(ref) -> Network:
    if isinstance(ref, Network):
        return ref
    if isinstance(ref, str):
        return resolve_model(ref)
    raise TypeError("network must be a Network or a model reference string")


def _check_inputs(est, X, reset: bool = False):
    X = check_array(X, dtype=float)
    net = est.net_
    if X.shape[1] != net.input_dim:
        raise ValueError(f"X has {X.shape[1]} features, the network expects {net.input_dim}")
    if reset:
        est.n_features_in_ = X.shape[1]
    return X


class NetworkClassifier(ClassifierMixin, BaseEstimator):
    """A pre-trained network behind the classifier interface."""

    def __init__(self, network="builtin:cat"):
        self.network = network

    def fit(self, X, y=None):
        self.net_ = _network(self.network)
        if y is not None:
            X, y = check_X_y(X, y, dtype=float)
        _check_inputs(self, X, reset=True)
        self.classes_ = np.array([0, 1])
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "net_")
        X = _check_inputs(self, X)
        p = np.asarray(forward(self.net_, X))
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        check_is_fitted(self, "net_")
        return np.asarray(classify(self.net_, _check_inputs(self, X)))


class ParameterRobustness(TransformerMixin, BaseEstimator):
    """Certified parameter-robustness measures of a fixed network.

    After ``fit(X)``: ``domain_`` is the bounding box of ``X``, and
    ``eps_``/``sigma_`` are ``(lower, upper)`` enclosures of the global
    confidence change and of the largest flippable margin.  ``transform``
    gives per-row local eps enclosures; ``predict`` flags rows whose label
    some perturbation flips (1), cannot flip (0), or was undecided (-1).
    """

    def __init__(self, network="builtin:cat", delta=0.005, side="both", precision=1e-4,
                 tolerance=DEFAULT_TOLERANCE, max_splits=1_000_000):
        self.network = network
        self.delta = delta
        self.side = side
        self.precision = precision
        self.tolerance = tolerance
        self.max_splits = max_splits

    def _validate(self):
        if not self.delta >= 0:
            raise ValueError("delta must be nonnegative")
        if self.side not in SIDES:
            raise ValueError(f"side must be one of {SIDES}")

    def fit(self, X, y=None):
        self._validate()
        self.net_ = _network(self.network)
        X = _check_inputs(self, X, reset=True)
        self.domain_ = domain_from_dataset(X)
        cfg = estimation_config(precision=self.precision, max_splits=self.max_splits)
        eps = estimate_eps_global(self.net_, None, self.domain_, self.delta, cfg, self.tolerance)
        sig = estimate_sigma(self.net_, None, self.domain_, self.delta, self.side, cfg, self.tolerance)
        self.eps_ = (eps.lower, eps.upper)
        self.sigma_ = (sig.lower, sig.upper)
        self.converged_ = eps.converged and sig.converged
        return self

    def transform(self, X):
        check_is_fitted(self, "eps_")
        X = _check_inputs(self, X)
        cfg = estimation_config(precision=self.precision, max_splits=self.max_splits)
        out = np.empty((X.shape[0], 2))
        for i, x in enumerate(X):
            est = estimate_eps_local(self.net_, None, x, self.delta, cfg, self.tolerance)
            out[i] = est.lower, est.upper
        return out

    def predict(self, X):
        check_is_fitted(self, "eps_")
        X = _check_inputs(self, X)
        cfg = SolverConfig(precision=self.precision, max_splits=self.max_splits)
        flags = np.empty(X.shape[0], dtype=int)
        for i, x in enumerate(X):
            q = RobustnessQuery(QueryKind.LOCAL_FLIP, self.net_, self.delta, x0=x)
            v = decide(encode_local_flip(q), cfg)
            flags[i] = 1 if isinstance(v, DeltaSat) else 0 if isinstance(v, Unsat) else -1
        return flags
