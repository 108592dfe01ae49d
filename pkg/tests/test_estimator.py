import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from paramrobust.dataset import load_dataset
from paramrobust.estimator import NetworkClassifier, ParameterRobustness
from paramrobust.fixtures import cats_csv, load_model
from paramrobust.network import forward


@pytest.fixture(scope="module")
def cats():
    return load_dataset(cats_csv())


class TestNetworkClassifier:
    def test_matches_network(self, cats, cat):
        clf = NetworkClassifier().fit(cats.X, cats.y)
        proba = clf.predict_proba(cats.X)
        np.testing.assert_allclose(proba[:, 1], forward(cat, cats.X))
        np.testing.assert_allclose(proba.sum(axis=1), 1.0)
        assert clf.score(cats.X, cats.y) == pytest.approx(0.7847, abs=1e-4)
        assert clf.classes_.tolist() == [0, 1]

    def test_accepts_network_object(self, cats, cat):
        clf = NetworkClassifier(network=cat).fit(cats.X)
        assert np.array_equal(clf.predict(cats.X[:5]), NetworkClassifier().fit(cats.X).predict(cats.X[:5]))

    def test_errors(self, cats):
        with pytest.raises(NotFittedError):
            NetworkClassifier().predict(cats.X)
        with pytest.raises(ValueError):
            NetworkClassifier().fit(np.ones((3, 5)))
        with pytest.raises(TypeError):
            NetworkClassifier(network=3).fit(cats.X)
        clf = NetworkClassifier().fit(cats.X)
        with pytest.raises(ValueError):
            clf.predict(np.ones((2, 3)))
        with pytest.raises(ValueError):
            clf.predict(np.array([[np.nan, 1.0]]))

    def test_clone_keeps_params(self):
        c = clone(NetworkClassifier(network="builtin:mlp_relu"))
        assert c.get_params() == {"network": "builtin:mlp_relu"}


@pytest.fixture(scope="module")
def fitted(cats):
    return ParameterRobustness(delta=0.005).fit(cats.X)


class TestParameterRobustness:
    def test_fit_attributes(self, fitted):
        assert fitted.converged_
        assert fitted.eps_[0] <= fitted.eps_[1] and fitted.eps_[1] - fitted.eps_[0] <= 1e-4
        assert fitted.sigma_[1] <= fitted.eps_[1] + 1e-6
        assert fitted.n_features_in_ == 2
        assert fitted.domain_.lo.tolist() == [6.3, 2.0]

    def test_transform_and_predict(self, fitted, cats):
        X = cats.X[:6]
        enc = fitted.transform(X)
        assert enc.shape == (6, 2)
        assert np.all(enc[:, 0] <= enc[:, 1])
        assert np.all(enc[:, 1] <= fitted.eps_[1] + 1e-9)
        flags = fitted.predict(X)
        assert set(flags.tolist()) <= {0, 1}
        margins = np.abs(forward(load_model("cat"), X) - 0.5)
        assert np.all(margins[flags == 1] <= fitted.sigma_[1] + 1e-3)

    @pytest.mark.parametrize("kw", [dict(delta=-0.1), dict(side="left")])
    def test_bad_params(self, cats, kw):
        with pytest.raises(ValueError):
            ParameterRobustness(**kw).fit(cats.X)

    def test_not_fitted(self, cats):
        with pytest.raises(NotFittedError):
            ParameterRobustness().transform(cats.X)
