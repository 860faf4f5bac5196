"""scikit-learn style semi-supervised classifier built on the SDIE scheme."""
import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import unique_labels
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .engine import SdieParams, run_sdie
from .exceptions import InputError
from .expsolver import ForcedDiffusion, PropagatorConfig
from .graph import FidelityData, GaussianWeights
from .lowrank import nystrom_qr
from .pipeline import exact_factors


class SDIEClassifier(ClassifierMixin, BaseEstimator):
    """Binary transductive classifier on a Gaussian similarity graph.

    ``fit(X, y)`` takes feature rows and labels where ``-1`` marks unlabelled
    samples. Labelled samples receive fidelity ``mu_hat``; unlabelled ones
    start at ``init_value``. The fitted label function is thresholded at 1/2.

    Parameters
    ----------
    eps, tau : float
        Interface parameter and time step; ``tau == eps`` gives the MBO
        scheme.
    mu_hat : float
        Fidelity strength on labelled samples.
    sigma : float
        Scale of the Gaussian similarity.
    n_components : int
        Rank of the Nystrom factorisation; 0 means the exact decomposition.
    normalization : {"symmetric", "random_walk"}
    random_state : int or None
        Seed for the landmark draw.
    """

    def __init__(self, eps=0.003, tau=0.003, mu_hat=30.0, sigma=35.0,
                 n_components=70, normalization="symmetric", scheme="strang",
                 k=1, k_b=1, b_method="ode_euler", delta=1e-10, max_iter=500,
                 init_value=0.49, random_state=None):
        self.eps = eps
        self.tau = tau
        self.mu_hat = mu_hat
        self.sigma = sigma
        self.n_components = n_components
        self.normalization = normalization
        self.scheme = scheme
        self.k = k
        self.k_b = k_b
        self.b_method = b_method
        self.delta = delta
        self.max_iter = max_iter
        self.init_value = init_value
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float)
        labelled = y != -1
        self.classes_ = unique_labels(y[labelled])
        if self.classes_.size != 2:
            raise InputError("exactly two classes must be labelled")
        if not labelled.any() or labelled.all():
            raise InputError("need both labelled and unlabelled samples")
        n = X.shape[0]
        self.weight_ = GaussianWeights(X, sigma=self.sigma)
        ft = np.zeros(n)
        ft[labelled] = (y[labelled] == self.classes_[1]).astype(float)
        mu = np.where(labelled, float(self.mu_hat), 0.0)
        fid = FidelityData(mu, ft)
        u0 = np.where(labelled, ft, self.init_value)

        if self.n_components == 0 or self.n_components >= n:
            lap = exact_factors(self.weight_, self.normalization)
        else:
            lap = nystrom_qr(self.weight_, fid.Z, self.n_components,
                             seed=self.random_state,
                             normalization=self.normalization)
        cfg = PropagatorConfig(tau=self.tau, scheme=self.scheme, k=self.k,
                               k_b=self.k_b, b_method=self.b_method)
        params = SdieParams(self.eps, self.tau, self.delta, self.max_iter)
        result = run_sdie(u0, params, ForcedDiffusion(cfg, lap, fid))
        self.label_function_ = result.u
        self.n_iter_ = result.n_iter
        self.converged_ = result.converged
        self.transduction_ = self.classes_[
            (result.u >= 0.5).astype(int)]
        self.n_features_in_ = X.shape[1]
        return self

    def _score_new(self, X):
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise InputError("feature count differs from the fitted data")
        feats = self.weight_.features
        d2 = ((X[:, None, :] - feats[None, :, :]) ** 2).sum(-1)
        w = np.exp(-d2 / (feats.shape[1] * self.sigma ** 2))
        total = w.sum(axis=1)
        total[total == 0] = 1.0
        return w @ self.label_function_ / total

    def predict_proba(self, X):
        """Similarity-weighted average of the fitted label function."""
        check_is_fitted(self, "label_function_")
        u = self._score_new(X)
        return np.column_stack([1.0 - u, u])

    def predict(self, X):
        proba = self.predict_proba(X)
        return self.classes_[(proba[:, 1] >= 0.5).astype(int)]
