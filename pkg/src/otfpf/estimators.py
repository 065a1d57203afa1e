"""scikit-learn style estimators wrapping the functional filters.

``fit(dz)`` runs the filter along observation increments (one row per time
step) and stores the moment trajectories; ``transform(dz)`` refits and
returns the mean trajectory; ``predict(dz)`` returns the final mean.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import _rng
from .kalman import kalman_filter
from .model import LinearGaussianModel
from .particle_filters import FilterVariant, init_ensemble, run_ensemble

__all__ = ["KalmanBucyFilter", "EnsembleFilter"]


class _FilterBase(TransformerMixin, BaseEstimator):

    def _model(self):
        return LinearGaussianModel(a=self.a, h=self.h, sigma_b=self.sigma_b,
                                   r=self.r, m0=self.m0, sigma0=self.sigma0)

    def _check_dz(self, dz, model):
        dz = check_array(dz, ensure_min_samples=1)
        if dz.shape[1] != model.obs_dim:
            raise ValueError(f"dz has {dz.shape[1]} columns, the observation "
                             f"dimension is {model.obs_dim}")
        return dz

    def transform(self, dz):
        """Filtered mean trajectory, shape ``(steps + 1, d)``."""
        return self.fit(dz).means_

    def predict(self, dz):
        """Filtered mean at the final time."""
        return self.fit(dz).means_[-1]

    def final_belief(self):
        check_is_fitted(self, "means_")
        return self.means_[-1], self.covs_[-1]


class KalmanBucyFilter(_FilterBase):
    """Exact Kalman-Bucy filter on a uniform time grid.

    Parameters
    ----------
    a, h, sigma_b : array_like
        Drift, observation and process-noise matrices.
    r, m0, sigma0 : array_like, optional
        Observation-noise covariance and Gaussian prior.
    dt : float
        Step length matching the rows of ``dz``.

    Attributes
    ----------
    means_ : ndarray, shape (steps + 1, d)
    covs_ : ndarray, shape (steps + 1, d, d)
    model_ : LinearGaussianModel
    """

    def __init__(self, a, h, sigma_b, r=None, m0=None, sigma0=None, dt=1e-3):
        self.a = a
        self.h = h
        self.sigma_b = sigma_b
        self.r = r
        self.m0 = m0
        self.sigma0 = sigma0
        self.dt = dt

    def fit(self, dz, y=None):
        model = self._model()
        dz = self._check_dz(dz, model)
        self.model_ = model
        self.means_, self.covs_ = kalman_filter(model, dz, float(self.dt))
        return self


class EnsembleFilter(_FilterBase):
    """Interacting particle filter approximating the Kalman-Bucy filter.

    Parameters
    ----------
    a, h, sigma_b, r, m0, sigma0, dt
        As for :class:`KalmanBucyFilter`.
    variant : str
        One of ``StochasticFPF``, ``DeterministicOptimalFPF``,
        ``SingularOptimalFPF`` and ``PerturbedObsEnKF``.
    n_particles : int
    exact_moments : bool
        Match the initial ensemble moments to the prior exactly.
    random_state : int
        Seed of the keyed streams for the initial draw and step noise.

    Attributes
    ----------
    means_, covs_ : ndarray
        Empirical moment trajectories.
    particles_ : ndarray, shape (n_particles, d)
        Final ensemble.
    """

    def __init__(self, a, h, sigma_b, r=None, m0=None, sigma0=None, dt=1e-3,
                 variant="DeterministicOptimalFPF", n_particles=100,
                 exact_moments=False, random_state=0):
        self.a = a
        self.h = h
        self.sigma_b = sigma_b
        self.r = r
        self.m0 = m0
        self.sigma0 = sigma0
        self.dt = dt
        self.variant = variant
        self.n_particles = n_particles
        self.exact_moments = exact_moments
        self.random_state = random_state

    def fit(self, dz, y=None):
        model = self._model()
        dz = self._check_dz(dz, model)
        variant = FilterVariant(self.variant)
        seed = int(self.random_state)
        ens = init_ensemble(model, int(self.n_particles), variant,
                            _rng.stream(seed, _rng.PARTICLES),
                            exact_moments=bool(self.exact_moments))
        noise = _rng.stream(seed, _rng.PARTICLE_NOISE) if variant.is_stochastic else None
        ens, self.means_, self.covs_ = run_ensemble(model, ens, dz, float(self.dt), noise)
        self.model_ = model
        self.particles_ = np.array(ens.particles)
        return self
