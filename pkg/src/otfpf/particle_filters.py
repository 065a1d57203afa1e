"""Finite-N controlled interacting particle filters.

Four variants share one empirical-moment routine and one gain formula
``K = S H^T R^{-1}``:

* ``StochasticFPF`` -- linear feedback particle filter with process noise;
* ``DeterministicOptimalFPF`` -- optimal-transport flow, noise free given ``dz``;
* ``SingularOptimalFPF`` -- optimal-transport flow that injects noise only
  in the kernel of a rank-deficient empirical covariance;
* ``PerturbedObsEnKF`` -- ensemble Kalman-Bucy filter with perturbed
  observations.

Every step is a single explicit Euler(-Maruyama) step with coefficients
frozen at the start of the step. The ``_*_update`` kernels operate on
particle arrays of shape ``(..., N, d)`` so experiments can advance many
independent trials at once through the same code.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from ._validation import sym
from .exceptions import ConfigError, NumericalBlowup
from .kalman import GaussianBelief
from .matrix_eq import (optimal_gaussian_map, solve_singular_gain,
                        sqrt_ricc)

__all__ = [
    "FilterVariant", "Ensemble", "MeanFieldEnsemble", "empirical_moments",
    "kalman_gain", "init_ensemble", "step_stochastic_fpf", "step_det_fpf",
    "step_singular_fpf", "step_perturbed_enkf", "step_mean_field", "step",
    "run_ensemble",
]


class FilterVariant(str, Enum):
    STOCHASTIC_FPF = "StochasticFPF"
    DETERMINISTIC_FPF = "DeterministicOptimalFPF"
    SINGULAR_FPF = "SingularOptimalFPF"
    PERTURBED_ENKF = "PerturbedObsEnKF"

    @property
    def is_stochastic(self):
        return self is not FilterVariant.DETERMINISTIC_FPF


def _as_particles(particles):
    x = np.array(particles, dtype=float)
    if x.ndim != 2:
        raise ConfigError(f"particles must be an (N, d) array, got ndim={x.ndim}",
                          key="particles")
    if x.shape[0] < 2:
        raise ConfigError("an ensemble needs at least 2 particles", key="n")
    if not np.all(np.isfinite(x)):
        raise NumericalBlowup("ensemble contains non-finite particles")
    x.setflags(write=False)
    return x


@dataclass(frozen=True, eq=False)
class Ensemble:
    """``N x d`` particle array tagged with the filter variant that evolves it."""

    particles: np.ndarray
    variant: FilterVariant

    def __post_init__(self):
        object.__setattr__(self, "particles", _as_particles(self.particles))
        object.__setattr__(self, "variant", FilterVariant(self.variant))

    @property
    def n(self):
        return self.particles.shape[0]

    @property
    def dim(self):
        return self.particles.shape[1]


@dataclass(frozen=True, eq=False)
class MeanFieldEnsemble:
    """Particles driven by the exact Kalman moments instead of empirical ones."""

    particles: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "particles", _as_particles(self.particles))

    @property
    def n(self):
        return self.particles.shape[0]

    @classmethod
    def coupled_to(cls, ens):
        """Mean-field copy sharing ``ens``'s initial particles."""
        return cls(ens.particles)


def _moments(x):
    n = x.shape[-2]
    mean = x.mean(axis=-2)
    dev = x - mean[..., None, :]
    cov = dev.swapaxes(-1, -2) @ dev / (n - 1)
    return mean, sym(cov)


def empirical_moments(ens):
    """Ensemble mean and ``1 / (N - 1)``-normalized covariance."""
    x = ens.particles if isinstance(ens, (Ensemble, MeanFieldEnsemble)) else np.asarray(ens)
    if x.shape[-2] < 2:
        raise ConfigError("an ensemble needs at least 2 particles", key="n")
    mean, cov = _moments(x)
    return GaussianBelief(mean, cov)


def kalman_gain(model, cov):
    """``K = S H^T R^{-1}``, for a single covariance or a stack."""
    return cov @ model.ht_rinv


def _check_finite(x):
    if not np.all(np.isfinite(x)):
        raise NumericalBlowup("particles became non-finite; reduce dt")
    return x


def _row(v):
    return np.asarray(v, dtype=float)[..., None, :]


def _stochastic_fpf_update(model, x, dz, dt, noise, moments=None):
    mean, cov = _moments(x) if moments is None else moments
    gain = kalman_gain(model, cov)
    innov = _row(dz) - 0.5 * dt * (x + _row(mean)) @ model.h.T
    out = x + dt * x @ model.a.T + innov @ gain.swapaxes(-1, -2)
    if noise is not None:
        out = out + np.sqrt(dt) * noise @ model.sigma_b.T
    return _check_finite(out)


def _mean_flow(model, mean, cov, dz, dt):
    """Shared drift of the optimal-transport flows: ``A m dt + K (dz - H m dt)``."""
    gain = kalman_gain(model, cov)
    innov = np.asarray(dz, dtype=float) - dt * mean @ model.h.T
    return dt * mean @ model.a.T + (innov[..., None, :] @ gain.swapaxes(-1, -2))[..., 0, :]


def _det_fpf_update(model, x, dz, dt, moments=None):
    mean, cov = _moments(x) if moments is None else moments
    g = sqrt_ricc(model, cov)
    dev = x - _row(mean)
    out = x + _row(_mean_flow(model, mean, cov, dz, dt)) + dt * dev @ g
    return _check_finite(out)


def _enkf_update(model, x, dz, dt, noise_b, noise_w, moments=None):
    mean, cov = _moments(x) if moments is None else moments
    gain = kalman_gain(model, cov)
    innov = _row(dz) - dt * x @ model.h.T - np.sqrt(dt) * noise_w @ model.r_sqrt.T
    out = (x + dt * x @ model.a.T + np.sqrt(dt) * noise_b @ model.sigma_b.T
           + innov @ gain.swapaxes(-1, -2))
    return _check_finite(out)


def _singular_fpf_update(model, x, dz, dt, noise, moments=None):
    mean, cov = _moments(x) if moments is None else moments
    g, s = solve_singular_gain(model, cov)
    out = (x + _mean_flow(model, mean, cov, dz, dt) + dt * (x - mean) @ g
           + np.sqrt(dt) * noise @ s.T)
    return _check_finite(out)


def _mean_field_update(model, x, mean, cov, g, dz, dt):
    dev = x - _row(mean)
    out = x + _row(_mean_flow(model, mean, cov, dz, dt)) + dt * dev @ g
    return _check_finite(out)


def _require(ens, variant):
    if ens.variant is not variant:
        raise ConfigError(f"ensemble variant is {ens.variant.value}, "
                          f"step requires {variant.value}", key="variant")


def step_stochastic_fpf(model, ens, dz, dt, rng):
    """Euler-Maruyama step of the stochastic linear FPF.

    ``dX^i = A X^i dt + sigma_B dB^i + K (dz - H (X^i + m) dt / 2)`` with
    ``K`` from the ensemble covariance at the start of the step. ``rng``
    supplies one ``(N, q)`` block of standard normals per step.
    """
    _require(ens, FilterVariant.STOCHASTIC_FPF)
    noise = rng.standard_normal((ens.n, model.noise_dim))
    return Ensemble(_stochastic_fpf_update(model, ens.particles, dz, dt, noise),
                    ens.variant)


def step_det_fpf(model, ens, dz, dt):
    """Euler step of the deterministic optimal-transport FPF.

    ``dX^i = A m dt + K (dz - H m dt) + sqrt_ricc(S) (X^i - m) dt`` where
    ``m``, ``S`` are the empirical moments. The flow is noise free given
    ``dz``; its empirical moments follow the Kalman-Bucy equations.

    Raises
    ------
    SingularCovariance
        If the empirical covariance is rank deficient (e.g. ``N <= d``);
        use the ``SingularOptimalFPF`` variant instead.
    """
    _require(ens, FilterVariant.DETERMINISTIC_FPF)
    return Ensemble(_det_fpf_update(model, ens.particles, dz, dt), ens.variant)


def step_singular_fpf(model, ens, dz, dt, rng):
    """Euler-Maruyama step of the optimal FPF for a possibly singular covariance.

    The drift matches :func:`step_det_fpf` with the gain ``G`` from
    :func:`~otfpf.matrix_eq.solve_singular_gain`; in addition every
    particle receives ``s dB^i`` with ``s = P_K sigma_B``, which vanishes
    when the empirical covariance is nonsingular.
    """
    _require(ens, FilterVariant.SINGULAR_FPF)
    noise = rng.standard_normal((ens.n, model.noise_dim))
    return Ensemble(_singular_fpf_update(model, ens.particles, dz, dt, noise),
                    ens.variant)


def step_perturbed_enkf(model, ens, dz, dt, rng):
    """Euler-Maruyama step of the perturbed-observation ensemble Kalman-Bucy filter.

    ``dX^i = A X^i dt + sigma_B dB^i + K (dz - H X^i dt - R^{1/2} dW^i)``.
    Draws an ``(N, q)`` block for ``dB`` followed by an ``(N, m)`` block for
    ``dW`` from ``rng``.
    """
    _require(ens, FilterVariant.PERTURBED_ENKF)
    noise_b = rng.standard_normal((ens.n, model.noise_dim))
    noise_w = rng.standard_normal((ens.n, model.obs_dim))
    return Ensemble(_enkf_update(model, ens.particles, dz, dt, noise_b, noise_w),
                    ens.variant)


def step_mean_field(model, mfe, belief, dz, dt, g=None):
    """Euler step of the mean-field optimal-transport flow.

    Same law as :func:`step_det_fpf` but the coefficients use the exact
    Kalman belief (``belief``) at the start of the step. ``g`` may pass a
    precomputed ``sqrt_ricc(model, belief.cov)``.
    """
    if g is None:
        g = sqrt_ricc(model, belief.cov)
    out = _mean_field_update(model, mfe.particles, belief.mean, belief.cov, g, dz, dt)
    return MeanFieldEnsemble(out)


def step(model, ens, dz, dt, rng=None):
    """Dispatch to the step function matching ``ens.variant``."""
    if ens.variant is FilterVariant.DETERMINISTIC_FPF:
        return step_det_fpf(model, ens, dz, dt)
    if rng is None:
        raise ConfigError(f"{ens.variant.value} needs a random generator", key="rng")
    return _STEPPERS[ens.variant](model, ens, dz, dt, rng)


_STEPPERS = {
    FilterVariant.STOCHASTIC_FPF: step_stochastic_fpf,
    FilterVariant.SINGULAR_FPF: step_singular_fpf,
    FilterVariant.PERTURBED_ENKF: step_perturbed_enkf,
}


def init_ensemble(model, n, variant, rng, exact_moments=False):
    """Draw ``n`` particles i.i.d. from the prior.

    With ``exact_moments=True`` the sample is mapped affinely (by the
    optimal Gaussian map between the sample moments and the prior) so that
    its empirical mean and covariance equal ``m0`` and ``Sigma0`` exactly.
    That requires ``n > d`` and a nonsingular prior.
    """
    x = model.sample_prior(rng, int(n))
    if exact_moments:
        mean, cov = _moments(x)
        f, b = optimal_gaussian_map(mean, cov, model.m0, model.sigma0)
        x = x @ f + b
    return Ensemble(x, variant)


def run_ensemble(model, ens, dz, dt, rng=None):
    """Advance ``ens`` through all increments ``dz``.

    Equivalent to repeated :func:`step` calls with the same ``rng``, but
    the empirical moments are computed once per step.

    Returns
    -------
    ens : Ensemble
        Final ensemble.
    means : ndarray, shape (steps + 1, d)
    covs : ndarray, shape (steps + 1, d, d)
        Empirical moments along the run, starting with the initial ensemble.
    """
    dz = np.atleast_2d(np.asarray(dz, dtype=float))
    variant = ens.variant
    if variant.is_stochastic and rng is None:
        raise ConfigError(f"{variant.value} needs a random generator", key="rng")
    steps = dz.shape[0]
    n, d = ens.n, ens.dim
    means = np.empty((steps + 1, d))
    covs = np.empty((steps + 1, d, d))
    x = ens.particles
    for k in range(steps):
        moments = _moments(x)
        means[k], covs[k] = moments
        if variant is FilterVariant.DETERMINISTIC_FPF:
            x = _det_fpf_update(model, x, dz[k], dt, moments)
        elif variant is FilterVariant.STOCHASTIC_FPF:
            noise = rng.standard_normal((n, model.noise_dim))
            x = _stochastic_fpf_update(model, x, dz[k], dt, noise, moments)
        elif variant is FilterVariant.SINGULAR_FPF:
            noise = rng.standard_normal((n, model.noise_dim))
            x = _singular_fpf_update(model, x, dz[k], dt, noise, moments)
        else:
            noise_b = rng.standard_normal((n, model.noise_dim))
            noise_w = rng.standard_normal((n, model.obs_dim))
            x = _enkf_update(model, x, dz[k], dt, noise_b, noise_w, moments)
    means[steps], covs[steps] = _moments(x)
    return Ensemble(x, variant), means, covs
