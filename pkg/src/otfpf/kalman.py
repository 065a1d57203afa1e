"""Kalman-Bucy reference filter, steady-state Riccati solution and stability margin."""

from dataclasses import dataclass

import numpy as np

from ._validation import sym
from .exceptions import AREDivergence, NumericalBlowup
from .matrix_eq import _ricc, ricc_rhs

__all__ = ["GaussianBelief", "SteadyState", "kalman_step", "kalman_filter",
           "riccati_rk4_step", "solve_are"]


@dataclass(frozen=True, eq=False)
class GaussianBelief:
    """Mean vector and PSD covariance of a Gaussian."""

    mean: np.ndarray
    cov: np.ndarray

    @property
    def dim(self):
        return self.mean.shape[-1]

    @classmethod
    def prior(cls, model):
        return cls(model.m0.copy(), model.sigma0.copy())


@dataclass(frozen=True, eq=False)
class SteadyState:
    """Algebraic Riccati solution and the spectral margin of the closed loop."""

    sigma_inf: np.ndarray
    lambda0: float
    steps: int = 0


def riccati_rk4_step(model, sigma, dt):
    """One classical RK4 step of ``dS/dt = Ricc(S)``, symmetrized."""
    k1 = ricc_rhs(model, sigma)
    k2 = _ricc(model, sigma + 0.5 * dt * k1)
    k3 = _ricc(model, sigma + 0.5 * dt * k2)
    k4 = _ricc(model, sigma + dt * k3)
    return sym(sigma + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))


def _check_psd(cov, dt):
    if not np.all(np.isfinite(cov)):
        raise NumericalBlowup(f"covariance became non-finite; reduce dt (now {dt})")
    lam = np.linalg.eigvalsh(cov)
    if lam[0] < -1e-8 * max(lam[-1], 0.0) or (lam[-1] < 0):
        raise NumericalBlowup(
            f"covariance lost positive semidefiniteness (min eigenvalue "
            f"{lam[0]:.3g}); reduce dt (now {dt})")


def kalman_step(model, belief, dz, dt):
    """Advance the Kalman-Bucy filter over one step of length ``dt``.

    The mean takes an Euler step of ``dm = A m dt + K (dz - H m dt)`` with
    ``K = S H^T R^{-1}`` frozen at the start of the step; the covariance
    takes one RK4 step of the Riccati equation. ``belief.mean`` and ``dz``
    may carry leading batch axes (independent observation paths sharing
    one covariance).

    Raises
    ------
    NumericalBlowup
        If the new covariance is not PSD to ``1e-8`` relative tolerance.
    """
    m, cov = belief.mean, belief.cov
    gain = cov @ model.ht_rinv
    innov = np.asarray(dz, dtype=float) - dt * m @ model.h.T
    mean = m + dt * m @ model.a.T + innov @ gain.T
    cov = riccati_rk4_step(model, cov, dt)
    _check_psd(cov, dt)
    return GaussianBelief(mean, cov)


def kalman_filter(model, dz, dt, belief=None):
    """Run :func:`kalman_step` along increments ``dz`` (shape ``(steps, m)``).

    Returns
    -------
    means : ndarray, shape (steps + 1, d)
    covs : ndarray, shape (steps + 1, d, d)
    """
    belief = GaussianBelief.prior(model) if belief is None else belief
    dz = np.atleast_2d(np.asarray(dz, dtype=float))
    steps = dz.shape[0]
    means = np.empty((steps + 1, model.dim))
    covs = np.empty((steps + 1, model.dim, model.dim))
    means[0], covs[0] = belief.mean, belief.cov
    for k in range(steps):
        belief = kalman_step(model, belief, dz[k], dt)
        means[k + 1], covs[k + 1] = belief.mean, belief.cov
    return means, covs


def solve_are(model, max_steps=10**7, tol=1e-10):
    """Steady state of the Riccati equation by RK4 integration from ``S = I``.

    Integration stops once ``||Ricc(S)||_F <= tol * (1 + ||S||_F)``. The
    step size is re-chosen every step from the spectral norm of the
    linearized flow, keeping RK4 inside its stability region.

    Returns
    -------
    SteadyState
        ``sigma_inf`` and ``lambda0 = min(-Re spec(A - S_inf H^T R^{-1} H))``.

    Raises
    ------
    AREDivergence
        If the step cap is hit, the iterate blows up, or the closed loop is
        not Hurwitz; usually the model is not detectable/stabilizable.
    """
    sigma = np.eye(model.dim)
    for step in range(max_steps):
        resid = ricc_rhs(model, sigma)
        if np.linalg.norm(resid) <= tol * (1.0 + np.linalg.norm(sigma)):
            break
        rho = 2.0 * np.linalg.norm(model.a - sigma @ model.hrh, 2)
        dt = 1.0 / rho if rho > 0 else 1.0
        sigma = riccati_rk4_step(model, sigma, dt)
        if not np.all(np.isfinite(sigma)) or np.linalg.norm(sigma) > 1e15:
            raise AREDivergence(
                "Riccati iterate diverged; (A, H) detectability or "
                "(A, sigma_B) stabilizability likely fails")
    else:
        raise AREDivergence(f"no steady state after {max_steps} RK4 steps")

    closed_loop = model.a - sigma @ model.hrh
    lambda0 = float(np.min(-np.linalg.eigvals(closed_loop).real))
    if lambda0 <= 0:
        raise AREDivergence(
            f"closed loop A - S H^T R^-1 H is not Hurwitz (margin {lambda0:.3g})")
    return SteadyState(sigma_inf=sigma, lambda0=lambda0, steps=step)
