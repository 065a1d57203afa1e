"""Linear-Gaussian hidden Markov model and truth/observation simulation.

The signal and observation obey::

    dX_t = A X_t dt + sigma_B dB_t
    dZ_t = H X_t dt + R^{1/2} dW_t

with ``X_0 ~ N(m0, Sigma0)``. Paths are simulated on a uniform grid with
Euler-Maruyama and stored as observation *increments* ``dz``.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from . import _rng
from ._validation import (as_matrix, as_vector, check_psd, check_spd,
                          psd_sqrt)
from .exceptions import ConfigError

__all__ = ["LinearGaussianModel", "TimeGrid", "PathRecord",
           "simulate_truth_obs", "write_path_csv"]


def _frozen(arr):
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class LinearGaussianModel:
    """Matrices and Gaussian prior of the filtering problem.

    Parameters
    ----------
    a : array_like, shape (d, d)
        Drift matrix.
    h : array_like, shape (m, d)
        Observation matrix.
    sigma_b : array_like, shape (d, q)
        Process-noise factor; ``Sigma_B = sigma_b @ sigma_b.T``.
    r : array_like, shape (m, m), optional
        Observation-noise covariance, identity by default. Must be SPD.
    m0 : array_like, shape (d,), optional
        Prior mean, zero by default.
    sigma0 : array_like, shape (d, d), optional
        Prior covariance (PSD), identity by default.
    """

    a: np.ndarray
    h: np.ndarray
    sigma_b: np.ndarray
    r: np.ndarray = None
    m0: np.ndarray = None
    sigma0: np.ndarray = None

    sigma_b_cov: np.ndarray = field(init=False, repr=False)
    r_inv: np.ndarray = field(init=False, repr=False)
    r_sqrt: np.ndarray = field(init=False, repr=False)
    ht_rinv: np.ndarray = field(init=False, repr=False)
    hrh: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        a = as_matrix(self.a, "model.a")
        d = a.shape[0]
        if a.shape != (d, d):
            raise ConfigError(f"drift must be square, got {a.shape}", key="model.a")
        h = as_matrix(self.h, "model.h", shape=(None, d))
        m = h.shape[0]
        sigma_b = as_matrix(self.sigma_b, "model.sigma_b", shape=(d, None))
        r = np.eye(m) if self.r is None else check_spd(self.r, "model.r")
        if r.shape != (m, m):
            raise ConfigError(f"expected shape {(m, m)}, got {r.shape}", key="model.r")
        m0 = np.zeros(d) if self.m0 is None else as_vector(self.m0, "model.m0", d)
        sigma0 = np.eye(d) if self.sigma0 is None else check_psd(self.sigma0, "model.sigma0")
        if sigma0.shape != (d, d):
            raise ConfigError(f"expected shape {(d, d)}, got {sigma0.shape}",
                              key="model.sigma0")

        r_inv = np.linalg.inv(r)
        r_inv = 0.5 * (r_inv + r_inv.T)
        ht_rinv = h.T @ r_inv
        hrh = ht_rinv @ h
        values = dict(a=a, h=h, sigma_b=sigma_b, r=r, m0=m0, sigma0=sigma0,
                      sigma_b_cov=0.5 * (sigma_b @ sigma_b.T + (sigma_b @ sigma_b.T).T),
                      r_inv=r_inv, r_sqrt=psd_sqrt(r), ht_rinv=ht_rinv,
                      hrh=0.5 * (hrh + hrh.T))
        for name, value in values.items():
            object.__setattr__(self, name, _frozen(value))

    @property
    def dim(self):
        """State dimension ``d``."""
        return self.a.shape[0]

    @property
    def obs_dim(self):
        return self.h.shape[0]

    @property
    def noise_dim(self):
        return self.sigma_b.shape[1]

    @property
    def has_process_noise(self):
        return bool(np.any(self.sigma_b))

    @classmethod
    def static(cls, d, sigma0=1.0, sigma_w=1.0):
        """Static fully observed model: ``A = 0``, ``sigma_B = 0``, ``H = I``,
        ``R = sigma_w**2 I``, ``X_0 ~ N(0, sigma0**2 I)``."""
        d = int(d)
        if d < 1:
            raise ConfigError("dimension must be >= 1", key="d")
        if sigma0 <= 0 or sigma_w <= 0:
            raise ConfigError("standard deviations must be positive", key="static.sigma")
        return cls(a=np.zeros((d, d)), h=np.eye(d), sigma_b=np.zeros((d, d)),
                   r=sigma_w ** 2 * np.eye(d), m0=np.zeros(d),
                   sigma0=sigma0 ** 2 * np.eye(d))

    def sample_prior(self, rng, n):
        """Draw ``n`` i.i.d. samples of ``N(m0, Sigma0)`` as an ``(n, d)`` array."""
        z = rng.standard_normal((n, self.dim))
        return self.m0 + z @ psd_sqrt(self.sigma0)

    def to_dict(self):
        return {"a": self.a.tolist(), "h": self.h.tolist(),
                "sigma_b": self.sigma_b.tolist(), "r": self.r.tolist(),
                "m0": self.m0.tolist(), "sigma0": self.sigma0.tolist()}

    def __eq__(self, other):
        if not isinstance(other, LinearGaussianModel):
            return NotImplemented
        return all(np.array_equal(getattr(self, k), getattr(other, k))
                   for k in ("a", "h", "sigma_b", "r", "m0", "sigma0"))

    __hash__ = None


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_k = k * dt`` for ``k = 0..steps``."""

    dt: float
    steps: int

    def __post_init__(self):
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ConfigError("time step must be positive", key="grid.dt")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ConfigError("number of steps must be a positive integer",
                              key="grid.horizon")
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "steps", int(self.steps))

    @classmethod
    def from_horizon(cls, dt, horizon):
        if not (np.isfinite(dt) and dt > 0):
            raise ConfigError("time step must be positive", key="grid.dt")
        if not (np.isfinite(horizon) and horizon > 0):
            raise ConfigError("horizon must be positive", key="grid.horizon")
        steps = int(round(horizon / dt))
        if steps < 1 or abs(steps * dt - horizon) > 1e-9 * max(horizon, 1.0):
            raise ConfigError(f"horizon {horizon} is not a multiple of dt {dt}",
                              key="grid.horizon")
        return cls(dt, steps)

    @property
    def horizon(self):
        return self.dt * self.steps

    @property
    def times(self):
        return self.dt * np.arange(self.steps + 1)


@dataclass(frozen=True, eq=False)
class PathRecord:
    """Simulated truth ``x`` (``steps + 1`` rows) and increments ``dz`` (``steps`` rows)."""

    x: np.ndarray
    dz: np.ndarray
    seed: int
    grid: TimeGrid

    @property
    def z_final(self):
        """Cumulative observation ``Z_T`` (with ``Z_0 = 0``)."""
        return self.dz.sum(axis=0)


def simulate_truth_obs(model, grid, seed, *key):
    """Euler-Maruyama simulation of the hidden state and observation increments.

    ``x_{k+1} = x_k + A x_k dt + sqrt(dt) sigma_B beta_k`` and
    ``dz_k = H x_k dt + sqrt(dt) R^{1/2} zeta_k``. The initial state, ``beta``
    and ``zeta`` come from independent keyed streams of ``(seed, *key)``,
    so the result is bit-reproducible.

    Parameters
    ----------
    model : LinearGaussianModel
    grid : TimeGrid
    seed : int
    *key : int
        Extra stream key (e.g. a trial index).

    Returns
    -------
    PathRecord
    """
    d, m, q = model.dim, model.obs_dim, model.noise_dim
    dt, steps = grid.dt, grid.steps
    x0 = model.sample_prior(_rng.stream(seed, *key, _rng.INITIAL_STATE), 1)[0]
    beta = _rng.stream(seed, *key, _rng.PROCESS_NOISE).standard_normal((steps, q))
    zeta = _rng.stream(seed, *key, _rng.OBSERVATION_NOISE).standard_normal((steps, m))

    proc = np.sqrt(dt) * beta @ model.sigma_b.T
    if np.any(model.a):
        x = np.empty((steps + 1, d))
        x[0] = x0
        step_map = np.eye(d) + dt * model.a
        for k in range(steps):
            x[k + 1] = step_map @ x[k] + proc[k]
    else:
        # no drift: the recursion is a running sum
        x = np.vstack([x0, x0 + np.cumsum(proc, axis=0)])
    dz = dt * x[:-1] @ model.h.T + np.sqrt(dt) * zeta @ model.r_sqrt.T
    for arr in (x, dz):
        arr.setflags(write=False)
    return PathRecord(x=x, dz=dz, seed=int(seed), grid=grid)


def _fmt(v):
    return format(float(v), ".17g")


def write_path_csv(path, record):
    """Write ``t, x_1..x_d, dz_1..dz_m``; the final row has empty ``dz`` fields."""
    d = record.x.shape[1]
    m = record.dz.shape[1]
    t = record.grid.times
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"x_{i + 1}" for i in range(d)]
                   + [f"dz_{j + 1}" for j in range(m)])
        for k in range(record.grid.steps + 1):
            dz = ([_fmt(v) for v in record.dz[k]] if k < record.grid.steps
                  else [""] * m)
            w.writerow([_fmt(t[k])] + [_fmt(v) for v in record.x[k]] + dz)
