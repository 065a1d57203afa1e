"""Input validation helpers shared by the solvers, filters and estimators."""

import numpy as np

from .exceptions import ConfigError

#: relative eigenvalue threshold used for every rank decision
RANK_TOL = 1e-10


def as_matrix(m, name="matrix", shape=None):
    """Return ``m`` as a finite 2-D float array, checking ``shape`` if given."""
    arr = np.asarray(m, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2:
        raise ConfigError(f"expected a 2-D array, got ndim={arr.ndim}", key=name)
    if shape is not None:
        for got, want in zip(arr.shape, shape):
            if want is not None and got != want:
                raise ConfigError(
                    f"expected shape {shape}, got {arr.shape}", key=name)
    if not np.all(np.isfinite(arr)):
        raise ConfigError("entries must be finite", key=name)
    return arr


def as_vector(v, name="vector", size=None):
    arr = np.atleast_1d(np.asarray(v, dtype=float))
    if arr.ndim != 1:
        raise ConfigError(f"expected a 1-D array, got ndim={arr.ndim}", key=name)
    if size is not None and arr.shape[0] != size:
        raise ConfigError(f"expected length {size}, got {arr.shape[0]}", key=name)
    if not np.all(np.isfinite(arr)):
        raise ConfigError("entries must be finite", key=name)
    return arr


def sym(m):
    """Symmetric part ``(M + M^T) / 2``; works on stacks of matrices."""
    m = np.asarray(m, dtype=float)
    return 0.5 * (m + m.swapaxes(-1, -2))


def as_symmetric(m, name="matrix", tol=1e-12):
    """Validate near-symmetry (relative Frobenius ``tol``) and symmetrize."""
    arr = as_matrix(m, name)
    if arr.shape[0] != arr.shape[1]:
        raise ConfigError(f"expected a square matrix, got {arr.shape}", key=name)
    scale = 1.0 + np.linalg.norm(arr)
    if np.linalg.norm(arr - arr.T) > tol * scale:
        raise ConfigError("matrix is not symmetric", key=name)
    return sym(arr)


def check_psd(m, name="matrix", tol=1e-10):
    """Symmetrize and check that the smallest eigenvalue is not below ``-tol * scale``."""
    s = as_symmetric(m, name, tol=1e-8)
    lam = np.linalg.eigvalsh(s)
    scale = max(abs(lam).max(initial=0.0), 1.0)
    if lam[0] < -tol * scale:
        raise ConfigError(
            f"matrix is not positive semidefinite (min eigenvalue {lam[0]:.3g})",
            key=name)
    return s


def check_spd(m, name="matrix"):
    s = as_symmetric(m, name, tol=1e-8)
    lam = np.linalg.eigvalsh(s)
    if lam[0] <= RANK_TOL * max(lam[-1], 0.0) or lam[-1] <= 0:
        raise ConfigError(
            f"matrix is not positive definite (min eigenvalue {lam[0]:.3g})",
            key=name)
    return s


def psd_sqrt(m):
    """Symmetric square root of a PSD matrix (negative eigenvalues clipped)."""
    lam, v = np.linalg.eigh(sym(m))
    return (v * np.sqrt(np.clip(lam, 0.0, None))) @ v.T
