"""Symmetric matrix equations behind the optimal-transport particle filter.

All solvers work in the eigenbasis of a symmetric covariance, which keeps
the outputs exactly symmetric (or skew-symmetric) and makes singular
covariances easy to handle blockwise. Matrices are plain ``ndarray``
objects; functions marked as such accept stacks with leading batch axes.
"""

from typing import NamedTuple

import numpy as np

from ._validation import RANK_TOL, sym
from .exceptions import (ConfigError, InconsistentSingularSystem,
                         SingularCovariance)

__all__ = [
    "SpectralDecomp", "spectral_decomp", "ricc_rhs", "solve_lyapunov_spd",
    "sqrt_ricc", "solve_omega", "pseudo_inverse", "optimal_gaussian_map",
    "solve_singular_gain", "RANK_TOL",
]


def _t(m):
    return m.swapaxes(-1, -2)


class SpectralDecomp(NamedTuple):
    """Eigendecomposition ``M = V diag(eigenvalues) V^T`` with descending eigenvalues."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    rank: int

    @property
    def range_basis(self):
        return self.eigenvectors[:, :self.rank]

    @property
    def kernel_basis(self):
        return self.eigenvectors[:, self.rank:]


def spectral_decomp(m, rank_tol=RANK_TOL):
    """Eigendecomposition of a symmetric matrix with a relative rank decision.

    The rank counts eigenvalues strictly greater than ``rank_tol * lambda_max``
    (and greater than zero).
    """
    lam, v = np.linalg.eigh(sym(m))
    lam, v = lam[::-1], v[:, ::-1]
    lam_max = lam[0] if lam.size else 0.0
    rank = int(np.count_nonzero(lam > max(rank_tol * lam_max, 0.0)))
    return SpectralDecomp(lam, v, rank)


def _check_dims(model, sigma):
    d = model.dim
    if sigma.shape[-2:] != (d, d):
        raise ConfigError(f"covariance has shape {sigma.shape[-2:]}, "
                          f"model state dimension is {d}", key="sigma")


def ricc_rhs(model, sigma):
    """Riccati right-hand side ``A S + S A^T + Sigma_B - S H^T R^{-1} H S``.

    Accepts a single ``(d, d)`` matrix or a stack ``(..., d, d)``; the
    result is exactly symmetric.
    """
    sigma = np.asarray(sigma, dtype=float)
    _check_dims(model, sigma)
    return _ricc(model, sigma)


def _ricc(model, sigma):
    a_sigma = model.a @ sigma
    out = a_sigma + _t(a_sigma) + model.sigma_b_cov - sigma @ model.hrh @ sigma
    return 0.5 * (out + _t(out))


def _eigh_spd(q):
    lam, v = np.linalg.eigh(sym(q))
    ok = lam[..., 0] > RANK_TOL * lam[..., -1]
    if not np.all(ok & (lam[..., -1] > 0)):
        raise SingularCovariance(
            "covariance is singular or indefinite (min eigenvalue "
            f"{np.min(lam[..., 0]):.3g}); use solve_singular_gain / the "
            "SingularOptimalFPF variant for rank-deficient covariances")
    return lam, v


def _lyap_in_basis(lam, v, rhs):
    rt = _t(v) @ rhs @ v
    g = rt / (lam[..., :, None] + lam[..., None, :])
    return sym(v @ g @ _t(v))


def solve_lyapunov_spd(sigma, rhs):
    """Symmetric solution ``G`` of ``G S + S G = rhs`` for SPD ``S``.

    In the eigenbasis of ``S`` the solution is ``rhs_ij / (lam_i + lam_j)``.
    Stacks of matrices are supported.

    Raises
    ------
    SingularCovariance
        If ``S`` is not positive definite to the relative rank tolerance.
    """
    lam, v = _eigh_spd(sigma)
    return _lyap_in_basis(lam, v, sym(rhs))


def sqrt_ricc(model, q):
    """The symmetric solution of ``G Q + Q G = Ricc(Q)`` for SPD ``Q``.

    This is the drift gain of the optimal-transport particle flow: the
    first-order term of the optimal map between ``N(., Q)`` and the
    covariance one Riccati step later.
    """
    q = np.asarray(q, dtype=float)
    lam, v = _eigh_spd(q)
    return _lyap_in_basis(lam, v, ricc_rhs(model, q))


def solve_omega(model, q):
    """Skew-symmetric correction ``Omega`` with
    ``sqrt_ricc(Q) = A - Q M / 2 + Sigma_B Q^{-1} / 2 + Omega Q^{-1}``,
    where ``M = H^T R^{-1} H``.

    ``Omega`` solves ``Omega Q^{-1} + Q^{-1} Omega = (A^T - A)
    + (Q M - M Q) / 2 - (Sigma_B Q^{-1} - Q^{-1} Sigma_B) / 2``; in the
    eigenbasis of ``Q`` this is ``rhs_ij lam_i lam_j / (lam_i + lam_j)``.
    """
    q = np.asarray(q, dtype=float)
    _check_dims(model, q)
    lam, v = _eigh_spd(q)
    q = sym(q)
    q_inv = (v / lam[..., None, :]) @ _t(v)
    m, s, a = model.hrh, model.sigma_b_cov, model.a
    rhs = (_t(a) - a) + 0.5 * (q @ m - m @ q) - 0.5 * (s @ q_inv - q_inv @ s)
    rt = _t(v) @ rhs @ v
    lam_i, lam_j = lam[..., :, None], lam[..., None, :]
    omega = v @ (rt * (lam_i * lam_j / (lam_i + lam_j))) @ _t(v)
    return 0.5 * (omega - _t(omega))


def pseudo_inverse(m, rank_tol=RANK_TOL):
    """Moore-Penrose pseudo-inverse of a symmetric PSD matrix.

    Returns
    -------
    m_pinv, p_range, p_kernel : ndarray
        Pseudo-inverse and the orthogonal projectors onto range and kernel;
        ``p_range + p_kernel = I``.
    """
    dec = spectral_decomp(m, rank_tol)
    vr, vk = dec.range_basis, dec.kernel_basis
    m_pinv = sym((vr / dec.eigenvalues[:dec.rank]) @ vr.T)
    p_range = sym(vr @ vr.T)
    p_kernel = sym(vk @ vk.T)
    return m_pinv, p_range, p_kernel


def _spd_power(m, power):
    lam, v = _eigh_spd(m)
    return sym((v * lam ** power) @ v.T)


def optimal_gaussian_map(mx, sx, my, sy):
    """Optimal transport map ``T(x) = F x + b`` from ``N(mx, sx)`` to ``N(my, sy)``.

    ``F = sy^{1/2} (sy^{1/2} sx sy^{1/2})^{-1/2} sy^{1/2}`` is symmetric
    positive definite and satisfies ``F sx F = sy``.

    Raises
    ------
    SingularCovariance
        If either covariance is singular (no deterministic map exists).
    """
    mx = np.atleast_1d(np.asarray(mx, dtype=float))
    my = np.atleast_1d(np.asarray(my, dtype=float))
    sx = np.atleast_2d(np.asarray(sx, dtype=float))
    sy = np.atleast_2d(np.asarray(sy, dtype=float))
    _eigh_spd(sx)
    sy_half = _spd_power(sy, 0.5)
    inner = _spd_power(sy_half @ sx @ sy_half, -0.5)
    f = sym(sy_half @ inner @ sy_half)
    return f, my - f @ mx


def solve_singular_gain(model, sigma, rank_tol=RANK_TOL):
    """Optimal gain pair for a possibly singular covariance.

    Returns ``(G, s)`` where ``s = P_K sigma_B`` (``P_K`` projects onto
    the kernel of ``sigma``) and ``G`` is the symmetric solution of
    ``G S + S G = Ricc(S) - s s^T``. The range-range and range-kernel
    blocks are solved in the eigenbasis of ``S``; the free kernel-kernel
    block of ``G`` is set to zero.

    Raises
    ------
    InconsistentSingularSystem
        If the kernel-kernel block of the right-hand side exceeds
        ``1e-8 * ||rhs||_F`` (a rank-estimation failure).
    """
    sigma = sym(np.asarray(sigma, dtype=float))
    _check_dims(model, sigma)
    dec = spectral_decomp(sigma, rank_tol)
    v, r = dec.eigenvectors, dec.rank
    vk = dec.kernel_basis
    s = vk @ (vk.T @ model.sigma_b)
    rhs = ricc_rhs(model, sigma) - s @ s.T
    rt = sym(v.T @ rhs @ v)

    kk = rt[r:, r:]
    if kk.size and np.linalg.norm(kk) > 1e-8 * np.linalg.norm(rhs):
        raise InconsistentSingularSystem(
            f"kernel block of the gain equation is {np.linalg.norm(kk):.3g} "
            f"(rhs norm {np.linalg.norm(rhs):.3g}); rank {r} is likely wrong")

    d = sigma.shape[0]
    lam = np.where(np.arange(d) < r, dec.eigenvalues, 0.0)
    denom = lam[:, None] + lam[None, :]
    g = np.zeros((d, d))
    solvable = denom > 0
    g[solvable] = rt[solvable] / denom[solvable]
    return sym(v @ g @ v.T), s
