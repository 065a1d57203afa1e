"""Independent reference computations used by the tests.

Nothing here calls the package's solvers; each oracle uses a different
algorithm (Kronecker products, quadrature, closed forms, scipy).
"""

import numpy as np
from scipy import integrate, linalg


def random_spd(rng, d, cond=1e3):
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    lam = np.exp(rng.uniform(0.0, np.log(cond), d))
    return (q * lam) @ q.T


def naive_matmul(a, b):
    n, k = a.shape
    k2, m = b.shape
    assert k == k2
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            s = 0.0
            for t in range(k):
                s += a[i, t] * b[t, j]
            out[i, j] = s
    return out


def ricc(a, h, sigma_b, r, s):
    """Riccati right-hand side from raw matrices with naive products."""
    m = naive_matmul(naive_matmul(h.T, np.linalg.inv(r)), h)
    sb = naive_matmul(sigma_b, sigma_b.T)
    a_s = naive_matmul(a, s)
    return a_s + a_s.T + sb - naive_matmul(naive_matmul(s, m), s)


def lyapunov_kron(q, rhs):
    """Solve ``G Q + Q G = rhs`` through the d^2 x d^2 Kronecker system."""
    d = q.shape[0]
    eye = np.eye(d)
    op = np.kron(eye, q) + np.kron(q.T, eye)
    g = np.linalg.solve(op, rhs.reshape(-1, order="F"))
    return g.reshape((d, d), order="F")


def lyapunov_integral(q, rhs):
    """``G = int_0^inf exp(-s Q) rhs exp(-s Q) ds`` with ``s = u / (1 - u)``."""
    def f(u):
        s = u / (1.0 - u)
        e = linalg.expm(-s * q)
        return e @ rhs @ e / (1.0 - u) ** 2
    val, _ = integrate.quad_vec(f, 0.0, 1.0, epsabs=1e-13, epsrel=1e-12)
    return val


def scalar_riccati(a, b2, m, s0, t):
    """Closed form of ``s' = 2 a s + b2 - m s^2`` (``m > 0``)."""
    disc = np.sqrt(a * a + m * b2)
    s_plus = (a + disc) / m
    s_minus = (a - disc) / m
    # s(t) = s_plus + (s_plus - s_minus) / (c e^{2 disc t} - 1)
    c = (s0 - s_minus) / (s0 - s_plus) if s0 != s_plus else np.inf
    if np.isinf(c):
        return np.full_like(np.asarray(t, dtype=float), s_plus)
    return s_plus + (s_plus - s_minus) / (c * np.exp(2.0 * disc * np.asarray(t)) - 1.0)


def gaussian_map(sx, sy):
    """Optimal linear map between centered Gaussians via ``scipy.linalg.sqrtm``."""
    sy_h = np.real(linalg.sqrtm(sy))
    inner = np.real(linalg.sqrtm(sy_h @ sx @ sy_h))
    return sy_h @ np.linalg.inv(inner) @ sy_h


def clipped_mean_quad(mu, std, c):
    def f(y):
        return np.clip(y, -c, c) * np.exp(-0.5 * ((y - mu) / std) ** 2) / (std * np.sqrt(2 * np.pi))
    val, _ = integrate.quad(f, mu - 40 * std, mu + 40 * std, points=[-c, c], limit=200)
    return val


def modified_pf_mse_n1_d1(sigma):
    """Single-sample MSE of the modified PF for d = 1 by 2-D quadrature.

    ``E[(w f - m)^2]`` with ``w = p(z|x) / p(z)``, ``f = x``,
    ``m = z / 2`` for ``sigma0 = sigma_w = sigma``; the particle ``x`` is
    drawn from the prior independently of ``z``, which follows its
    marginal. The integrand is evaluated as a square of
    ``sqrt(p(x) p(z)) (w x - m)`` in log space.
    """
    s2 = sigma ** 2

    def integrand(x, z):
        lp_x = -x * x / (2 * s2) - 0.5 * np.log(2 * np.pi * s2)
        lp_zx = -(z - x) ** 2 / (2 * s2) - 0.5 * np.log(2 * np.pi * s2)
        lp_z = -z * z / (4 * s2) - 0.5 * np.log(4 * np.pi * s2)
        half = 0.5 * (lp_x + lp_z)
        return (np.exp(half + lp_zx - lp_z) * x - np.exp(half) * z / 2) ** 2

    lim = 30 * sigma
    val, _ = integrate.dblquad(integrand, -lim, lim, -lim, lim, epsabs=1e-11, epsrel=1e-10)
    return val
