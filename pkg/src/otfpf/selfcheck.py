"""Residual checks of the matrix equations and filter identities.

Run by ``otfpf validate``; every check reports its worst relative residual
against a fixed tolerance.
"""

from typing import NamedTuple

import numpy as np

from . import _rng
from .kalman import GaussianBelief, kalman_step, solve_are
from .matrix_eq import (pseudo_inverse, ricc_rhs, solve_omega,
                        solve_singular_gain, sqrt_ricc)
from .model import LinearGaussianModel
from .particle_filters import _det_fpf_update, _moments

__all__ = ["CheckResult", "random_model", "random_spd", "run_self_checks"]


class CheckResult(NamedTuple):
    name: str
    residual: float
    tol: float

    @property
    def passed(self):
        return bool(np.isfinite(self.residual) and self.residual <= self.tol)


def random_spd(rng, d, cond=1e3):
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    lam = np.exp(rng.uniform(0.0, np.log(cond), d))
    return (q * lam) @ q.T


def random_model(rng, d, m=None, q=None):
    m = d if m is None else m
    q = d if q is None else q
    return LinearGaussianModel(a=rng.standard_normal((d, d)),
                               h=rng.standard_normal((m, d)),
                               sigma_b=rng.standard_normal((d, q)) / np.sqrt(q),
                               r=random_spd(rng, m, 10.0))


def _rel(x, scale):
    return float(np.linalg.norm(x) / max(np.linalg.norm(scale), 1e-300))


def run_self_checks(seed=0, per_dim=20, dims=(1, 2, 3, 5, 10)):
    rng = _rng.stream(seed, 99)
    worst = {k: 0.0 for k in ("sqrt_ricc", "omega_skew", "omega_reconstruct",
                              "pinv", "singular_gain", "are", "moment_identity")}
    for d in dims:
        for _ in range(per_dim):
            model = random_model(rng, d)
            q = random_spd(rng, d)
            g = sqrt_ricc(model, q)
            rhs = ricc_rhs(model, q)
            worst["sqrt_ricc"] = max(worst["sqrt_ricc"], _rel(g @ q + q @ g - rhs, rhs))

            omega = solve_omega(model, q)
            worst["omega_skew"] = max(worst["omega_skew"], float(np.abs(omega + omega.T).max()))
            q_inv = np.linalg.inv(q)
            recon = (model.a - 0.5 * q @ model.hrh + 0.5 * model.sigma_b_cov @ q_inv
                     + omega @ q_inv)
            worst["omega_reconstruct"] = max(worst["omega_reconstruct"], _rel(recon - g, g))

            r = int(rng.integers(1, d + 1))
            f = rng.standard_normal((d, r))
            s = f @ f.T
            p, _, _ = pseudo_inverse(s)
            err = max(_rel(s @ p @ s - s, s), _rel(p @ s @ p - p, p),
                      _rel(s @ p - (s @ p).T, s @ p))
            worst["pinv"] = max(worst["pinv"], err)

            if d > 1:
                r = int(rng.integers(1, d))
                f = rng.standard_normal((d, r))
                s = f @ f.T
                gg, sig = solve_singular_gain(model, s)
                rhs = ricc_rhs(model, s) - sig @ sig.T
                worst["singular_gain"] = max(worst["singular_gain"],
                                             _rel(gg @ s + s @ gg - rhs, rhs))

    stable = LinearGaussianModel(a=[[-1.0, 1.0], [0.0, -2.0]], h=[[1.0, 0.0]],
                                 sigma_b=np.eye(2), r=[[0.5]])
    ss = solve_are(stable)
    worst["are"] = _rel(ricc_rhs(stable, ss.sigma_inf), ss.sigma_inf)

    x = stable.sample_prior(rng, 16)
    mean, cov = _moments(x)
    dz = rng.standard_normal(1) * 0.1
    x1 = _det_fpf_update(stable, x, dz, 1e-2)
    kb = kalman_step(stable, GaussianBelief(mean, cov), dz, 1e-2)
    worst["moment_identity"] = float(np.abs(_moments(x1)[0] - kb.mean).max())

    tols = {"sqrt_ricc": 1e-10, "omega_skew": 0.0, "omega_reconstruct": 1e-9,
            "pinv": 1e-9, "singular_gain": 1e-9, "are": 1e-9,
            "moment_identity": 1e-12}
    return [CheckResult(k, worst[k], tols[k]) for k in worst]
