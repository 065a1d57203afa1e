"""Numerical experiments: error decay, propagation of chaos and the static
importance-sampling comparison.

All randomness is drawn from keyed streams of the master seed, so results
do not depend on the order in which trials are processed or on the number
of worker processes. Trials are grouped in fixed-size chunks, each chunk
is processed independently and results are reduced in trial order.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from . import _rng
from .exceptions import ConfigError, SingularCovariance
from .kalman import GaussianBelief, kalman_filter, kalman_step, solve_are
from .matrix_eq import optimal_gaussian_map, sqrt_ricc
from .model import LinearGaussianModel, simulate_truth_obs
from .particle_filters import (FilterVariant, _det_fpf_update,
                               _mean_field_update, _moments, init_ensemble,
                               run_ensemble)

__all__ = [
    "DecayResult", "ChaosRow", "ChaosResult", "MseRecord", "LevelPoint",
    "SweepResult", "ESTIMATORS", "run_error_decay", "fit_decay_rate",
    "run_chaos", "clipped_gaussian_mean", "mse_pf_exact", "static_direction",
    "static_fpf_moments", "run_static_compare", "run_sweep", "level_crossing",
]

CHUNK = 250
ESTIMATORS = ("PF", "ModifiedPF", "FPF")


def _model_required(cfg):
    if cfg.model is None:
        raise ConfigError("this experiment needs a model section", key="model")
    return cfg.model


def _map_chunks(fn, jobs, workers):
    if workers is None or workers <= 1 or len(jobs) <= 1:
        return [fn(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, *zip(*jobs)))


def _chunks(trials):
    return [(lo, min(lo + CHUNK, trials)) for lo in range(0, trials, CHUNK)]


# ---------------------------------------------------------------------------
# error decay


@dataclass(frozen=True, eq=False)
class DecayResult:
    """Distance between ensemble and Kalman-Bucy moments along one path."""

    times: np.ndarray
    err_mean: np.ndarray
    err_cov: np.ndarray
    rate_mean: float
    rate_cov: float
    lambda0: float
    means: np.ndarray
    covs: np.ndarray
    kalman_means: np.ndarray
    kalman_covs: np.ndarray
    truth: np.ndarray


def fit_decay_rate(times, err, start_fraction=0.5):
    """Exponential rate from a least-squares fit of ``log err`` on the final
    part of the run; ``nan`` if the error vanished identically."""
    times = np.asarray(times, dtype=float)
    err = np.asarray(err, dtype=float)
    sel = times >= times[0] + start_fraction * (times[-1] - times[0])
    sel &= err > 0
    if np.count_nonzero(sel) < 2:
        return float("nan")
    slope = np.polyfit(times[sel], np.log(err[sel]), 1)[0]
    return float(-slope)


def run_error_decay(cfg, seed=None, variant=None, steady_state=True):
    """Run one ensemble next to the Kalman-Bucy filter on a simulated path.

    Parameters
    ----------
    cfg : ExperimentConfig
        Uses ``model``, ``grid``, ``n_list[0]`` and ``exact_moments``.
    seed : int, optional
        Overrides ``cfg.master_seed``.
    variant : FilterVariant, optional
        Defaults to ``cfg.variants[0]``.
    steady_state : bool
        Solve the algebraic Riccati equation for ``lambda0`` and fit decay
        rates over the second half of the horizon. Models without a steady
        state need ``False``.

    Raises
    ------
    AREDivergence
        If ``steady_state`` and the model has no stabilizing solution.
    SingularCovariance
        For the deterministic flow with ``N <= d``.
    """
    model = _model_required(cfg)
    seed = cfg.master_seed if seed is None else int(seed)
    variant = FilterVariant(cfg.variants[0] if variant is None else variant)
    n = cfg.n_list[0]
    if variant is FilterVariant.DETERMINISTIC_FPF and n <= model.dim:
        raise SingularCovariance(f"{variant.value} needs N > d (N={n}, d={model.dim}); "
                                 "use SingularOptimalFPF for small ensembles")

    lambda0 = solve_are(model).lambda0 if steady_state else float("nan")
    path = simulate_truth_obs(model, cfg.grid, seed)
    ens = init_ensemble(model, n, variant, _rng.stream(seed, _rng.PARTICLES),
                        exact_moments=cfg.exact_moments)
    noise = _rng.stream(seed, _rng.PARTICLE_NOISE) if variant.is_stochastic else None
    _, means, covs = run_ensemble(model, ens, path.dz, cfg.grid.dt, noise)
    km, kc = kalman_filter(model, path.dz, cfg.grid.dt)

    times = cfg.grid.times
    err_mean = np.linalg.norm(means - km, axis=1)
    err_cov = np.linalg.norm(covs - kc, axis=(1, 2))
    rates = ((fit_decay_rate(times, err_mean), fit_decay_rate(times, err_cov))
             if steady_state else (float("nan"), float("nan")))
    return DecayResult(times, err_mean, err_cov, rates[0], rates[1], lambda0,
                       means, covs, km, kc, path.x)


# ---------------------------------------------------------------------------
# propagation of chaos


@dataclass(frozen=True)
class ChaosRow:
    n: int
    trials: int
    err2_mean: float
    err2_stderr: float
    cor1_stat: float


@dataclass(frozen=True, eq=False)
class ChaosResult:
    """Per-``N`` statistics plus log-log slopes against ``N``."""

    rows: tuple
    slope_err2: float
    slope_cor1: float


def clipped_gaussian_mean(mean, std, c):
    """``E[clip(Y, -c, c)]`` for ``Y ~ N(mean, std**2)`` (elementwise)."""
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    a = (-c - mean) / std
    b = (c - mean) / std
    body = mean * (norm.cdf(b) - norm.cdf(a)) + std * (norm.pdf(a) - norm.pdf(b))
    return body - c * norm.cdf(a) + c * norm.sf(b)


def _initial_particles(model, x, exact):
    if not exact:
        return x
    mean, cov = _moments(x)
    f, b = optimal_gaussian_map(mean, cov, model.m0, model.sigma0)
    return x @ f + b


def _chaos_chunk(model, grid, n_list, seed, lo, hi, clip, exact):
    trials = range(lo, hi)
    n_max = max(n_list)
    dz = np.stack([simulate_truth_obs(model, grid, seed, t).dz for t in trials])
    draws = [model.sample_prior(_rng.stream(seed, t, _rng.PARTICLES), n_max)
             for t in trials]
    fpf = [np.stack([_initial_particles(model, p[:n], exact) for p in draws])
           for n in n_list]
    mfe = [x.copy() for x in fpf]

    belief = GaussianBelief(np.broadcast_to(model.m0, (len(trials), model.dim)),
                            model.sigma0)
    for k in range(grid.steps):
        g = sqrt_ricc(model, belief.cov)
        for j in range(len(n_list)):
            fpf[j] = _det_fpf_update(model, fpf[j], dz[:, k], grid.dt)
            mfe[j] = _mean_field_update(model, mfe[j], belief.mean, belief.cov, g,
                                        dz[:, k], grid.dt)
        belief = kalman_step(model, belief, dz[:, k], grid.dt)

    target = clipped_gaussian_mean(belief.mean[:, 0], np.sqrt(belief.cov[0, 0]), clip)
    err2 = np.empty((len(trials), len(n_list)))
    cor1 = np.empty_like(err2)
    for j in range(len(n_list)):
        err2[:, j] = np.mean(np.sum((fpf[j] - mfe[j]) ** 2, axis=-1), axis=-1)
        cor1[:, j] = np.mean(np.clip(fpf[j][..., 0], -clip, clip), axis=-1) - target
    return err2, cor1


def _loglog_slope(n, y):
    n = np.asarray(n, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = y > 0
    if np.count_nonzero(ok) < 2:
        return float("nan")
    return float(np.polyfit(np.log(n[ok]), np.log(y[ok]), 1)[0])


def run_chaos(cfg, workers=1):
    """Coupled finite-N and mean-field deterministic optimal-transport flows.

    For each trial one path is simulated and every ``N`` in ``cfg.n_list``
    uses a prefix of one particle draw; the finite-N ensemble and the
    mean-field ensemble start from the same particles and see the same
    ``dz``. At the horizon it reports ``E|X^i - Xbar^i|^2`` and the RMS
    error of the ensemble average of ``clip(x_1, -c, c)`` against its exact
    value under the Kalman-Bucy posterior.
    """
    model = _model_required(cfg)
    n_list = tuple(sorted(set(cfg.n_list)))
    if n_list[0] <= model.dim:
        raise SingularCovariance(f"the deterministic flow needs N > d "
                                 f"(N={n_list[0]}, d={model.dim})")
    jobs = [(model, cfg.grid, n_list, cfg.master_seed, lo, hi, cfg.clip,
             cfg.exact_moments) for lo, hi in _chunks(cfg.trials)]
    parts = _map_chunks(_chaos_chunk, jobs, workers)
    err2 = np.concatenate([p[0] for p in parts])
    cor1 = np.concatenate([p[1] for p in parts])
    m = cfg.trials
    stderr = err2.std(axis=0, ddof=1) / np.sqrt(m) if m > 1 else np.full(len(n_list), np.nan)
    rows = tuple(ChaosRow(n, m, float(err2[:, j].mean()), float(stderr[j]),
                          float(np.sqrt(np.mean(cor1[:, j] ** 2))))
                 for j, n in enumerate(n_list))
    return ChaosResult(rows, _loglog_slope(n_list, [r.err2_mean for r in rows]),
                       _loglog_slope(n_list, [r.cor1_stat for r in rows]))


# ---------------------------------------------------------------------------
# static comparison


@dataclass(frozen=True)
class MseRecord:
    """Monte Carlo mean squared error of one estimator of ``E[a^T X | Z]``."""

    n: int
    d: int
    estimator: str
    mse: float
    std_err: float
    trials: int
    flag: str = ""


def mse_pf_exact(d, n, sigma):
    """Exact MSE of the modified importance-sampling estimator with
    ``sigma0 = sigma_w = sigma`` at unit horizon."""
    return sigma ** 2 / n * (3.0 * 2.0 ** d - 0.5)


def static_direction(d, direction=None):
    """Unit test-function direction; defaults to ``(1, ..., 1) / sqrt(d)``."""
    if direction is None:
        return np.full(d, 1.0 / np.sqrt(d))
    a = np.asarray(direction, dtype=float)
    if a.shape != (d,):
        raise ConfigError(f"direction has length {a.size}, expected {d}", key="static.a")
    return a


def static_fpf_moments(mean0, cov0, dz, dt, sigma_w):
    """Ensemble moments of the stochastic linear FPF on the static fully
    observed model, advanced without particles.

    With ``A = 0``, ``sigma_B = 0`` and ``H = I`` every step maps the
    particles affinely, ``X' = X + K (dz - (X + m) dt / 2)`` with
    ``K = S / sigma_w**2``. The covariance therefore keeps its eigenvectors
    and each eigenvalue follows ``s' = s (1 - s dt / (2 sigma_w**2))**2``,
    while the mean obeys ``m' = m + K (dz - m dt)``.

    Parameters
    ----------
    mean0 : ndarray, shape (..., d)
    cov0 : ndarray, shape (..., d, d)
        Initial empirical moments (any batch shape).
    dz : ndarray, shape (..., steps, d)
        Increments; the batch shape must broadcast against ``mean0``'s
        leading axes after inserting the step axis.

    Returns
    -------
    mean, cov : ndarray
        Moments after all steps.
    """
    c = 1.0 / sigma_w ** 2
    s, v = np.linalg.eigh(cov0)
    s = np.maximum(s, 0.0)
    mt = _apply_basis(mean0, v)
    for k in range(dz.shape[-2]):
        dzt = _apply_basis(dz[..., k, :], v)
        mt = mt + (c * s) * (dzt - mt * dt)
        s = s * (1.0 - 0.5 * dt * c * s) ** 2
    mean = _apply_basis(mt, v.swapaxes(-1, -2))
    cov = (v * s[..., None, :]) @ v.swapaxes(-1, -2)
    return mean, 0.5 * (cov + cov.swapaxes(-1, -2))


def _apply_basis(vec, v):
    # vec @ v with an elementwise, batch-size independent summation order
    out = vec[..., 0, None] * v[..., 0, :]
    for j in range(1, v.shape[-2]):
        out = out + vec[..., j, None] * v[..., j, :]
    return out


def _static_chunk(d, n_list, sigma, grid, seed, lo, hi, direction, estimators):
    model = LinearGaussianModel.static(d, sigma, sigma)
    a = static_direction(d, direction)
    n_idx = np.asarray(n_list) - 1
    n_max = max(n_list)
    horizon = grid.horizon
    var_w = sigma ** 2 * horizon
    var_z = sigma ** 2 * horizon ** 2 + var_w
    log_norm = 0.5 * d * np.log(var_z / var_w)
    shrink = sigma ** 2 * horizon / var_z

    t_count = hi - lo
    nn = len(n_list)
    err = {e: np.full((t_count, nn), np.nan) for e in estimators}
    degenerate = np.zeros((t_count, nn), dtype=bool)
    want_fpf = "FPF" in estimators
    if want_fpf:
        dz_all = np.empty((t_count, grid.steps, d))
        mean0 = np.zeros((t_count, nn, d))
        cov0 = np.zeros((t_count, nn, d, d))
    exact = np.empty(t_count)

    for i, t in enumerate(range(lo, hi)):
        path = simulate_truth_obs(model, grid, seed, d, t)
        z = path.z_final
        exact[i] = shrink * (a @ z)
        x = model.sample_prior(_rng.stream(seed, d, t, _rng.PARTICLES), n_max)
        f = x @ a
        logw = -np.sum((z - horizon * x) ** 2, axis=1) / (2.0 * var_w)
        if "PF" in estimators:
            w = np.exp(logw)
            cw = np.cumsum(w)[n_idx]
            cwf = np.cumsum(w * f)[n_idx]
            bad = cw == 0
            degenerate[i] = bad
            err["PF"][i] = np.where(bad, np.nan, cwf / np.where(bad, 1.0, cw)) - exact[i]
        if "ModifiedPF" in estimators:
            ratio = np.exp(logw + np.sum(z ** 2) / (2.0 * var_z) + log_norm)
            err["ModifiedPF"][i] = np.cumsum(ratio * f)[n_idx] / n_list - exact[i]
        if want_fpf:
            dz_all[i] = path.dz
            for j, n in enumerate(n_list):
                if n >= 2:
                    mean0[i, j], cov0[i, j] = _moments(x[:n])

    if want_fpf:
        ok = np.asarray(n_list) >= 2
        mean, _ = static_fpf_moments(mean0[:, ok], cov0[:, ok], dz_all[:, None],
                                     grid.dt, sigma)
        err["FPF"][:, ok] = _apply_basis(mean, a[:, None])[..., 0] - exact[:, None]
    return err, degenerate


def _summarize(d, n_list, err, degenerate):
    records = []
    for est, e in err.items():
        for j, n in enumerate(n_list):
            col = e[:, j]
            flag = ""
            if est == "PF" and degenerate[:, j].any():
                flag = "DegenerateWeights"
            if est == "FPF" and n < 2:
                flag = "TooFewParticles"
            used = col[np.isfinite(col)]
            sq = used ** 2
            mse = float(sq.mean()) if sq.size else float("nan")
            se = float(sq.std(ddof=1) / np.sqrt(sq.size)) if sq.size > 1 else float("nan")
            records.append(MseRecord(int(n), int(d), est, mse, se, int(sq.size), flag))
    return records


def _static_records(cfg, d_list, estimators, workers):
    n_list = tuple(sorted(set(cfg.n_list)))
    unknown = set(estimators) - set(ESTIMATORS)
    if unknown:
        raise ConfigError(f"unknown estimators {sorted(unknown)}", key="estimators")
    estimators = tuple(e for e in ESTIMATORS if e in estimators)
    if not d_list:
        raise ConfigError("the static comparison needs d_list", key="d_list")
    if cfg.direction is not None and len(d_list) > 1:
        raise ConfigError("a fixed direction needs a single dimension", key="static.a")
    records = []
    for d in d_list:
        jobs = [(d, n_list, cfg.sigma, cfg.grid, cfg.master_seed, lo, hi,
                 cfg.direction, estimators) for lo, hi in _chunks(cfg.trials)]
        parts = _map_chunks(_static_chunk, jobs, workers)
        err = {e: np.concatenate([p[0][e] for p in parts]) for e in estimators}
        degenerate = np.concatenate([p[1] for p in parts])
        records.extend(_summarize(d, n_list, err, degenerate))
    return records


def run_static_compare(cfg, estimators=ESTIMATORS, workers=1):
    """Monte Carlo MSE of the PF, modified PF and FPF estimators of the
    posterior mean of ``a^T X`` for the static model.

    Every ``(d, trial)`` pair owns one simulated path and one particle
    draw of size ``max(n_list)``; smaller ensembles use prefixes, so all
    estimators and ensemble sizes see common random numbers. Returns one
    :class:`MseRecord` per ``(d, n, estimator)``.
    """
    d_list = cfg.d_list or ((cfg.model.dim,) if cfg.model is not None else ())
    return _static_records(cfg, tuple(d_list), estimators, workers)


# ---------------------------------------------------------------------------
# sweep


@dataclass(frozen=True)
class LevelPoint:
    estimator: str
    level: float
    d: int
    n_min: float


@dataclass(frozen=True, eq=False)
class SweepResult:
    """MSE grid, minimal ensemble sizes per accuracy level and curve fits.

    ``pf_slopes[level]`` is the slope of ``ln N_min`` against ``d`` for the
    importance-sampling filter; ``fpf_slopes[level]`` is the slope of
    ``ln N_min`` against ``ln d`` for the FPF.
    """

    records: tuple
    levels: tuple
    pf_slopes: dict
    fpf_slopes: dict


def level_crossing(n_list, mse, level):
    """Smallest ``N`` with ``mse <= level``, interpolated linearly in
    ``(ln N, ln mse)``; ``nan`` if the grid never reaches ``level``.
    Returns ``n_list[0]`` if already the first point qualifies."""
    n = np.asarray(n_list, dtype=float)
    mse = np.asarray(mse, dtype=float)
    hit = np.flatnonzero(np.isfinite(mse) & (mse <= level))
    if hit.size == 0:
        return float("nan")
    k = hit[0]
    if k == 0:
        return float(n[0])
    x0, x1 = np.log(n[k - 1]), np.log(n[k])
    y0, y1 = np.log(mse[k - 1]), np.log(mse[k])
    if not np.isfinite(y0) or y0 == y1:
        return float(n[k])
    return float(np.exp(x0 + (np.log(level) - y0) * (x1 - x0) / (y1 - y0)))


def _fit(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = np.isfinite(y)
    if np.count_nonzero(ok) < 2:
        return float("nan")
    return float(np.polyfit(x[ok], y[ok], 1)[0])


def run_sweep(cfg, workers=1):
    """Static comparison over the full ``(N, d)`` grid plus level curves.

    For every level in ``cfg.levels`` and every ``d`` the minimal ``N``
    reaching that MSE is interpolated for the PF and the FPF; the PF curve
    is fitted as ``ln N = alpha d + c`` and the FPF curve as
    ``ln N = beta ln d + c``.
    """
    records = tuple(run_static_compare(cfg, workers=workers))
    d_list = sorted({r.d for r in records})
    n_list = sorted({r.n for r in records})
    points = []
    pf_slopes, fpf_slopes = {}, {}
    for level in cfg.levels:
        for est in ("PF", "FPF"):
            n_min = []
            for d in d_list:
                mse = [next(r.mse for r in records
                            if r.d == d and r.n == n and r.estimator == est)
                       for n in n_list]
                n_min.append(level_crossing(n_list, mse, level))
                points.append(LevelPoint(est, level, d, n_min[-1]))
            log_n = np.log(n_min)
            if est == "PF":
                pf_slopes[level] = _fit(d_list, log_n)
            else:
                fpf_slopes[level] = _fit(np.log(d_list), log_n)
    return SweepResult(records, tuple(points), pf_slopes, fpf_slopes)
