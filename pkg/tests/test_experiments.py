import dataclasses

import numpy as np
import pytest

from oracles import clipped_mean_quad, modified_pf_mse_n1_d1
from otfpf import (ExperimentConfig, run_sweep, FilterVariant, LinearGaussianModel,
                   SingularCovariance, TimeGrid, empirical_moments, init_ensemble,
                   mse_pf_exact, run_chaos, run_ensemble, run_error_decay,
                   run_static_compare, simulate_truth_obs)
from otfpf import _rng
from otfpf.experiments import (clipped_gaussian_mean, fit_decay_rate, level_crossing,
                               static_direction, static_fpf_moments)

V = FilterVariant
FAST = TimeGrid(0.01, 100)


def _by(records):
    return {(r.d, r.n, r.estimator): r for r in records}


def test_mse_pf_exact_values():
    assert mse_pf_exact(1, 1, 1.0) == pytest.approx(5.5)
    assert mse_pf_exact(2, 10, 1.0) == pytest.approx(1.15)
    assert mse_pf_exact(3, 1, 2.0) == pytest.approx(4.0 * 23.5)
    assert mse_pf_exact(1, 100, 1.0) == pytest.approx(0.055)
    assert mse_pf_exact(4, 100, 1.0) == pytest.approx(0.475)


@pytest.mark.parametrize("d", [1, 2, 4, 8])
@pytest.mark.parametrize("n", [1, 10, 100])
def test_mse_pf_exact_lower_bound(d, n):
    assert mse_pf_exact(d, n, 1.3) >= 1.3 ** 2 * 2.0 ** (d + 1) / n


@pytest.mark.slow
def test_mse_pf_exact_against_quadrature():
    assert modified_pf_mse_n1_d1(1.0) == pytest.approx(5.5, rel=1e-6)
    assert modified_pf_mse_n1_d1(0.5) == pytest.approx(1.375, rel=1e-6)


def test_static_fpf_moments_match_particles():
    model = LinearGaussianModel.static(3, 1.0, 0.7)
    grid = TimeGrid(0.02, 50)
    path = simulate_truth_obs(model, grid, 1)
    ens = init_ensemble(model, 12, V.STOCHASTIC_FPF, np.random.default_rng(0))
    _, means, covs = run_ensemble(model, ens, path.dz, grid.dt, np.random.default_rng(1))
    b = empirical_moments(ens)
    mean, cov = static_fpf_moments(b.mean, b.cov, path.dz, grid.dt, 0.7)
    np.testing.assert_allclose(mean, means[-1], atol=1e-12)
    np.testing.assert_allclose(cov, covs[-1], atol=1e-12)


def test_static_fpf_moments_batched():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((4, 6, 2))
    mean0 = x.mean(1)
    cov0 = np.stack([np.cov(xi.T) for xi in x])
    dz = 0.1 * rng.standard_normal((4, 10, 2))
    mean, cov = static_fpf_moments(mean0, cov0, dz, 0.1, 1.0)
    for i in range(4):
        mi, ci = static_fpf_moments(mean0[i], cov0[i], dz[i], 0.1, 1.0)
        np.testing.assert_array_equal(mean[i], mi)
        np.testing.assert_allclose(cov[i], ci, atol=1e-15)


def test_static_direction():
    np.testing.assert_allclose(np.linalg.norm(static_direction(5)), 1.0)
    with pytest.raises(ValueError):
        static_direction(3, [1.0, 0.0])


def _static_cfg(**kw):
    base = dict(grid=FAST, n_list=(1, 4, 16), d_list=(2,), trials=300, master_seed=5)
    base.update(kw)
    return ExperimentConfig(**base)


def test_pf_estimate_matches_direct_recomputation():
    cfg = _static_cfg(trials=3)
    records = _by(run_static_compare(cfg, estimators=("PF",)))
    model = LinearGaussianModel.static(2)
    a = static_direction(2)
    sq = []
    for t in range(3):
        z = simulate_truth_obs(model, FAST, 5, 2, t).z_final
        x = model.sample_prior(_rng.stream(5, 2, t, _rng.PARTICLES), 16)[:4]
        w = np.exp(-np.sum((z - x) ** 2, axis=1) / 2.0)
        w /= w.sum()
        assert w.sum() == pytest.approx(1.0)
        sq.append((w @ (x @ a) - 0.5 * a @ z) ** 2)
    assert records[(2, 4, "PF")].mse == pytest.approx(np.mean(sq), rel=1e-12)


def test_modified_pf_is_conditionally_unbiased():
    # for a fixed path, averaging over particle draws recovers the posterior mean
    model = LinearGaussianModel.static(1)
    z = np.array([0.8])
    x = model.sample_prior(np.random.default_rng(0), 400000)
    ratio = np.exp(-(z - x[:, 0]) ** 2 / 2.0 + z[0] ** 2 / 4.0 + 0.5 * np.log(2.0))
    assert np.mean(ratio * x[:, 0]) == pytest.approx(0.4, abs=0.01)


def test_common_random_numbers_across_estimators_and_sizes():
    cfg = _static_cfg()
    full = _by(run_static_compare(cfg))
    pf_only = _by(run_static_compare(cfg, estimators=("PF",)))
    subset = _by(run_static_compare(cfg.replace(n_list=(4,))))
    assert full[(2, 4, "PF")].mse == pf_only[(2, 4, "PF")].mse
    for est in ("PF", "ModifiedPF", "FPF"):
        assert full[(2, 4, est)].mse == subset[(2, 4, est)].mse


def test_workers_do_not_change_results():
    cfg = _static_cfg(trials=600)
    one = [dataclasses.astuple(r) for r in run_static_compare(cfg, workers=1)]
    two = [dataclasses.astuple(r) for r in run_static_compare(cfg, workers=2)]
    np.testing.assert_equal(one, two)


def test_flags_for_small_ensembles_and_degenerate_weights():
    rec = _by(run_static_compare(_static_cfg(trials=20)))
    assert rec[(2, 1, "FPF")].flag == "TooFewParticles"
    assert np.isnan(rec[(2, 1, "FPF")].mse)
    assert rec[(2, 1, "PF")].flag == ""
    deg = _by(run_static_compare(_static_cfg(d_list=(600,), n_list=(1, 2), trials=3,
                                             grid=TimeGrid(0.5, 2)),
                                 estimators=("PF",)))
    assert deg[(600, 2, "PF")].flag == "DegenerateWeights"
    assert deg[(600, 2, "PF")].trials < 3


def test_standard_error_scales_with_trials():
    small = _by(run_static_compare(_static_cfg(trials=1000), estimators=("FPF",)))
    big = _by(run_static_compare(_static_cfg(trials=4000), estimators=("FPF",)))
    ratio = small[(2, 16, "FPF")].std_err / big[(2, 16, "FPF")].std_err
    assert ratio == pytest.approx(2.0, rel=0.2)


def test_fpf_beats_pf_in_higher_dimension():
    rec = _by(run_static_compare(_static_cfg(d_list=(8,), n_list=(16,), trials=500)))
    assert rec[(8, 16, "FPF")].mse < rec[(8, 16, "PF")].mse


@pytest.mark.parametrize("mu, std, c", [(0.0, 1.0, 1.0), (0.7, 0.3, 0.5),
                                         (-2.0, 1.5, 1.0), (5.0, 0.1, 1.0)])
def test_clipped_gaussian_mean_against_quadrature(mu, std, c):
    assert clipped_gaussian_mean(mu, std, c) == pytest.approx(clipped_mean_quad(mu, std, c),
                                                             abs=1e-10)


def test_level_crossing():
    n = [1, 10, 100]
    assert level_crossing(n, [1.0, 0.1, 0.01], 0.05) == pytest.approx(10 * 2.0)
    assert level_crossing(n, [0.01, 0.001, 1e-4], 0.5) == 1.0
    assert np.isnan(level_crossing(n, [1.0, 0.9, 0.8], 0.1))


def test_fit_decay_rate():
    t = np.linspace(0.0, 4.0, 401)
    assert fit_decay_rate(t, 3.0 * np.exp(-1.7 * t)) == pytest.approx(1.7)
    assert np.isnan(fit_decay_rate(t, np.zeros_like(t)))


DECAY_MODEL = LinearGaussianModel(a=[[-1.0, 1.0], [0.0, -2.0]], h=[[1.0, 0.0]],
                                  sigma_b=np.eye(2), r=[[0.5]])


def test_decay_exact_init_error_is_first_order_in_dt():
    errs = []
    for dt in (4e-3, 2e-3):
        cfg = ExperimentConfig(model=DECAY_MODEL, grid=TimeGrid.from_horizon(dt, 1.0),
                               n_list=(10,), exact_moments=True, master_seed=2)
        res = run_error_decay(cfg, steady_state=False)
        assert res.err_mean[0] < 1e-13 and res.err_cov[0] < 1e-13
        errs.append(res.err_cov.max())
    assert 1.5 < errs[0] / errs[1] < 2.5


def test_decay_errors_shrink():
    cfg = ExperimentConfig(model=DECAY_MODEL, grid=TimeGrid.from_horizon(2e-3, 3.0),
                           n_list=(20,), master_seed=1)
    res = run_error_decay(cfg)
    assert res.err_cov[-1] < 0.1 * res.err_cov[0]
    assert res.lambda0 > 0 and res.rate_cov > 0


def test_decay_trivial_model_errors_are_constant():
    model = LinearGaussianModel(a=np.zeros((2, 2)), h=np.zeros((2, 2)),
                                sigma_b=np.zeros((2, 2)))
    cfg = ExperimentConfig(model=model, grid=FAST, n_list=(10,))
    res = run_error_decay(cfg, steady_state=False)
    np.testing.assert_allclose(res.err_mean, res.err_mean[0], rtol=1e-10)
    np.testing.assert_allclose(res.err_cov, res.err_cov[0], rtol=1e-10)
    assert np.isnan(res.rate_mean)


def test_decay_rejects_small_deterministic_ensemble():
    cfg = ExperimentConfig(model=DECAY_MODEL, grid=FAST, n_list=(2,))
    with pytest.raises(SingularCovariance):
        run_error_decay(cfg)
    res = run_error_decay(cfg, variant=V.SINGULAR_FPF, steady_state=False)
    assert np.all(np.isfinite(res.err_cov))


CHAOS_MODEL = LinearGaussianModel(a=[[-0.5, 1.0], [0.0, -1.0]], h=[[1.0, 0.0]],
                                  sigma_b=np.eye(2))


def test_chaos_rows_and_determinism():
    cfg = ExperimentConfig(model=CHAOS_MODEL, grid=TimeGrid(0.01, 50), n_list=(8, 32),
                           trials=300, master_seed=4)
    a = run_chaos(cfg)
    b = run_chaos(cfg, workers=2)
    assert a.rows == b.rows
    assert [r.n for r in a.rows] == [8, 32]
    assert a.rows[1].err2_mean < a.rows[0].err2_mean
    assert all(r.err2_stderr > 0 for r in a.rows)
    with pytest.raises(SingularCovariance):
        run_chaos(cfg.replace(n_list=(2, 8)))


def test_single_cell_sweep_equals_static_compare():
    cfg = _static_cfg(n_list=(8,), trials=200)
    sweep = run_sweep(cfg)
    one = [dataclasses.astuple(r) for r in run_static_compare(cfg)]
    np.testing.assert_equal([dataclasses.astuple(r) for r in sweep.records], one)
    assert {p.d for p in sweep.levels} == {2}
