import math

import numpy as np
import pytest

from midesign.bo import (
    BoConfig,
    GaussianProcess,
    GpFitConfig,
    GpHyper,
    _ei_value,
    _factorize,
    _kernel_matrix,
    bo_optimize,
    expected_improvement,
    gp_fit,
    gp_predict,
    latin_hypercube,
    matern52,
)
from midesign.errors import ConfigurationError, InputError
from midesign.models import make_oscillatory_model
from midesign.nn import LrSchedule, NetworkConfig
from midesign.trainer import TrainConfig

UNIT_HYPER = GpHyper(1.0, np.array([1.0]), 0.0)


def manual_gp(x, f, hyper):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    f = np.asarray(f, dtype=float)
    chol, alpha, jitter = _factorize(x, f - f.mean(), hyper)
    return GaussianProcess(x, f, hyper, float(f.mean()), chol, alpha, jitter)


# ---------------------------------------------------------------------------
# kernel


def test_matern_zero_distance_is_signal_variance():
    hyper = GpHyper(2.7, np.array([0.5]), 0.0)
    assert matern52([1.0, 2.0], [1.0, 2.0], hyper) == pytest.approx(2.7)


def test_matern_decays_to_zero():
    assert matern52([0.0], [200.0], UNIT_HYPER) < 1e-20


def test_matern_unit_distance_closed_form():
    expected = (1.0 + math.sqrt(5.0) + 5.0 / 3.0) * math.exp(-math.sqrt(5.0))
    assert expected == pytest.approx(0.5240, abs=5e-5)
    assert matern52([0.0], [1.0], UNIT_HYPER) == pytest.approx(expected, rel=1e-12)


def test_matern_rejects_bad_hyperparameters():
    with pytest.raises(InputError):
        GpHyper(-1.0, np.array([1.0]), 0.0)
    with pytest.raises(InputError):
        GpHyper(1.0, np.array([0.0]), 0.0)


def test_kernel_matrix_matches_pairwise():
    rng = np.random.default_rng(0)
    xa = rng.standard_normal((4, 2))
    xb = rng.standard_normal((3, 2))
    hyper = GpHyper(1.3, np.array([0.7]), 0.0)
    mat = _kernel_matrix(xa, xb, hyper)
    for i in range(4):
        for j in range(3):
            assert mat[i, j] == pytest.approx(matern52(xa[i], xb[j], hyper), rel=1e-12)


# ---------------------------------------------------------------------------
# GP fit / predict


def test_fit_handles_duplicate_rows():
    x = np.array([[1.0], [1.0], [3.0]])
    f = np.array([2.0, 2.0, 4.0])
    gp = gp_fit(x, f, GpFitConfig(n_restarts=4, seed=0))
    mean, _ = gp_predict(gp, np.array([1.0]))
    assert mean == pytest.approx(2.0, abs=0.2)


def test_fit_recovers_lengthscale_on_synthetic_draw():
    rng = np.random.default_rng(1)
    x = np.sort(rng.uniform(0, 10, 50))[:, None]
    true = GpHyper(1.0, np.array([1.0]), 0.0)
    k = _kernel_matrix(x, x, true) + 1e-10 * np.eye(50)
    f = np.linalg.cholesky(k) @ rng.standard_normal(50)
    gp = gp_fit(x, f, GpFitConfig(n_restarts=8, seed=2))
    assert 0.5 <= float(gp.hyper.lengthscale[0]) <= 2.0


def test_fit_constant_observations():
    x = np.linspace(0, 5, 7)[:, None]
    gp = gp_fit(x, np.full(7, 3.3), GpFitConfig(seed=3))
    for q in (-10.0, 2.5, 40.0):
        mean, _ = gp_predict(gp, np.array([q]))
        assert mean == pytest.approx(3.3, abs=1e-6)


def test_fit_requires_two_observations():
    with pytest.raises(InputError):
        gp_fit(np.array([[1.0]]), np.array([2.0]), GpFitConfig())


def test_fit_is_deterministic():
    rng = np.random.default_rng(4)
    x = rng.uniform(0, 5, (12, 1))
    f = np.sin(x[:, 0]) + 0.05 * rng.standard_normal(12)
    g1 = gp_fit(x, f, GpFitConfig(seed=5))
    g2 = gp_fit(x, f, GpFitConfig(seed=5))
    assert g1.hyper == g2.hyper


def test_predict_interpolates_with_small_noise():
    rng = np.random.default_rng(6)
    x = np.linspace(0, 6, 9)[:, None]
    f = np.cos(x[:, 0])
    gp = manual_gp(x, f, GpHyper(1.0, np.array([1.5]), 1e-10))
    for i in range(9):
        mean, var = gp_predict(gp, x[i])
        assert mean == pytest.approx(f[i], abs=1e-6)
        assert var >= 0.0


def test_predict_reverts_to_prior_far_from_data():
    x = np.array([[0.0], [1.0]])
    f = np.array([5.0, 7.0])
    gp = manual_gp(x, f, GpHyper(2.0, np.array([1.0]), 1e-8))
    mean, var = gp_predict(gp, np.array([500.0]))
    assert mean == pytest.approx(6.0, abs=1e-6)  # prior mean = mean(f)
    assert var == pytest.approx(2.0, rel=1e-6)  # prior variance = signal_var


def test_predict_matches_dense_solve_oracle():
    rng = np.random.default_rng(7)
    x = rng.uniform(-2, 2, (5, 2))
    f = rng.standard_normal(5)
    hyper = GpHyper(1.4, np.array([0.8]), 0.05)
    gp = manual_gp(x, f, hyper)
    q = rng.uniform(-2, 2, 2)
    k_full = _kernel_matrix(x, x, hyper) + 0.05 * np.eye(5)
    k_star = _kernel_matrix(q[None, :], x, hyper)[0]
    mean_oracle = f.mean() + k_star @ np.linalg.solve(k_full, f - f.mean())
    var_oracle = 1.4 - k_star @ np.linalg.solve(k_full, k_star)
    mean, var = gp_predict(gp, q)
    assert mean == pytest.approx(mean_oracle, abs=1e-10)
    assert var == pytest.approx(var_oracle, abs=1e-10)


# ---------------------------------------------------------------------------
# expected improvement


def test_ei_zero_when_certain():
    x = np.array([[0.0], [2.0]])
    f = np.array([1.0, 3.0])
    gp = manual_gp(x, f, GpHyper(1.0, np.array([1.0]), 0.0))
    assert expected_improvement(gp, np.array([2.0]), best_so_far=3.0) == pytest.approx(0.0, abs=1e-8)


def test_ei_at_mean_equals_sigma_over_sqrt_2pi():
    sigma = 0.7
    assert _ei_value(1.0, sigma, 1.0) == pytest.approx(sigma / math.sqrt(2 * math.pi), rel=1e-12)


def test_ei_monotone_in_mean():
    vals = [_ei_value(mu, 0.5, 1.0) for mu in np.linspace(-2, 4, 25)]
    assert np.all(np.diff(vals) > 0)


def test_ei_nonnegative_everywhere():
    rng = np.random.default_rng(8)
    x = rng.uniform(0, 5, (6, 1))
    f = np.sin(x[:, 0])
    gp = gp_fit(x, f, GpFitConfig(seed=9))
    grid = np.linspace(-1, 6, 200)[:, None]
    ei = expected_improvement(gp, grid, float(f.max()))
    assert np.all(ei >= 0.0)


# ---------------------------------------------------------------------------
# the optimization loop


def dummy_boconfig(model, initial=6, budget=30, seed=0):
    train = TrainConfig(
        epochs=5,
        batch_size=32,
        lr_psi=LrSchedule(1e-3),
        lr_design=LrSchedule(0.0),
        seed=seed,
    )
    net = NetworkConfig(model.theta_dim, model.data_dim, (8,), seed=seed)
    return BoConfig(
        initial_probe_count=initial,
        budget=budget,
        train=train,
        network=net,
        seed=seed,
    )


def test_bo_validates_budget():
    model = make_oscillatory_model()
    with pytest.raises(ConfigurationError):
        dummy_boconfig(model, initial=5, budget=4)


def test_latin_hypercube_covers_domain():
    dom = np.array([[0.0, 10.0], [-5.0, 5.0]])
    pts = latin_hypercube(dom, 20, np.random.default_rng(10))
    assert pts.shape == (20, 2)
    assert np.all(pts >= dom[:, 0]) and np.all(pts <= dom[:, 1])
    # one point per stratum in each dimension
    for j in range(2):
        strata = ((pts[:, j] - dom[j, 0]) / (dom[j, 1] - dom[j, 0]) * 20).astype(int)
        assert len(set(strata.tolist())) == 20


def test_bo_finds_deterministic_quadratic_optimum():
    model = make_oscillatory_model(domain=(0.0, 10.0))
    cfg = dummy_boconfig(model, initial=6, budget=30, seed=11)

    def objective(d, index):
        return -((d[0] - 3.0) ** 2), None

    result = bo_optimize(model, cfg, objective=objective)
    assert abs(result.design[0] - 3.0) < 0.1


def test_bo_degenerate_budget_returns_best_probe():
    model = make_oscillatory_model(domain=(0.0, 10.0))
    cfg = dummy_boconfig(model, initial=5, budget=5, seed=12)
    seen = []

    def objective(d, index):
        seen.append(float(d[0]))
        return -((d[0] - 3.0) ** 2), None

    result = bo_optimize(model, cfg, objective=objective)
    assert len(seen) == 5  # no EI step
    assert result.design[0] == pytest.approx(min(seen, key=lambda v: abs(v - 3.0)))


def test_bo_never_probes_outside_domain():
    model = make_oscillatory_model(domain=(1.0, 4.0))
    cfg = dummy_boconfig(model, initial=4, budget=20, seed=13)

    def objective(d, index):
        assert 1.0 <= d[0] <= 4.0
        return math.sin(3 * d[0]), None

    result = bo_optimize(model, cfg, objective=objective)
    assert np.all(result.probe_designs >= 1.0) and np.all(result.probe_designs <= 4.0)


def test_bo_incumbent_objective_is_running_maximum():
    model = make_oscillatory_model(domain=(0.0, 10.0))
    cfg = dummy_boconfig(model, initial=5, budget=18, seed=14)

    def objective(d, index):
        return -((d[0] - 7.0) ** 2) + 0.05 * math.sin(20 * d[0]), None

    result = bo_optimize(model, cfg, objective=objective)
    assert result.objective == np.nanmax(result.objectives)
    # incumbent sequence (running max over finite objectives) is non-decreasing
    vals = result.objectives[np.isfinite(result.objectives)]
    running = np.maximum.accumulate(vals)
    assert np.all(np.diff(running) >= 0.0)


def test_bo_records_failed_probes_and_continues():
    model = make_oscillatory_model(domain=(0.0, 10.0))
    cfg = dummy_boconfig(model, initial=4, budget=12, seed=15)
    calls = {"n": 0}

    def objective(d, index):
        calls["n"] += 1
        if index in (1, 5):
            raise RuntimeError("probe exploded")
        return -((d[0] - 4.0) ** 2), None

    result = bo_optimize(model, cfg, objective=objective)
    assert calls["n"] == 12
    assert np.isnan(result.objectives[1]) and np.isnan(result.objectives[5])
    assert np.isfinite(result.objective)


def test_bo_trains_real_critic_probes():
    # tiny end-to-end run through the real objective (fresh critic per probe)
    model = make_oscillatory_model()
    cfg = dummy_boconfig(model, initial=2, budget=3, seed=16)
    result = bo_optimize(model, cfg)
    assert result.probe_designs.shape == (3, 1)
    assert np.all(np.isfinite(result.objectives))
    assert result.train_results[result.incumbent_index] is not None
