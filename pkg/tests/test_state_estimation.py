import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pmu_fdia import grid_model
from pmu_fdia import state_estimation as se
from pmu_fdia.errors import TooFewSamplesError, UnobservableError


def test_exact_recovery(ieee39_meas, rng):
    x = rng.normal(0, 0.3, 38)
    res = se.wls_estimate(ieee39_meas, ieee39_meas.H @ x)
    assert np.abs(res.x_hat - x).max() <= 1e-10
    assert res.residual <= 1e-10 and res.passed is None


@given(st.integers(0, 10_000))
@settings(max_examples=30, deadline=None)
def test_residual_orthogonality(ieee39_meas, seed):
    r = np.random.default_rng(seed)
    w = r.uniform(0.2, 5.0, 85)
    m = ieee39_meas.with_weights(w)
    z = r.normal(0, 1, 85)
    x = se.wls_estimate(m, z).x_hat
    g = m.H.T @ (w * (z - m.H @ x))
    assert np.abs(g).max() <= 1e-9 * max(1.0, np.abs(z).max())


def test_weighted_matches_normal_equations(ieee39_meas, rng):
    w = rng.uniform(0.2, 5.0, 85)
    m = ieee39_meas.with_weights(w)
    z = rng.normal(size=85)
    H, W = m.H, np.diag(w)
    expect = np.linalg.solve(H.T @ W @ H, H.T @ W @ z)
    np.testing.assert_allclose(se.wls_estimate(m, z).x_hat, expect, rtol=1e-9, atol=1e-12)


def test_idempotence(ieee39_meas, rng):
    z = rng.normal(size=85)
    x1 = se.wls_estimate(ieee39_meas, z).x_hat
    again = se.wls_estimate(ieee39_meas, ieee39_meas.H @ x1)
    np.testing.assert_allclose(again.x_hat, x1, atol=1e-12)
    assert again.residual <= 1e-12


@given(st.integers(0, 10_000))
@settings(max_examples=30, deadline=None)
def test_stealth_invariance(ieee39_meas, seed):
    r = np.random.default_rng(seed)
    z = r.normal(0, 0.05, 85) + ieee39_meas.H @ r.normal(0, 0.2, 38)
    c = r.normal(0, 0.3, 38)
    before = se.wls_estimate(ieee39_meas, z)
    after = se.wls_estimate(ieee39_meas, z + ieee39_meas.H @ c)
    assert abs(after.residual - before.residual) <= 1e-9
    np.testing.assert_allclose(after.x_hat - before.x_hat, c, atol=1e-9)


def test_noiseless_base_case_matches_power_flow(ieee39, ieee39_meas):
    theta = grid_model.dc_power_flow(ieee39)
    # independent measurement set: injections and flows from branch loops
    p = np.zeros(39)
    flows = []
    for br in ieee39.branches:
        f = (theta[ieee39.index[br.from_bus]] - theta[ieee39.index[br.to_bus]]) / br.x
        p[ieee39.index[br.from_bus]] += f
        p[ieee39.index[br.to_bus]] -= f
        flows.append(f)
    res = se.wls_estimate(ieee39_meas, np.concatenate([p, flows]))
    col = ieee39_meas.column_index
    assert res.x_hat[col[15]] == pytest.approx(theta[ieee39.index[15]], abs=1e-12)
    np.testing.assert_allclose(res.x_hat, ieee39_meas.state_vector(theta, ieee39), atol=1e-12)


def test_unobservable():
    H = np.array([[1.0, -1.0], [-1.0, 1.0], [1.0, -1.0]])
    m = grid_model.MeasurementModel(H, tuple(grid_model.Measurement("injection", k) for k in range(3)), (2, 3), 1)
    with pytest.raises(UnobservableError):
        se.wls_estimate(m, np.zeros(3))


def test_wrong_length(ieee39_meas):
    with pytest.raises(ValueError):
        se.wls_estimate(ieee39_meas, np.zeros(84))


def test_quantile_interpolates():
    # position 0.95 * 99 = 94.05 between 95 and 96
    assert se.calibrate_threshold(np.arange(1, 101), 0.95) == pytest.approx(95.05, abs=1e-12)


def test_quantile_all_equal():
    assert se.calibrate_threshold(np.full(150, 0.42), 0.95) == 0.42


def test_quantile_needs_samples():
    with pytest.raises(TooFewSamplesError):
        se.calibrate_threshold(np.ones(99))
    with pytest.raises(ValueError):
        se.calibrate_threshold(np.ones(200), 1.0)


@pytest.mark.parametrize("r, g, ok", [(0.0, 0.85, True), (0.85, 0.85, False),
                                      (0.9, 0.85011, False), (0.85010, 0.85011, True)])
def test_bdd_boundary(r, g, ok):
    assert se.bdd_check(r, g) is ok


@given(st.lists(st.floats(0, 10), min_size=100, max_size=300), st.floats(0.5, 0.99))
@settings(max_examples=40, deadline=None)
def test_fraction_passing_at_most_quantile(samples, q):
    g = se.calibrate_threshold(samples, q)
    frac = np.mean([se.bdd_check(s, g) for s in samples])
    # the interpolated threshold sits at most one order statistic above q
    assert frac <= q + (1 - q) / len(samples) + 1e-12


def test_calibration_self_consistency(ieee39, ieee39_meas):
    rng = np.random.default_rng(5)
    x = ieee39_meas.state_vector(grid_model.dc_power_flow(ieee39), ieee39)

    def residuals(k):
        return [se.wls_estimate(ieee39_meas, se.draw_measurements(ieee39_meas, x, rng)).residual
                for _ in range(k)]

    g = se.calibrate_threshold(residuals(1000), 0.95)
    rate = np.mean([se.bdd_check(r, g) for r in residuals(1000)])
    assert abs(rate - 0.95) <= 0.02


def test_draw_measurements_noise(ieee39_meas, rng):
    x = np.zeros(38)
    z = np.array([se.draw_measurements(ieee39_meas, x, rng).z for _ in range(400)])
    assert z.std() == pytest.approx(se.RTU_SIGMA, rel=0.02)
    with pytest.raises(ValueError):
        se.MeasurementVector(np.zeros(3), np.array([0.1, 0.0, 0.1]))


def test_report_and_measurement_csv(tmp_path, ieee39, ieee39_meas, rng):
    x = ieee39_meas.state_vector(grid_model.dc_power_flow(ieee39), ieee39)
    z = se.draw_measurements(ieee39_meas, x, rng)
    path = tmp_path / "z.csv"
    se.write_measurements_csv(path, ieee39_meas, z)
    np.testing.assert_array_equal(se.read_measurements_csv(path, ieee39_meas), z.z)
    rep = tmp_path / "se.csv"
    se.write_estimation_report(rep, ieee39_meas.state_buses, np.zeros(38), np.ones(38), 0.1, 0.85)
    lines = rep.read_text().splitlines()
    assert lines[0] == "bus,angle_deg_before,angle_deg_after,residual,gamma,pass"
    assert len(lines) == 39 and lines[1].endswith("True")
