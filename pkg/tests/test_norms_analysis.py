import logging
import math

import numpy as np
import pandas as pd
import pytest

from config.settings import CONVERGENCE_COLUMNS, SWEEP_COLUMNS
from services.analysis import (
    ConvergenceScenario,
    DecayFit,
    convergence_study,
    fit_decay_rate,
    fit_decay_series,
    stability_sweep,
    weighted_decay_bound,
)
from services.evolution import COMPLETED, PARABOLICITY_VIOLATION, SchemeConfig, Trajectory, simulate
from services.grid import Domain, Field, Grid, mode_field
from services.norms import NormSpec, admissible_exponent, discrete_norm
from services.operators import CoefficientField, block_spectrum
from services.state import StateVector
from utils.cache_functions import cached_laplacian
from utils.errors import ConfigError, DegenerateFit


def _synthetic(times, values) -> Trajectory:
    return Trajectory(times=list(times), records=[{"norm_utt": float(v)} for v in values])


def test_norm_of_zero_field(interval_grid):
    for kind in ("Lp", "W2_surrogate", "trace_surrogate"):
        assert discrete_norm(Field.zeros(interval_grid), NormSpec(3.0, kind)) == 0.0


def test_sine_norms_on_interval():
    grid = Grid(Domain.interval(math.pi), (400,))
    sine = mode_field(grid, 1)
    assert discrete_norm(sine, NormSpec(2.0, "Lp")) == pytest.approx(math.sqrt(math.pi / 2), rel=1e-12)
    assert discrete_norm(sine, NormSpec(2.0, "W2_surrogate")) == pytest.approx(2 * math.sqrt(math.pi / 2), rel=1e-4)
    assert discrete_norm(sine, NormSpec(2.0, "trace_surrogate")) == pytest.approx(2 * math.sqrt(math.pi / 2), rel=1e-3)


@pytest.mark.parametrize("p", [1.0, 2.0, 3.0, 7.5])
@pytest.mark.parametrize("kind", ["Lp", "W2_surrogate", "trace_surrogate"])
def test_norm_homogeneity_and_triangle_inequality(p, kind, rectangle_grid, rng):
    spec = NormSpec(p, kind)
    u = Field(rectangle_grid, rng.standard_normal(rectangle_grid.size))
    w = Field(rectangle_grid, rng.standard_normal(rectangle_grid.size))
    base = discrete_norm(u, spec)
    for t in (-3.0, 0.5, 1e3):
        assert discrete_norm(t * u, spec) == pytest.approx(abs(t) * base, rel=1e-13)
    assert discrete_norm(u + w, spec) <= discrete_norm(u, spec) + discrete_norm(w, spec) + 1e-13


def test_norm_spec_validation(caplog):
    with pytest.raises(ConfigError):
        NormSpec(0.5)
    with pytest.raises(ConfigError):
        NormSpec(9.0)
    with pytest.raises(ConfigError):
        NormSpec(2.0, "H1")
    with caplog.at_level(logging.WARNING, logger="services.norms"):
        NormSpec(1.5)
    assert "3/2" in caplog.text


@pytest.mark.parametrize(
    "p, ndim, expected", [(2.0, 1, True), (1.2, 1, False), (1.5, 1, False), (2.0, 2, True), (1.5, 2, False), (1.6, 2, True)]
)
def test_admissible_exponent(p, ndim, expected):
    assert admissible_exponent(p, ndim) is expected


@pytest.mark.parametrize("window", [0.2, 0.5, 1.0])
def test_exact_exponential_fit(window):
    times = np.linspace(0.0, 10.0, 201)
    fit = fit_decay_series(times, 5.0 * np.exp(-0.7 * times), window)
    assert fit.omega_hat == pytest.approx(0.7, abs=1e-10)
    assert fit.intercept == pytest.approx(math.log(5.0), abs=1e-9)
    assert fit.t_a < fit.t_b == 10.0
    assert fit.residual_rms < 1e-12
    assert fit.method == "raw_log"


def test_peak_envelope_fit():
    times = np.arange(0.0, 30.0, 0.01)
    values = np.exp(-0.5 * times) * np.abs(np.cos(0.86 * times))
    fit = fit_decay_series(times, values, 0.5, "peak_envelope")
    assert fit.omega_hat == pytest.approx(0.5, rel=0.02)
    assert fit.n_points >= 3


@pytest.mark.parametrize(
    "times, values, method",
    [
        (np.linspace(0, 1, 6), np.exp(-np.linspace(0, 1, 6)), "raw_log"),
        (np.linspace(0, 1, 50), np.zeros(50), "raw_log"),
        (np.linspace(0, 10, 100), np.exp(-np.linspace(0, 10, 100)), "peak_envelope"),
    ],
)
def test_degenerate_fits(times, values, method):
    with pytest.raises(DegenerateFit):
        fit_decay_series(times, values, 1.0, method)


def test_fit_rejects_bad_window():
    with pytest.raises(ConfigError):
        fit_decay_series(np.linspace(0, 1, 20), np.ones(20), 0.0)


def test_weighted_bound_and_trajectory_fit():
    times = np.linspace(0.0, 8.0, 81)
    traj = _synthetic(times, 5.0 * np.exp(-0.7 * times))
    assert weighted_decay_bound(traj, 0.7, "utt") == pytest.approx(1.0, rel=1e-12)
    fit = fit_decay_rate(traj, NormSpec(), method="raw_log", quantity="utt")
    assert fit.omega_hat == pytest.approx(0.7, abs=1e-10)
    assert fit.quantity == "utt"
    assert fit.c_hat == pytest.approx(1.0, rel=1e-9)
    assert fit.lambda0 is None
    assert DecayFit.from_dict(fit.to_dict()) == fit


def test_linear_mode_decay_rate(interval_grid, interval_lap, unit_params, mode_state):
    report = block_spectrum(CoefficientField.constant(interval_grid), interval_lap, unit_params, 3)
    cfg = SchemeConfig(dt=0.01, t_end=30.0, record_every=2, nonlinear=False)
    traj = simulate(mode_state, cfg, interval_lap, unit_params)
    fit = fit_decay_rate(traj, NormSpec(), quantity="u", report=report)
    assert fit.method == "peak_envelope"
    assert fit.omega_hat == pytest.approx(report.modes[0].re_minus, rel=0.01)
    assert fit.linearized_rate == report.modes[0].re_minus
    assert fit.lambda0 == report.lambda0


@pytest.mark.parametrize("scheme, low, high", [("semi_implicit_euler", 0.9, 1.1), ("imex_trapezoid", 1.8, 2.2)])
def test_convergence_orders(scheme, low, high, interval_grid, unit_params):
    scenario = ConvergenceScenario.single_mode(interval_grid, 1, unit_params, t_end=1.0, scheme=scheme)
    table = convergence_study(scenario, [0.1, 0.05, 0.025, 0.0125])
    assert list(table.columns) == CONVERGENCE_COLUMNS
    assert np.isnan(table["observed_order"].iloc[0])
    orders = table["observed_order"].iloc[1:]
    assert orders.between(low, high).all(), orders.tolist()


def test_convergence_repeated_step(interval_grid, unit_params):
    scenario = ConvergenceScenario.single_mode(interval_grid, 1, unit_params, t_end=0.5)
    table = convergence_study(scenario, [0.1, 0.05, 0.05, 0.025])
    assert table["error"].iloc[1] == table["error"].iloc[2]
    assert np.isnan(table["observed_order"].iloc[2])
    assert not np.isnan(table["observed_order"].iloc[3])


def test_convergence_nonlinear_richardson(interval_grid, unit_params):
    scenario = ConvergenceScenario.single_mode(
        interval_grid, 1, unit_params, t_end=0.5, scheme="imex_trapezoid", y0=0.1, nonlinear=True
    )
    assert scenario.reference == "richardson"
    table = convergence_study(scenario, [0.05, 0.025, 0.0125])
    assert table["error"].is_monotonic_decreasing


@pytest.mark.parametrize("scheme, low, high", [("semi_implicit_euler", 0.8, 1.3), ("imex_trapezoid", 1.7, 2.4)])
def test_convergence_orders_nonlinear(scheme, low, high, interval_grid, unit_params):
    scenario = ConvergenceScenario.single_mode(
        interval_grid, 1, unit_params, t_end=1.0, scheme=scheme, y0=0.1, y1=0.25, nonlinear=True
    )
    table = convergence_study(scenario, [0.04, 0.02, 0.01, 0.005])
    orders = table["observed_order"].iloc[1:]
    assert orders.between(low, high).all(), orders.tolist()


def test_convergence_needs_three_steps(interval_grid, unit_params):
    scenario = ConvergenceScenario.single_mode(interval_grid, 1, unit_params, t_end=0.5)
    with pytest.raises(ConfigError):
        convergence_study(scenario, [0.1, 0.05])
    with pytest.raises(ConfigError):
        convergence_study(scenario, [0.05, 0.1, 0.01])


@pytest.fixture
def sweep_setup(unit_params):
    grid = Grid(Domain.interval(math.pi), (15,))
    report = block_spectrum(CoefficientField.constant(grid), cached_laplacian(grid), unit_params, 3)
    cfg = SchemeConfig(dt=0.02, t_end=30.0, record_every=1)
    shape = StateVector(mode_field(grid, 1), Field.zeros(grid))
    return shape, cfg, report


def test_stability_sweep_regimes(sweep_setup, unit_params):
    shape, cfg, report = sweep_setup
    result = stability_sweep(shape, [0.0, 1e-3, 0.1, 0.6], cfg, unit_params, report=report)
    table = result.table
    assert list(table.columns) == SWEEP_COLUMNS
    assert list(table["status"]) == [COMPLETED, COMPLETED, COMPLETED, PARABOLICITY_VIOLATION]
    assert np.isnan(table["omega_hat"].iloc[0])
    assert (table["omega_hat"].iloc[1:3] > 0).all()
    assert table["violation_time"].iloc[3] == 0.0
    assert result.largest_decaying == 0.1
    assert result.smallest_violating == 0.6


def test_stability_sweep_threads_keep_order(sweep_setup, unit_params):
    shape, cfg, report = sweep_setup
    amplitudes = [1e-3, 1e-2, 0.6]
    sequential = stability_sweep(shape, amplitudes, cfg, unit_params, report=report, jobs=1)
    threaded = stability_sweep(shape, amplitudes, cfg, unit_params, report=report, jobs=3)
    pd.testing.assert_frame_equal(sequential.table, threaded.table)


def test_stability_sweep_validates_amplitudes(sweep_setup, unit_params):
    shape, cfg, _ = sweep_setup
    with pytest.raises(ConfigError):
        stability_sweep(shape, [0.1, 0.01], cfg, unit_params)
    with pytest.raises(ConfigError):
        stability_sweep(shape, [], cfg, unit_params)
