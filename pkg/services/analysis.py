import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from config.settings import CONVERGENCE_COLUMNS, FIT_DEFAULTS, SWEEP_COLUMNS
from services.evolution import COMPLETED, PARABOLICITY_VIOLATION, SchemeConfig, Trajectory, modal_coefficients, modal_exact_solution, simulate
from services.grid import Field, Grid, SparseOperator, mode_field
from services.norms import NormSpec, discrete_norm
from services.operators import PhysicalParams, SpectralReport
from services.state import StateVector
from utils.cache_functions import cached_laplacian
from utils.errors import ConfigError, DegenerateFit, NumericalFailure

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DecayFit:
    """Least-squares exponential rate of a norm trajectory tail"""

    omega_hat: float
    intercept: float
    t_a: float
    t_b: float
    residual_rms: float
    method: str
    quantity: str = FIT_DEFAULTS["quantity"]
    n_points: int = 0
    c_hat: Optional[float] = None
    lambda0: Optional[float] = None
    linearized_rate: Optional[float] = None

    def to_dict(self) -> Dict:
        return asdict(self)

    def to_frame(self) -> pd.DataFrame:
        """One-row table with the dataclass fields as columns"""
        return pd.DataFrame([self.to_dict()], columns=list(self.__dataclass_fields__))

    @classmethod
    def from_dict(cls, data: Dict) -> "DecayFit":
        return cls(**{key: data[key] for key in cls.__dataclass_fields__ if key in data})


def quantity_series(traj: Trajectory, quantity: str, spec: NormSpec) -> np.ndarray:
    """
    Norm values per sample.

    combined: ||u||_W2surr + ||u_t||_tracesurr at spec.p
    u / ut:   discrete_norm of v1 / v2 under spec
    utt:      the recorded Lp norm of u_tt
    """
    if quantity not in FIT_DEFAULTS["quantities"]:
        raise ConfigError("fit.quantity", f"expected one of {FIT_DEFAULTS['quantities']}, got {quantity!r}")
    if quantity == "utt":
        return traj.series("norm_utt")
    if not traj.states:
        return np.array([], dtype=float)
    lap = cached_laplacian(traj.states[0].grid)
    if quantity == "u":
        return np.array([discrete_norm(v.v1, spec, lap=lap) for v in traj.states])
    if quantity == "ut":
        return np.array([discrete_norm(v.v2, spec, lap=lap) for v in traj.states])
    w2, trace = spec.with_kind("W2_surrogate"), spec.with_kind("trace_surrogate")
    return np.array([discrete_norm(v.v1, w2, lap=lap) + discrete_norm(v.v2, trace) for v in traj.states])


def _peaks(times: np.ndarray, log_values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Local maxima of log values, refined by a three-point parabola"""
    peak_t, peak_v = [], []
    for i in range(1, len(times) - 1):
        y0, y1, y2 = log_values[i - 1], log_values[i], log_values[i + 1]
        if not (y1 > y0 and y1 >= y2):
            continue
        curvature = y0 - 2.0 * y1 + y2
        offset = 0.5 * (y0 - y2) / curvature if curvature < 0 else 0.0
        spacing = 0.5 * (times[i + 1] - times[i - 1])
        peak_t.append(times[i] + offset * spacing)
        peak_v.append(y1 - 0.25 * (y0 - y2) * offset)
    return np.array(peak_t), np.array(peak_v)


def fit_decay_series(
    times: Sequence[float],
    values: Sequence[float],
    window_fraction: float = FIT_DEFAULTS["window_fraction"],
    method: str = "raw_log",
) -> DecayFit:
    """
    Fit log(values) ~ intercept - omega*t over the last window_fraction of the run.

    Args:
        times: Strictly increasing sample times
        values: Norm values at those times
        window_fraction: Fraction of the time span (from the end) used for the fit
        method: raw_log, or peak_envelope for oscillating norms

    Returns:
        DecayFit: omega_hat with the residual RMS of the log-linear fit
    """
    if not 0.0 < window_fraction <= 1.0:
        raise ConfigError("fit.window_fraction", f"must lie in (0, 1], got {window_fraction}")
    if method not in ("raw_log", "peak_envelope"):
        raise ConfigError("fit.method", f"expected raw_log or peak_envelope, got {method!r}")
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.size == 0:
        raise DegenerateFit("empty trajectory")

    t_a = times[-1] - window_fraction * (times[-1] - times[0])
    mask = times >= t_a - 1e-12 * max(1.0, abs(t_a))
    window_t, window_v = times[mask], values[mask]
    if window_t.size < FIT_DEFAULTS["min_samples"]:
        raise DegenerateFit(f"only {window_t.size} samples in the fit window, need {FIT_DEFAULTS['min_samples']}")
    if not np.all(np.isfinite(window_v)) or np.any(window_v <= 0):
        raise DegenerateFit("norms vanish or are not finite inside the fit window")

    fit_t, fit_y = window_t, np.log(window_v)
    if method == "peak_envelope":
        fit_t, fit_y = _peaks(window_t, fit_y)
        if fit_t.size < FIT_DEFAULTS["min_peaks"]:
            raise DegenerateFit(f"found {fit_t.size} peaks in the fit window, need {FIT_DEFAULTS['min_peaks']}")

    slope, intercept = np.polyfit(fit_t, fit_y, 1)
    residual = fit_y - (slope * fit_t + intercept)
    return DecayFit(
        omega_hat=float(-slope),
        intercept=float(intercept),
        t_a=float(window_t[0]),
        t_b=float(window_t[-1]),
        residual_rms=float(np.sqrt(np.mean(residual**2))),
        method=method,
        n_points=int(fit_t.size),
    )


def resolve_method(method: str, report: Optional[SpectralReport]) -> str:
    """auto -> peak_envelope when the dominant mode oscillates (complex pair), raw_log otherwise"""
    if method != "auto":
        return method
    if report is not None and report.dominant_regime == "complex":
        return "peak_envelope"
    return "raw_log"


def weighted_decay_bound(
    traj: Trajectory,
    omega: float,
    quantity: str = FIT_DEFAULTS["quantity"],
    spec: Optional[NormSpec] = None,
    values: Optional[np.ndarray] = None,
) -> float:
    """C_hat = max_t e^{omega t} norm(t) / norm(0), the empirical constant of norm(t) <= C e^{-omega t} norm(0)"""
    spec = NormSpec() if spec is None else spec
    values = quantity_series(traj, quantity, spec) if values is None else values
    if values.size == 0 or not values[0] > 0:
        raise DegenerateFit("initial norm vanishes, no decay constant")
    times = np.asarray(traj.times, dtype=float)
    return float(np.max(values * np.exp(omega * times)) / values[0])


def fit_decay_rate(
    traj: Trajectory,
    spec: NormSpec,
    window_fraction: float = FIT_DEFAULTS["window_fraction"],
    method: str = FIT_DEFAULTS["method"],
    quantity: str = FIT_DEFAULTS["quantity"],
    report: Optional[SpectralReport] = None,
) -> DecayFit:
    """
    Estimate the decay rate omega of a simulated trajectory.

    The reference values lambda0 and Re lambda_-(a_1^h) are copied from the
    spectral report when given, so the fitted rate can be read against both.
    """
    values = quantity_series(traj, quantity, spec)
    fit = fit_decay_series(traj.times, values, window_fraction, resolve_method(method, report))
    c_hat = weighted_decay_bound(traj, fit.omega_hat, quantity, spec, values=values) if values[0] > 0 else None
    fit = DecayFit(
        **{
            **fit.to_dict(),
            "quantity": quantity,
            "c_hat": c_hat,
            "lambda0": report.lambda0 if report is not None else None,
            "linearized_rate": report.modes[0].re_minus if report is not None else None,
        }
    )
    logger.info("fitted omega_hat=%.6g (%s on %s)", fit.omega_hat, fit.method, quantity)
    return fit


@dataclass(frozen=True, eq=False)
class ConvergenceScenario:
    """Initial data and settings for a time-step refinement study"""

    v0: StateVector
    params: PhysicalParams
    lap: SparseOperator
    t_end: float
    scheme: str = "semi_implicit_euler"
    nonlinear: bool = False
    reference: str = "modal"
    mode_shape: Optional[Field] = None

    @classmethod
    def single_mode(
        cls,
        grid: Grid,
        index,
        params: PhysicalParams,
        t_end: float,
        scheme: str = "semi_implicit_euler",
        y0: float = 1.0,
        y1: float = 0.0,
        nonlinear: bool = False,
    ) -> "ConvergenceScenario":
        shape = mode_field(grid, index)
        v0 = StateVector(y0 * shape, y1 * shape)
        reference = "richardson" if nonlinear else "modal"
        return cls(v0, params, cached_laplacian(grid), t_end, scheme, nonlinear, reference, shape)


def _final_state(scenario: ConvergenceScenario, dt: float) -> StateVector:
    cfg = SchemeConfig(
        dt=dt,
        t_end=scenario.t_end,
        scheme=scenario.scheme,
        nonlinear=scenario.nonlinear,
        record_every=10**9,
    )
    traj = simulate(scenario.v0, cfg, scenario.lap, scenario.params)
    if not traj.completed:
        raise NumericalFailure(f"convergence run at dt={dt} stopped: {traj.message}")
    return traj.states[-1]


def _modal_reference(scenario: ConvergenceScenario) -> StateVector:
    shape = scenario.mode_shape.values
    weight = float(shape @ shape)
    # the sampled sine is an exact eigenvector of -Delta_h, its Rayleigh quotient is the eigenvalue
    a_j = float(shape @ scenario.lap.dot(shape)) / weight
    y0 = float(shape @ scenario.v0.v1.values) / weight
    y1 = float(shape @ scenario.v0.v2.values) / weight
    alpha, beta = modal_coefficients(a_j, scenario.params, y0, y1)
    y, dy = modal_exact_solution(a_j, scenario.params, alpha, beta, scenario.t_end)
    return StateVector(y * scenario.mode_shape, dy * scenario.mode_shape)


def convergence_study(scenario: ConvergenceScenario, dt_list: Sequence[float]) -> pd.DataFrame:
    """
    Errors at t_end and observed orders for decreasing time steps.

    The reference is the modal exact solution for linear single-mode data, or a
    run at a quarter of the smallest step otherwise. The observed order of a row
    is log(e_prev/e)/log(dt_prev/dt); it is NaN for the first row and whenever a
    step repeats.
    """
    dts = [float(dt) for dt in dt_list]
    if len(dts) < 3:
        raise ConfigError("dt_list", f"need at least 3 time steps, got {len(dts)}")
    if any(later > earlier for earlier, later in zip(dts, dts[1:])):
        raise ConfigError("dt_list", "time steps must be non-increasing")
    if scenario.reference == "modal":
        if scenario.nonlinear or scenario.mode_shape is None:
            raise ConfigError("reference", "the modal reference needs linear single-mode data")
        reference = _modal_reference(scenario)
    else:
        reference = _final_state(scenario, dts[-1] / 4.0)

    rows = []
    for i, dt in enumerate(dts):
        final = _final_state(scenario, dt)
        error = max(
            float(np.max(np.abs(final.v1.values - reference.v1.values))),
            float(np.max(np.abs(final.v2.values - reference.v2.values))),
        )
        order = math.nan
        if i > 0 and dts[i - 1] != dt and error > 0 and rows[-1]["error"] > 0:
            order = math.log(rows[-1]["error"] / error) / math.log(dts[i - 1] / dt)
        rows.append({"dt": dt, "error": error, "observed_order": order})
        logger.debug("dt=%.3e error=%.3e order=%s", dt, error, order)
    return pd.DataFrame(rows, columns=CONVERGENCE_COLUMNS)


@dataclass(frozen=True, eq=False)
class SweepResult:
    """Sweep table plus the regime boundary it brackets"""

    table: pd.DataFrame
    largest_decaying: Optional[float]
    smallest_violating: Optional[float]

    def summary(self) -> Dict:
        return {
            "rows": len(self.table),
            "largest_decaying_amplitude": self.largest_decaying,
            "smallest_violating_amplitude": self.smallest_violating,
            "table": self.table.to_dict(orient="records"),
        }


def stability_sweep(
    base_v0_shape: StateVector,
    amplitudes: Sequence[float],
    cfg: SchemeConfig,
    params: PhysicalParams,
    lap: Optional[SparseOperator] = None,
    spec: Optional[NormSpec] = None,
    window_fraction: float = FIT_DEFAULTS["window_fraction"],
    method: str = FIT_DEFAULTS["method"],
    quantity: str = FIT_DEFAULTS["quantity"],
    report: Optional[SpectralReport] = None,
    jobs: int = 1,
) -> SweepResult:
    """
    Simulate and fit the scaled initial data amplitude * base_v0_shape per amplitude.

    Rows are independent and evaluated on up to `jobs` threads; the table keeps
    the amplitude order.
    """
    amplitudes = [float(a) for a in amplitudes]
    if not amplitudes:
        raise ConfigError("sweep.amplitudes", "need at least one amplitude")
    if any(a < 0 for a in amplitudes) or any(b <= a for a, b in zip(amplitudes, amplitudes[1:])):
        raise ConfigError("sweep.amplitudes", "amplitudes must be nonnegative and strictly increasing")
    lap = cached_laplacian(base_v0_shape.grid) if lap is None else lap
    spec = NormSpec() if spec is None else spec

    def run(amplitude: float) -> Dict:
        traj = simulate(amplitude * base_v0_shape, cfg, lap, params)
        row = {
            "amplitude": amplitude,
            "status": traj.status,
            "omega_hat": math.nan,
            "residual_rms": math.nan,
            "violation_time": math.nan if traj.violation_time is None else traj.violation_time,
        }
        if traj.completed and amplitude > 0:
            try:
                fit = fit_decay_rate(traj, spec, window_fraction, method, quantity, report=report)
                row["omega_hat"] = fit.omega_hat
                row["residual_rms"] = fit.residual_rms
            except DegenerateFit as exc:
                logger.warning("amplitude %.3g: no decay fit (%s)", amplitude, exc)
        return row

    with ThreadPoolExecutor(max_workers=max(1, int(jobs))) as pool:
        rows = list(pool.map(run, amplitudes))

    table = pd.DataFrame(rows, columns=SWEEP_COLUMNS)
    decaying = table[(table["status"] == COMPLETED) & (table["omega_hat"] > 0)]
    violating = table[table["status"] == PARABOLICITY_VIOLATION]
    return SweepResult(
        table=table,
        largest_decaying=float(decaying["amplitude"].max()) if not decaying.empty else None,
        smallest_violating=float(violating["amplitude"].min()) if not violating.empty else None,
    )
