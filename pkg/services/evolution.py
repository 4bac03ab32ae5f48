import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy import sparse
from scipy.sparse import linalg as spla

from config.settings import NORM_DEFAULTS, SCHEME_DEFAULTS, TRAJECTORY_COLUMNS
from services.grid import Field, SparseOperator
from services.norms import NormSpec, discrete_norm, lp_norm
from services.operators import (
    BlockOperator,
    CoefficientField,
    PhysicalParams,
    assemble_coefficient,
    lambda_pair,
    pair_regime,
)
from services.state import StateVector
from utils.errors import ConfigError, LinearSolveError, NumericalFailure, ParabolicityViolation

logger = logging.getLogger(__name__)

COMPLETED = "completed"
PARABOLICITY_VIOLATION = "parabolicity_violation"


@dataclass(frozen=True)
class SchemeConfig:
    """Time-stepping settings for one trajectory"""

    dt: float
    t_end: float
    scheme: str = SCHEME_DEFAULTS["scheme"]
    linear_solve_tol: float = SCHEME_DEFAULTS["linear_solve_tol"]
    parabolicity_margin: Optional[float] = None
    record_every: int = SCHEME_DEFAULTS["record_every"]
    nonlinear: bool = SCHEME_DEFAULTS["nonlinear"]
    norm_p: float = NORM_DEFAULTS["p"]

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ConfigError("scheme.dt", f"must be positive, got {self.dt}")
        if not (math.isfinite(self.t_end) and self.t_end > 0):
            raise ConfigError("scheme.t_end", f"must be positive, got {self.t_end}")
        if self.scheme not in SCHEME_DEFAULTS["schemes"]:
            raise ConfigError("scheme.scheme", f"expected one of {SCHEME_DEFAULTS['schemes']}, got {self.scheme!r}")
        if int(self.record_every) < 1:
            raise ConfigError("scheme.record_every", f"must be at least 1, got {self.record_every}")
        if not self.linear_solve_tol > 0:
            raise ConfigError("scheme.linear_solve_tol", f"must be positive, got {self.linear_solve_tol}")

    @classmethod
    def with_default_step(cls, lambda0: float, **kwargs) -> "SchemeConfig":
        """dt = min(1e-3, 0.1/lambda0) unless given"""
        if kwargs.get("dt") is None:
            kwargs["dt"] = min(SCHEME_DEFAULTS["dt_cap"], SCHEME_DEFAULTS["dt_factor"] / lambda0)
        kwargs.setdefault("t_end", SCHEME_DEFAULTS["t_end"])
        return cls(**kwargs)

    def margin_for(self, params: PhysicalParams) -> float:
        margin = params.default_margin() if self.parabolicity_margin is None else float(self.parabolicity_margin)
        if not 0.0 < margin < params.parabolicity_bound:
            raise ConfigError(
                "scheme.parabolicity_margin", f"must lie in (0, {params.parabolicity_bound:.6g}), got {margin}"
            )
        return margin

    def step_count(self) -> int:
        return max(1, math.ceil(self.t_end / self.dt - 1e-9))


@dataclass
class Trajectory:
    """Sampled states with their norm records and termination status"""

    times: List[float] = field(default_factory=list)
    states: List[StateVector] = field(default_factory=list)
    records: List[Dict[str, float]] = field(default_factory=list)
    status: str = COMPLETED
    violation_time: Optional[float] = None
    message: str = ""

    def __len__(self):
        return len(self.times)

    @property
    def completed(self) -> bool:
        return self.status == COMPLETED

    def series(self, name: str) -> np.ndarray:
        return np.array([record[name] for record in self.records], dtype=float)

    def to_frame(self) -> pd.DataFrame:
        """Trajectory table with the fixed CSV columns"""
        rows = [{"t": t, **{col: record[col] for col in TRAJECTORY_COLUMNS[1:]}} for t, record in zip(self.times, self.records)]
        return pd.DataFrame(rows, columns=TRAJECTORY_COLUMNS).astype(float)

    def summary(self) -> Dict:
        max_abs = self.series("max_abs_u")
        return {
            "status": self.status,
            "violation_time": self.violation_time,
            "samples": len(self),
            "t_final": self.times[-1] if self.times else None,
            "max_abs_u": float(max_abs.max()) if max_abs.size else None,
            "message": self.message,
        }


def rhs_F(v: StateVector, params: PhysicalParams) -> StateVector:
    """F(v) = (0, 2 v2^2 / (1 - 2k v1)), from (u^2)_tt = 2 u_tt u + 2 u_t^2"""
    u = v.v1.values
    node = int(np.argmax(np.abs(u)))
    if not abs(u[node]) < params.parabolicity_bound:
        raise ParabolicityViolation(node=node, value=float(u[node]), bound=params.parabolicity_bound)
    forcing = 2.0 * v.v2.values**2 / (1.0 - 2.0 * params.k * u)
    return StateVector(Field.zeros(v.grid), Field(v.grid, forcing))


def _coefficient(v: StateVector, params: PhysicalParams, margin: Optional[float], nonlinear: bool) -> CoefficientField:
    if not nonlinear:
        return CoefficientField.constant(v.grid, 1.0)
    return assemble_coefficient(v.v1, params, margin)


def _forcing(v: StateVector, params: PhysicalParams, nonlinear: bool) -> np.ndarray:
    if not nonlinear:
        return np.zeros(v.grid.size)
    return rhs_F(v, params).v2.values


def _implicit_solve(
    coeff: CoefficientField,
    lap: SparseOperator,
    params: PhysicalParams,
    theta: float,
    r1: np.ndarray,
    r2: np.ndarray,
    tol: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Solve (I + theta*A(a)) w = r for the block operator.

    The first row gives w1 = r1 + theta*w2 exactly; substituting and scaling the
    second row by 1/a leaves the symmetric positive definite N x N system
        (diag(1/a) + (theta b + theta^2 c^2) L) w2 = r2/a - theta c^2 L r1.
    """
    a = coeff.a.values
    L = lap.matrix
    c2, b = params.c**2, params.b
    matrix = (sparse.diags(1.0 / a) + (theta * b + theta**2 * c2) * L).tocsc()
    rhs = r2 / a - theta * c2 * (L @ r1)
    try:
        w2 = spla.splu(matrix).solve(rhs)
    except RuntimeError as exc:
        raise LinearSolveError(f"implicit step matrix could not be factorized: {exc}") from exc
    residual = float(np.linalg.norm(matrix @ w2 - rhs))
    if not residual <= tol * float(np.linalg.norm(rhs)):
        raise LinearSolveError(f"implicit solve residual {residual:.3e} misses tolerance {tol:.1e}")
    return r1 + theta * w2, w2


def _checked_state(
    grid, w1: np.ndarray, w2: np.ndarray, params: PhysicalParams, margin: Optional[float], nonlinear: bool
) -> StateVector:
    state = StateVector(Field(grid, w1), Field(grid, w2))
    if not state.is_finite():
        raise NumericalFailure("time step produced non-finite values")
    if nonlinear:
        bound = params.default_margin() if margin is None else margin
        node = int(np.argmax(np.abs(w1)))
        if abs(w1[node]) > bound:
            raise ParabolicityViolation(node=node, value=float(w1[node]), bound=bound)
    return state


def step_semi_implicit(
    v_n: StateVector,
    dt: float,
    lap: SparseOperator,
    params: PhysicalParams,
    margin: Optional[float] = None,
    nonlinear: bool = True,
    linear_solve_tol: float = SCHEME_DEFAULTS["linear_solve_tol"],
) -> StateVector:
    """
    One step of (I + dt A(v_n)) v_{n+1} = v_n + dt F(v_n).

    The coefficient is frozen at v_n; F is explicit. One sparse N x N solve.
    """
    coeff = _coefficient(v_n, params, margin, nonlinear)
    forcing = _forcing(v_n, params, nonlinear)
    r1 = v_n.v1.values
    r2 = v_n.v2.values + dt * forcing
    w1, w2 = _implicit_solve(coeff, lap, params, dt, r1, r2, linear_solve_tol)
    return _checked_state(v_n.grid, w1, w2, params, margin, nonlinear)


def step_imex_trapezoid(
    v_n: StateVector,
    dt: float,
    lap: SparseOperator,
    params: PhysicalParams,
    v_prev: Optional[StateVector] = None,
    margin: Optional[float] = None,
    nonlinear: bool = True,
    linear_solve_tol: float = SCHEME_DEFAULTS["linear_solve_tol"],
) -> StateVector:
    """
    Trapezoidal rule in A, coefficient and F extrapolated to the half step.

        v* = 3/2 v_n - 1/2 v_{n-1}
        (I + dt/2 A(v*)) v_{n+1} = (I - dt/2 A(v*)) v_n + dt (3/2 F(v_n) - 1/2 F(v_{n-1}))

    Without a previous state (first step) v* = v_n and F(v_n) is used.
    """
    midpoint = v_n
    forcing = _forcing(v_n, params, nonlinear)
    if v_prev is not None and nonlinear:
        u_star = 1.5 * v_n.v1.values - 0.5 * v_prev.v1.values
        midpoint = StateVector(Field(v_n.grid, u_star), v_n.v2)
        forcing = 1.5 * forcing - 0.5 * _forcing(v_prev, params, nonlinear)
    coeff = _coefficient(midpoint, params, margin, nonlinear)
    applied = BlockOperator(coeff, lap, params).apply(v_n)
    theta = 0.5 * dt
    r1 = v_n.v1.values - theta * applied.v1.values
    r2 = v_n.v2.values - theta * applied.v2.values + dt * forcing
    w1, w2 = _implicit_solve(coeff, lap, params, theta, r1, r2, linear_solve_tol)
    return _checked_state(v_n.grid, w1, w2, params, margin, nonlinear)


def acceleration(v: StateVector, params: PhysicalParams, lap: SparseOperator, nonlinear: bool = True) -> Field:
    """u_tt read off the equation: second component of -A(v) v + F(v)"""
    c2, b = params.c**2, params.b
    stiffness = lap.dot(c2 * v.v1.values + b * v.v2.values)
    if not nonlinear:
        return Field(v.grid, -stiffness)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = 1.0 / (1.0 - 2.0 * params.k * v.v1.values)
    return Field(v.grid, a * (2.0 * v.v2.values**2 - stiffness))


def _record(v: StateVector, params: PhysicalParams, lap: SparseOperator, cfg: SchemeConfig) -> Dict[str, float]:
    u = v.v1.values
    if cfg.nonlinear:
        with np.errstate(divide="ignore", invalid="ignore"):
            min_coeff = float(np.min(1.0 / (1.0 - 2.0 * params.k * u)))
    else:
        min_coeff = 1.0
    p = cfg.norm_p
    return {
        "norm_u_W2": discrete_norm(v.v1, NormSpec(p, "W2_surrogate"), lap=lap),
        "norm_ut_trace": discrete_norm(v.v2, NormSpec(p, "trace_surrogate")),
        "max_abs_u": v.v1.max_abs(),
        "min_coeff_a": min_coeff,
        "norm_utt": lp_norm(acceleration(v, params, lap, cfg.nonlinear).values, v.grid, p),
    }


def simulate(v0: StateVector, cfg: SchemeConfig, lap: SparseOperator, params: PhysicalParams) -> Trajectory:
    """
    Integrate v_t + A(v) v = F(v) from v0 up to cfg.t_end.

    Samples every cfg.record_every steps and at the final step. A parabolicity
    violation stops the run and is recorded as the trajectory status; the state
    is never clamped. Other numerical failures propagate.
    """
    margin = cfg.margin_for(params)
    trajectory = Trajectory()

    def sample(t: float, v: StateVector):
        trajectory.times.append(t)
        trajectory.states.append(v)
        trajectory.records.append(_record(v, params, lap, cfg))

    sample(0.0, v0)
    if cfg.nonlinear and v0.v1.max_abs() > margin:
        trajectory.status = PARABOLICITY_VIOLATION
        trajectory.violation_time = 0.0
        trajectory.message = f"initial sup|u|={v0.v1.max_abs():.6g} exceeds margin {margin:.6g}"
        logger.info("parabolicity violated by the initial data: %s", trajectory.message)
        return trajectory

    n_steps = cfg.step_count()
    t, v, v_prev = 0.0, v0, None
    for n in range(1, n_steps + 1):
        t_next = cfg.t_end if n == n_steps else n * cfg.dt
        dt = t_next - t
        try:
            if cfg.scheme == "imex_trapezoid":
                new = step_imex_trapezoid(
                    v, dt, lap, params, v_prev=v_prev, margin=margin,
                    nonlinear=cfg.nonlinear, linear_solve_tol=cfg.linear_solve_tol,
                )
            else:
                new = step_semi_implicit(
                    v, dt, lap, params, margin=margin,
                    nonlinear=cfg.nonlinear, linear_solve_tol=cfg.linear_solve_tol,
                )
        except ParabolicityViolation as exc:
            exc.time = t_next
            if trajectory.times[-1] != t:
                sample(t, v)
            trajectory.status = PARABOLICITY_VIOLATION
            trajectory.violation_time = t_next
            trajectory.message = str(exc)
            logger.info("stopped at step %d: %s", n, exc)
            return trajectory

        v_prev, v, t = v, new, t_next
        if n % cfg.record_every == 0 or n == n_steps:
            sample(t, v)

    logger.debug("completed %d %s steps, %d samples", n_steps, cfg.scheme, len(trajectory))
    return trajectory


def modal_exact_solution(a_j: float, params: PhysicalParams, alpha: float, beta: float, t):
    """
    Exact mode coefficient of the linear equation y'' + b a_j y' + c^2 a_j y = 0.

    Parametrization by regime (lambda_pm = lambda_pair(a_j)):
        real     y = alpha e^{-lambda_+ t} + beta e^{-lambda_- t}
        complex  y = e^{-sigma t} (alpha cos(w t) + beta sin(w t)),  lambda_pm = sigma +- i w
        double   y = (alpha + beta t) e^{-lambda t}

    Returns:
        tuple: (y, y') at t (scalars or arrays)
    """
    t = np.asarray(t, dtype=float)
    plus, minus = lambda_pair(a_j, params)
    regime = pair_regime(a_j, params)
    if regime == "double":
        lam = plus.real
        decay = np.exp(-lam * t)
        y = (alpha + beta * t) * decay
        dy = (beta - lam * (alpha + beta * t)) * decay
    elif regime == "complex":
        sigma, omega = plus.real, plus.imag
        decay = np.exp(-sigma * t)
        cos, sin = np.cos(omega * t), np.sin(omega * t)
        y = decay * (alpha * cos + beta * sin)
        dy = decay * ((omega * beta - sigma * alpha) * cos - (sigma * beta + omega * alpha) * sin)
    else:
        fast, slow = plus.real, minus.real
        y = alpha * np.exp(-fast * t) + beta * np.exp(-slow * t)
        dy = -fast * alpha * np.exp(-fast * t) - slow * beta * np.exp(-slow * t)
    if y.ndim == 0:
        return float(y), float(dy)
    return y, dy


def modal_coefficients(a_j: float, params: PhysicalParams, y0: float, y1: float) -> Tuple[float, float]:
    """(alpha, beta) of modal_exact_solution matching y(0) = y0, y'(0) = y1"""
    plus, minus = lambda_pair(a_j, params)
    regime = pair_regime(a_j, params)
    if regime == "double":
        return y0, y1 + plus.real * y0
    if regime == "complex":
        return y0, (y1 + plus.real * y0) / plus.imag
    fast, slow = plus.real, minus.real
    alpha = -(y1 + slow * y0) / (fast - slow)
    return alpha, y0 - alpha
