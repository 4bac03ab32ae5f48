import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np

from config.settings import EXIT_CODES, GRID_DEFAULTS, OUTPUT_FILES
from data.loaders import RunConfig, build_initial_state
from services.analysis import fit_decay_rate, stability_sweep
from services.evolution import SchemeConfig, Trajectory, simulate
from services.grid import Field, lambda1
from services.operators import (
    BlockOperator,
    CoefficientField,
    SpectralReport,
    assemble_coefficient,
    block_spectrum,
    discrete_spectrum_A,
    mu,
    resolvent_apply,
    spectral_bound,
)
from services.state import StateVector
from utils.cache_functions import cached_discrete_eigenvalues, cached_laplacian
from utils.errors import SingularResolvent

logger = logging.getLogger(__name__)


@dataclass
class CommandResult:
    """Main report of a command, the files it writes and its exit code"""

    command: str
    report: Dict[str, Any]
    files: Dict[str, Any] = field(default_factory=dict)
    exit_code: int = EXIT_CODES["success"]


class LabService:
    """Runs the lab commands for one validated configuration"""

    def __init__(self, config: RunConfig):
        self.config = config
        self.grid = config.grid
        self.params = config.params
        self.lap = cached_laplacian(config.grid)
        self._spectral_report: Optional[SpectralReport] = None

    def provenance(self, command: str) -> Dict[str, str]:
        return {"command": command, "config_sha256": self.config.sha256}

    def build_coefficient(self) -> CoefficientField:
        """a = 1, or a = 1/(1 - 2k u0) frozen at the initial data"""
        if self.config.section("spectrum")["coefficient"] == "unit":
            return CoefficientField.constant(self.grid, 1.0)
        margin = self.config.scheme_config(1.0).margin_for(self.params)
        return assemble_coefficient(build_initial_state(self.config).v1, self.params, margin)

    def build_spectral_report(self) -> SpectralReport:
        if self._spectral_report is None:
            self._spectral_report = block_spectrum(
                self.build_coefficient(), self.lap, self.params, self.config.section("spectrum")["n_modes"]
            )
        return self._spectral_report

    def build_scheme_config(self) -> SchemeConfig:
        """Scheme settings; the default step uses lambda0 of the unit-coefficient operator"""
        lambda0 = spectral_bound(lambda1(self.lap), self.params)
        return self.config.scheme_config(lambda0)

    def build_spectrum_A(self, coeff: CoefficientField) -> Optional[np.ndarray]:
        """Full spectrum of A_h when it is affordable: closed form for a = 1, dense otherwise"""
        if coeff.is_constant():
            return float(coeff.a.values[0]) * cached_discrete_eigenvalues(self.grid)
        if self.grid.size <= GRID_DEFAULTS["dense_eig_limit"]:
            return discrete_spectrum_A(coeff, self.lap, self.grid.size)
        return None

    def run_spectrum(self) -> CommandResult:
        report = {**self.build_spectral_report().to_dict(), **self.provenance("spectrum")}
        return CommandResult("spectrum", report, {OUTPUT_FILES["spectrum"]: report})

    def run_resolvent(self, lam: complex) -> CommandResult:
        """
        Apply the resolvent to a seeded random right-hand side and check the residual.

        Raises SingularMu when lambda b = c^2; a lambda in the spectrum is reported
        with status singular_resolvent and the numerical exit code.
        """
        lam = complex(lam)
        mu_value = mu(lam, self.params)
        tol = float(self.config.section("resolvent")["tol"])
        coeff = self.build_coefficient()
        rng = np.random.default_rng(self.config.seed)
        n = self.grid.size
        rhs = StateVector(Field(self.grid, rng.standard_normal(n)), Field(self.grid, rng.standard_normal(n)))

        report = {
            "lambda_re": lam.real,
            "lambda_im": lam.imag,
            "mu_re": mu_value.real,
            "mu_im": mu_value.imag,
            "tol": tol,
            **self.provenance("resolvent"),
        }
        try:
            v = resolvent_apply(lam, coeff, self.lap, self.params, rhs, tol=tol, spectrum_A=self.build_spectrum_A(coeff))
        except SingularResolvent as exc:
            logger.warning("%s", exc)
            report.update(residual=None, status="singular_resolvent")
            return CommandResult("resolvent", report, {OUTPUT_FILES["resolvent"]: report}, EXIT_CODES["numerical"])

        applied = BlockOperator(coeff, self.lap, self.params).apply(v)
        residual = np.concatenate(
            [lam * v.v1.values - applied.v1.values - rhs.v1.values, lam * v.v2.values - applied.v2.values - rhs.v2.values]
        )
        report.update(
            residual=float(np.linalg.norm(residual) / np.linalg.norm(rhs.stacked())),
            status="ok",
        )
        return CommandResult("resolvent", report, {OUTPUT_FILES["resolvent"]: report})

    def _simulate(self) -> Tuple[Trajectory, SchemeConfig]:
        cfg = self.build_scheme_config()
        logger.info("simulating %s with dt=%.3g up to t=%.3g", cfg.scheme, cfg.dt, cfg.t_end)
        return simulate(build_initial_state(self.config), cfg, self.lap, self.params), cfg

    def _run_summary(self, traj: Trajectory, cfg: SchemeConfig) -> Dict:
        return {
            **traj.summary(),
            "dt": cfg.dt,
            "t_end": cfg.t_end,
            "scheme": cfg.scheme,
            "nonlinear": cfg.nonlinear,
            "parabolicity_margin": cfg.margin_for(self.params),
        }

    def run_simulate(self) -> CommandResult:
        traj, cfg = self._simulate()
        summary = {**self._run_summary(traj, cfg), **self.provenance("simulate")}
        exit_code = EXIT_CODES["success"] if traj.completed else EXIT_CODES["parabolicity"]
        files = {OUTPUT_FILES["trajectory"]: traj.to_frame(), OUTPUT_FILES["summary"]: summary}
        return CommandResult("simulate", summary, files, exit_code)

    def run_decay(self) -> CommandResult:
        """Simulate, then fit the decay rate against the spectral reference values"""
        traj, cfg = self._simulate()
        report = {**self._run_summary(traj, cfg), **self.provenance("decay")}
        if not traj.completed:
            report["fit"] = None
            return CommandResult("decay", report, {OUTPUT_FILES["decay"]: report}, EXIT_CODES["parabolicity"])
        fit_section = self.config.section("fit")
        fit = fit_decay_rate(
            traj,
            self.config.norm,
            window_fraction=float(fit_section["window_fraction"]),
            method=fit_section["method"],
            quantity=fit_section["quantity"],
            report=self.build_spectral_report(),
        )
        report["fit"] = fit.to_dict()
        files = {OUTPUT_FILES["decay"]: report, OUTPUT_FILES["decay_fit"]: fit.to_frame()}
        return CommandResult("decay", report, files)

    def run_sweep(self, jobs: int = 1) -> CommandResult:
        """Amplitude sweep over the configured list; u1 keeps its ratio to u0"""
        fit_section = self.config.section("fit")
        result = stability_sweep(
            build_initial_state(self.config, u0_amplitude=1.0),
            self.config.section("sweep")["amplitudes"],
            self.build_scheme_config(),
            self.params,
            lap=self.lap,
            spec=self.config.norm,
            window_fraction=float(fit_section["window_fraction"]),
            method=fit_section["method"],
            quantity=fit_section["quantity"],
            report=self.build_spectral_report(),
            jobs=jobs,
        )
        summary = {**result.summary(), **self.provenance("sweep")}
        files = {OUTPUT_FILES["sweep"]: result.table, OUTPUT_FILES["sweep_summary"]: summary}
        return CommandResult("sweep", summary, files)
