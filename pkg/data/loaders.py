import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np
import pandas as pd

from config.settings import DEFAULT_RUN_CONFIG, FIT_DEFAULTS, SCHEME_DEFAULTS
from services.evolution import SchemeConfig
from services.grid import Domain, Field, Grid, mode_field
from services.norms import NormSpec, admissible_exponent
from services.operators import PhysicalParams
from services.state import StateVector
from utils.errors import ConfigError, DimensionMismatch
from utils.helpers import config_sha256, deep_merge

logger = logging.getLogger(__name__)

SPECTRUM_COEFFICIENTS = ["unit", "initial"]


def _finite(value, field: str) -> float:
    try:
        number = float(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(field, f"expected a number, got {value!r}") from exc
    if not math.isfinite(number):
        raise ConfigError(field, f"must be finite, got {value!r}")
    return number


def _positive_int(value, field: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ConfigError(field, f"expected a positive integer, got {value!r}")
    return value


@dataclass(frozen=True, eq=False)
class RunConfig:
    """Validated run configuration: the merged dict plus the objects built from it"""

    raw: Dict
    params: PhysicalParams
    domain: Domain
    grid: Grid
    norm: NormSpec
    base_dir: Optional[Path] = None

    @classmethod
    def from_dict(cls, data: Dict, base_dir: Optional[Path] = None) -> "RunConfig":
        """
        Merge a partial config over the defaults and validate every section.

        Args:
            data: Parsed config object (any subset of DEFAULT_RUN_CONFIG)
            base_dir: Directory that relative nodal files are resolved against

        Returns:
            RunConfig: Validated configuration
        """
        if not isinstance(data, dict):
            raise ConfigError("config", f"expected a JSON object, got {type(data).__name__}")
        raw = deep_merge(DEFAULT_RUN_CONFIG, data)

        params = PhysicalParams(**{key: _finite(raw["params"][key], f"params.{key}") for key in ("c", "b", "k")})
        lengths = raw["domain"]["lengths"]
        if not isinstance(lengths, list):
            raise ConfigError("domain.lengths", f"expected a list, got {lengths!r}")
        domain = Domain(raw["domain"]["kind"], tuple(_finite(v, "domain.lengths") for v in lengths))
        counts = raw["grid"]["n_per_axis"]
        if not isinstance(counts, list):
            raise ConfigError("grid.n_per_axis", f"expected a list, got {counts!r}")
        grid = Grid(domain, tuple(_positive_int(n, "grid.n_per_axis") for n in counts))
        norm = NormSpec(_finite(raw["norm"]["p"], "norm.p"), raw["norm"]["kind"])
        if not admissible_exponent(norm.p, domain.ndim):
            logger.warning(
                "p=%g is outside the well-posedness range p > max{n/2, n/4 + 1} for n=%d", norm.p, domain.ndim
            )

        config = cls(raw, params, domain, grid, norm, base_dir)
        config._validate_sections()
        return config

    def _validate_sections(self):
        initial = self.raw["initial"]
        if initial["nodal_file"] is None:
            mode_field(self.grid, initial["mode"])
        elif not isinstance(initial["nodal_file"], str):
            raise ConfigError("initial.nodal_file", f"expected a path, got {initial['nodal_file']!r}")
        for key in ("u0_amplitude", "u1_amplitude"):
            _finite(initial[key], f"initial.{key}")

        scheme = self.raw["scheme"]
        for key in ("t_end", "linear_solve_tol"):
            _finite(scheme[key], f"scheme.{key}")
        if scheme["dt"] is not None:
            _finite(scheme["dt"], "scheme.dt")
        if scheme["parabolicity_margin"] is not None:
            _finite(scheme["parabolicity_margin"], "scheme.parabolicity_margin")
        if not isinstance(scheme["nonlinear"], bool):
            raise ConfigError("scheme.nonlinear", f"expected true or false, got {scheme['nonlinear']!r}")
        _positive_int(scheme["record_every"], "scheme.record_every")
        # builds and checks every scheme field including m < 1/(2k)
        self.scheme_config(lambda0=SCHEME_DEFAULTS["dt_factor"] / SCHEME_DEFAULTS["dt_cap"]).margin_for(self.params)

        fit = self.raw["fit"]
        window = _finite(fit["window_fraction"], "fit.window_fraction")
        if not 0.0 < window <= 1.0:
            raise ConfigError("fit.window_fraction", f"must lie in (0, 1], got {window}")
        if fit["method"] not in FIT_DEFAULTS["methods"]:
            raise ConfigError("fit.method", f"expected one of {FIT_DEFAULTS['methods']}, got {fit['method']!r}")
        if fit["quantity"] not in FIT_DEFAULTS["quantities"]:
            raise ConfigError("fit.quantity", f"expected one of {FIT_DEFAULTS['quantities']}, got {fit['quantity']!r}")

        spectrum = self.raw["spectrum"]
        n_modes = _positive_int(spectrum["n_modes"], "spectrum.n_modes")
        if n_modes > self.grid.size:
            raise ConfigError("spectrum.n_modes", f"grid has only {self.grid.size} nodes, got {n_modes}")
        if spectrum["coefficient"] not in SPECTRUM_COEFFICIENTS:
            raise ConfigError(
                "spectrum.coefficient", f"expected one of {SPECTRUM_COEFFICIENTS}, got {spectrum['coefficient']!r}"
            )

        if not _finite(self.raw["resolvent"]["tol"], "resolvent.tol") > 0:
            raise ConfigError("resolvent.tol", "must be positive")
        amplitudes = self.raw["sweep"]["amplitudes"]
        if not isinstance(amplitudes, list) or not amplitudes:
            raise ConfigError("sweep.amplitudes", f"expected a nonempty list, got {amplitudes!r}")
        values = [_finite(a, "sweep.amplitudes") for a in amplitudes]
        if any(a < 0 for a in values) or any(b <= a for a, b in zip(values, values[1:])):
            raise ConfigError("sweep.amplitudes", "amplitudes must be nonnegative and strictly increasing")
        if self.raw["output"]["dir"] is not None and not isinstance(self.raw["output"]["dir"], str):
            raise ConfigError("output.dir", f"expected a path, got {self.raw['output']['dir']!r}")
        if isinstance(self.raw["seed"], bool) or not isinstance(self.raw["seed"], int) or self.raw["seed"] < 0:
            raise ConfigError("seed", f"expected a nonnegative integer, got {self.raw['seed']!r}")

    @property
    def seed(self) -> int:
        return self.raw["seed"]

    @property
    def sha256(self) -> str:
        return config_sha256(self.raw)

    def section(self, name: str) -> Dict:
        return self.raw[name]

    def scheme_config(self, lambda0: float) -> SchemeConfig:
        """SchemeConfig for this run; a missing dt becomes min(1e-3, 0.1/lambda0)"""
        scheme = self.raw["scheme"]
        return SchemeConfig.with_default_step(
            lambda0,
            dt=None if scheme["dt"] is None else float(scheme["dt"]),
            t_end=float(scheme["t_end"]),
            scheme=scheme["scheme"],
            linear_solve_tol=float(scheme["linear_solve_tol"]),
            parabolicity_margin=scheme["parabolicity_margin"],
            record_every=int(scheme["record_every"]),
            nonlinear=scheme["nonlinear"],
            norm_p=self.norm.p,
        )

    def nodal_path(self) -> Optional[Path]:
        nodal_file = self.raw["initial"]["nodal_file"]
        if nodal_file is None:
            return None
        path = Path(nodal_file)
        if not path.is_absolute() and self.base_dir is not None:
            path = self.base_dir / path
        return path


def load_run_config(path: Optional[str] = None) -> RunConfig:
    """
    Load a JSON run configuration.

    Args:
        path: Config file; None gives the defaults

    Returns:
        RunConfig: Validated configuration
    """
    if path is None:
        return RunConfig.from_dict({})
    config_path = Path(path)
    try:
        text = config_path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("config", f"cannot read {config_path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"malformed JSON in {config_path} at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    logger.info("loaded run config from %s", config_path)
    return RunConfig.from_dict(data, base_dir=config_path.parent)


def load_nodal_values(path: Path, grid: Grid) -> Tuple[np.ndarray, np.ndarray]:
    """
    Read nodal initial data (u0, u1) for the interior nodes of a grid.

    CSV files need a u0 column and may carry u1; JSON files hold {"u0": [...], "u1": [...]}.
    Values are listed in C-order (x slowest); a missing u1 means zero.

    Args:
        path: CSV or JSON file
        grid: Grid the values belong to

    Returns:
        tuple: (u0, u1) arrays of length grid.size
    """
    try:
        if path.suffix.lower() == ".json":
            data = json.loads(path.read_text(encoding="utf-8"))
            if not isinstance(data, dict):
                raise ConfigError("initial.nodal_file", "JSON nodal file must hold an object")
            u0 = data.get("u0")
            u1 = data.get("u1")
        else:
            frame = pd.read_csv(path, float_precision="round_trip")
            u0 = frame["u0"].to_numpy() if "u0" in frame.columns else None
            u1 = frame["u1"].to_numpy() if "u1" in frame.columns else None
    except (OSError, ValueError, pd.errors.ParserError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("initial.nodal_file", f"cannot read {path}: {exc}") from exc

    if u0 is None:
        raise ConfigError("initial.nodal_file", f"{path} has no u0 values")
    u0 = np.asarray(u0, dtype=float)
    u1 = np.zeros(grid.size) if u1 is None else np.asarray(u1, dtype=float)
    for name, values in (("u0", u0), ("u1", u1)):
        if values.shape != (grid.size,):
            raise DimensionMismatch(f"{name} in {path} has {values.size} values, grid has {grid.size} nodes")
        if not np.all(np.isfinite(values)):
            raise ConfigError("initial.nodal_file", f"{name} in {path} holds non-finite values")
    return u0, u1


def initial_shape(config: RunConfig) -> StateVector:
    """Unscaled initial data: the sine mode in both components, or the nodal file values"""
    nodal_path = config.nodal_path()
    if nodal_path is None:
        shape = mode_field(config.grid, config.section("initial")["mode"])
        return StateVector(shape, shape)
    u0, u1 = load_nodal_values(nodal_path, config.grid)
    return StateVector(Field(config.grid, u0), Field(config.grid, u1))


def build_initial_state(config: RunConfig, u0_amplitude: Optional[float] = None) -> StateVector:
    """
    Initial state (u0_amplitude * shape_u0, u1_amplitude * shape_u1).

    Args:
        config: Validated run configuration
        u0_amplitude: Override for the u0 amplitude; u1 is rescaled by the same factor

    Returns:
        StateVector: Initial data on the config grid
    """
    initial = config.section("initial")
    shape = initial_shape(config)
    a0 = float(initial["u0_amplitude"])
    a1 = float(initial["u1_amplitude"])
    if u0_amplitude is not None:
        # keep the u1/u0 ratio of the config
        a1 = a1 * float(u0_amplitude) / a0 if a0 != 0 else a1
        a0 = float(u0_amplitude)
    return StateVector(a0 * shape.v1, a1 * shape.v2)
