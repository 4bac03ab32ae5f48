import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import sparse

from config.settings import NORM_DEFAULTS
from services.grid import Field, Grid, SparseOperator
from utils.cache_functions import cached_gradient, cached_laplacian
from utils.errors import ConfigError, DimensionMismatch

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NormSpec:
    """
    Discrete stand-ins for the solution norms.

    kind:
        Lp              ||u||_p
        W2_surrogate    ||u||_p + ||Delta_h u||_p          (for u in W^2_p)
        trace_surrogate ||w||_p + ||grad_h w||_p           (for u_t in W^{2-2/p}_p)

    with ||u||_p = (sum_x h^d |u(x)|^p)^(1/p). The trace surrogate is first order
    (2 - 2/p = 1 at p = 2); no norm equivalence is claimed for other p.
    """

    p: float = NORM_DEFAULTS["p"]
    kind: str = "Lp"

    def __post_init__(self):
        p = float(self.p)
        if not NORM_DEFAULTS["p_min"] <= p <= NORM_DEFAULTS["p_max"]:
            raise ConfigError("norm.p", f"expected p in [{NORM_DEFAULTS['p_min']}, {NORM_DEFAULTS['p_max']}], got {p}")
        if self.kind not in NORM_DEFAULTS["kinds"]:
            raise ConfigError("norm.kind", f"expected one of {NORM_DEFAULTS['kinds']}, got {self.kind!r}")
        if p == 1.5:
            logger.warning("p = 3/2: the continuous trace space is exceptional here; the surrogate is used as is")
        object.__setattr__(self, "p", p)

    def with_kind(self, kind: str) -> "NormSpec":
        return NormSpec(self.p, kind)


def admissible_exponent(p: float, ndim: int) -> bool:
    """Well-posedness range p > max{n/2, n/4 + 1}, p != 3/2"""
    return p > max(ndim / 2.0, ndim / 4.0 + 1.0) and p != 1.5


def lp_norm(values: np.ndarray, grid: Grid, p: float) -> float:
    """(sum h^d |v|^p)^(1/p) over any nodal or edge array on the grid"""
    magnitude = np.abs(np.asarray(values))
    if p == 2.0:
        return float(np.sqrt(grid.cell_volume * np.dot(magnitude, magnitude)))
    return float((grid.cell_volume * np.sum(magnitude**p)) ** (1.0 / p))


def discrete_norm(
    u: Field,
    spec: NormSpec,
    lap: Optional[SparseOperator] = None,
    grad: Optional[sparse.spmatrix] = None,
) -> float:
    """
    Discrete norm of a field according to spec.

    Args:
        u: Field to measure
        spec: Exponent and kind
        lap: -Delta_h for the grid (cached default)
        grad: Edge gradient for the grid (cached default)

    Returns:
        float: Nonnegative norm value
    """
    grid = u.grid
    base = lp_norm(u.values, grid, spec.p)
    if spec.kind == "Lp":
        return base
    if spec.kind == "W2_surrogate":
        lap = cached_laplacian(grid) if lap is None else lap
        if lap.dimension != grid.size:
            raise DimensionMismatch("Laplacian does not match the field's grid")
        return base + lp_norm(lap.dot(u.values), grid, spec.p)
    grad = cached_gradient(grid) if grad is None else grad
    if grad.shape[1] != grid.size:
        raise DimensionMismatch("gradient does not match the field's grid")
    return base + lp_norm(grad @ u.values, grid, spec.p)
