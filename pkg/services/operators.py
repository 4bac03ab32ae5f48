import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterable, Optional, Tuple

import numpy as np
import scipy.linalg
from scipy import sparse
from scipy.sparse import linalg as spla

from config.settings import GRID_DEFAULTS, SCHEME_DEFAULTS, SOLVER_DEFAULTS
from services.grid import Field, Grid, SparseOperator, analytic_eigenpairs, lambda1
from services.state import StateVector
from utils.errors import (
    ConfigError,
    ConvergenceError,
    DimensionMismatch,
    ParabolicityViolation,
    SingularMu,
    SingularResolvent,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PhysicalParams:
    """Sound speed c, diffusivity of sound b and nonlinearity parameter k"""

    c: float
    b: float
    k: float

    def __post_init__(self):
        for name in ("c", "b", "k"):
            value = float(getattr(self, name))
            if not math.isfinite(value) or value <= 0:
                raise ConfigError(f"params.{name}", f"must be finite and positive, got {value}")
            object.__setattr__(self, name, value)

    @property
    def parabolicity_bound(self) -> float:
        """1/(2k): sup|u| must stay below this for 1 - 2ku > 0"""
        return 1.0 / (2.0 * self.k)

    def default_margin(self) -> float:
        return SCHEME_DEFAULTS["margin_fraction"] * self.parabolicity_bound


@dataclass(frozen=True, eq=False)
class CoefficientField:
    """a(x) = 1/(1 - 2k u(x)) together with its recorded lower bound a0"""

    a: Field
    a0: float

    @classmethod
    def constant(cls, grid: Grid, value: float = 1.0) -> "CoefficientField":
        if value <= 0:
            raise ConfigError("coeff", f"coefficient must be positive, got {value}")
        return cls(Field.constant(grid, value), float(value))

    @property
    def grid(self) -> Grid:
        return self.a.grid

    def is_constant(self) -> bool:
        return bool(np.ptp(self.a.values) == 0.0)


def assemble_coefficient(u: Field, params: PhysicalParams, margin: Optional[float] = None) -> CoefficientField:
    """
    Nodewise a(x) = 1/(1 - 2k u(x)).

    Args:
        u: Current v1 = u field
        params: Physical parameters
        margin: Parabolicity margin m in (0, 1/(2k)); defaults to 0.9/(2k)

    Returns:
        CoefficientField: a and its minimum a0

    Raises:
        ParabolicityViolation: when sup|u| > m, carrying the offending node and value
    """
    margin = params.default_margin() if margin is None else float(margin)
    if not 0.0 < margin < params.parabolicity_bound:
        raise ConfigError(
            "scheme.parabolicity_margin", f"must lie in (0, {params.parabolicity_bound:.6g}), got {margin}"
        )
    values = np.asarray(u.values)
    if np.iscomplexobj(values):
        raise ConfigError("u", "the coefficient is only defined for real fields")
    node = int(np.argmax(np.abs(values)))
    if not abs(values[node]) <= margin:
        raise ParabolicityViolation(node=node, value=float(values[node]), bound=margin)
    a = 1.0 / (1.0 - 2.0 * params.k * values)
    return CoefficientField(Field(u.grid, a), float(np.min(a)))


def _check_dimension(coeff: CoefficientField, lap: SparseOperator, size: int):
    if not coeff.grid.size == lap.dimension == size:
        raise DimensionMismatch(
            f"coefficient ({coeff.grid.size}), operator ({lap.dimension}) and field ({size}) sizes differ"
        )


def apply_A(coeff: CoefficientField, lap: SparseOperator, u: Field) -> Field:
    """A u = a(x) * (-Delta_h u), nodewise"""
    _check_dimension(coeff, lap, u.grid.size)
    return Field(u.grid, coeff.a.values * lap.dot(u.values))


@dataclass(frozen=True, eq=False)
class BlockOperator:
    """The discrete block operator [[0, -I], [c^2 A, b A]] acting on (v1, v2)"""

    coeff: CoefficientField
    lap: SparseOperator
    params: PhysicalParams

    def __post_init__(self):
        _check_dimension(self.coeff, self.lap, self.lap.dimension)

    @property
    def dimension(self) -> int:
        return self.lap.dimension

    def A_matrix(self) -> sparse.csr_matrix:
        return sparse.csr_matrix(sparse.diags(self.coeff.a.values) @ self.lap.matrix)

    def apply(self, v: StateVector) -> StateVector:
        if v.grid.size != self.dimension:
            raise DimensionMismatch(f"state has {v.grid.size} nodes, operator dimension is {self.dimension}")
        c2, b = self.params.c**2, self.params.b
        w2 = self.coeff.a.values * self.lap.dot(c2 * v.v1.values + b * v.v2.values)
        return StateVector(-v.v2, Field(v.grid, w2))

    def assemble(self) -> sparse.csr_matrix:
        """Explicit 2N x 2N sparse matrix, for oracles"""
        scaling, constant = self.factorized()
        return (scaling @ constant).tocsr()

    def factorized(self) -> Tuple[sparse.csr_matrix, sparse.csr_matrix]:
        """(diag(1, a), [[0, -I], [c^2 L, b L]]): coefficient multiplication times a constant block"""
        n = self.dimension
        scaling = sparse.block_diag([sparse.identity(n), sparse.diags(self.coeff.a.values)], format="csr")
        L = self.lap.matrix
        constant = sparse.bmat(
            [
                [sparse.csr_matrix((n, n)), -sparse.identity(n, format="csr")],
                [self.params.c**2 * L, self.params.b * L],
            ],
            format="csr",
        )
        return scaling, constant


def apply_block(op: BlockOperator, v: StateVector) -> StateVector:
    """(w1, w2) = (-v2, c^2 A v1 + b A v2)"""
    return op.apply(v)


def mu(lam: complex, params: PhysicalParams, tol: Optional[float] = None) -> complex:
    """mu(lambda) = lambda^2 / (lambda b - c^2)"""
    tol = SOLVER_DEFAULTS["mu_tol"] if tol is None else tol
    lam = complex(lam)
    denominator = lam * params.b - params.c**2
    if abs(denominator) <= tol * (1.0 + abs(lam)):
        raise SingularMu(f"lambda*b - c^2 = {denominator:.3g} vanishes at lambda={lam}")
    return lam**2 / denominator


def _discriminant(a: float, params: PhysicalParams) -> Tuple[float, float, bool]:
    half = a * params.b / 2.0
    disc = half**2 - a * params.c**2
    double = abs(disc) <= SOLVER_DEFAULTS["double_root_rtol"] * half**2
    return half, disc, double


def pair_regime(a: float, params: PhysicalParams) -> str:
    """'complex', 'real' or 'double' according to the sign of a^2 b^2/4 - a c^2"""
    _, disc, double = _discriminant(a, params)
    if double:
        return "double"
    return "complex" if disc < 0 else "real"


def lambda_pair(a: float, params: PhysicalParams) -> Tuple[complex, complex]:
    """
    Both roots of mu(lambda) = a, i.e. lambda^2 - a b lambda + a c^2 = 0.

    Returns (lambda_plus, lambda_minus) = ab/2 +- sqrt(a^2 b^2/4 - a c^2). In the
    real regime the smaller root is taken from the product of roots a c^2 so it
    keeps full precision for large a.
    """
    if not a > 0:
        raise ConfigError("a", f"mode eigenvalue must be positive, got {a}")
    half, disc, double = _discriminant(a, params)
    if double:
        return complex(half), complex(half)
    if disc < 0:
        imag = math.sqrt(-disc)
        return complex(half, imag), complex(half, -imag)
    plus = half + math.sqrt(disc)
    return complex(plus), complex(a * params.c**2 / plus)


def spectral_bound(lambda1_A: float, params: PhysicalParams) -> float:
    """lambda0 = min{(b/2) lambda1(A), c^2/b}"""
    if not lambda1_A > 0:
        raise ConfigError("lambda1_A", f"must be positive, got {lambda1_A}")
    return min(params.b / 2.0 * lambda1_A, params.c**2 / params.b)


def in_resolvent_set(lam: complex, spectrum_A: Iterable[float], params: PhysicalParams, tol: float) -> bool:
    """True iff |lambda b - c^2| > tol and mu(lambda) keeps distance > tol from spectrum_A"""
    spectrum = np.asarray(list(spectrum_A), dtype=float)
    if spectrum.size == 0:
        raise ConfigError("spectrum_A", "spectrum must be nonempty")
    lam = complex(lam)
    denominator = lam * params.b - params.c**2
    if abs(denominator) <= tol:
        return False
    value = lam**2 / denominator
    return bool(np.min(np.abs(value - spectrum)) > tol)


def _block_residual(lam, block: BlockOperator, v: StateVector, rhs: StateVector) -> np.ndarray:
    applied = block.apply(v)
    return np.concatenate(
        [
            lam * v.v1.values - applied.v1.values - rhs.v1.values,
            lam * v.v2.values - applied.v2.values - rhs.v2.values,
        ]
    )


def resolvent_apply(
    lam: complex,
    coeff: CoefficientField,
    lap: SparseOperator,
    params: PhysicalParams,
    rhs: StateVector,
    tol: Optional[float] = None,
    spectrum_A: Optional[Iterable[float]] = None,
) -> StateVector:
    """
    Solve (lambda - A_h) v = rhs through R_lambda = (-lambda^2 I + (lambda b - c^2) A)^{-1}.

    Uses the block inverse
        [[-R (lambda - bA),              R        ],
         [I + lambda R (lambda - bA),   -lambda R ]]
    so that only N-dimensional systems are solved: one factorization of
    R_lambda^{-1}, two solves with it (plus two more for one refinement sweep
    when the first residual misses tol).

    Args:
        lam: Spectral parameter
        coeff: Coefficient field a(x)
        lap: -Delta_h
        params: Physical parameters
        rhs: Right-hand side (f1, f2)
        tol: Relative residual tolerance
        spectrum_A: Optional discrete spectrum of A_h, checked with in_resolvent_set before solving

    Returns:
        StateVector: Complex-valued solution v

    Raises:
        SingularMu: lambda b = c^2
        SingularResolvent: lambda is numerically in the spectrum of the block operator
    """
    tol = SOLVER_DEFAULTS["resolvent_tol"] if tol is None else tol
    lam = complex(lam)
    mu(lam, params)  # raises SingularMu on the excluded line
    _check_dimension(coeff, lap, rhs.grid.size)
    if spectrum_A is not None and not in_resolvent_set(lam, spectrum_A, params, SOLVER_DEFAULTS["spectrum_tol"]):
        raise SingularResolvent(f"mu({lam}) lies on the spectrum of A_h")

    block = BlockOperator(coeff, lap, params)
    A = block.A_matrix().astype(complex)
    n = block.dimension
    kernel = -(lam**2) * sparse.identity(n, dtype=complex, format="csc") + (lam * params.b - params.c**2) * A
    try:
        factor = spla.splu(kernel.tocsc())
    except RuntimeError as exc:
        raise SingularResolvent(f"R_lambda is singular at lambda={lam}: {exc}") from exc

    def solve(f1: np.ndarray, f2: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        g = factor.solve(lam * f1 - params.b * (A @ f1))
        h = factor.solve(f2)
        return -g + h, f1 + lam * g - lam * h

    f1 = np.asarray(rhs.v1.values, dtype=complex)
    f2 = np.asarray(rhs.v2.values, dtype=complex)
    rhs_norm = float(np.linalg.norm(np.concatenate([f1, f2])))
    grid = rhs.grid
    if rhs_norm == 0.0:
        return StateVector(Field(grid, np.zeros(n, dtype=complex)), Field(grid, np.zeros(n, dtype=complex)))

    v1, v2 = solve(f1, f2)
    v = StateVector(Field(grid, v1), Field(grid, v2))
    residual = _block_residual(lam, block, v, rhs)
    if np.linalg.norm(residual) > tol * rhs_norm and np.all(np.isfinite(residual)):
        d1, d2 = solve(-residual[:n], -residual[n:])
        v = StateVector(Field(grid, v1 + d1), Field(grid, v2 + d2))
        residual = _block_residual(lam, block, v, rhs)

    relative = float(np.linalg.norm(residual)) / rhs_norm
    gain = float(np.linalg.norm(v.stacked())) / rhs_norm
    logger.debug("resolvent at lambda=%s: relative residual %.3e, gain %.3e", lam, relative, gain)
    if not math.isfinite(relative) or relative > tol or gain > SOLVER_DEFAULTS["resolvent_max_gain"]:
        raise SingularResolvent(
            f"lambda={lam} is numerically in the spectrum (residual {relative:.3e}, gain {gain:.3e})"
        )
    return v


def discrete_spectrum_A(coeff: CoefficientField, lap: SparseOperator, count: int) -> np.ndarray:
    """
    Smallest `count` eigenvalues of A_h = diag(a) (-Delta_h), increasing.

    A_h is similar to the symmetric D^{1/2} L D^{1/2} (D = diag(a)), which is what
    gets diagonalized: dense eigh below the dense limit, shift-invert ARPACK above.
    """
    n = lap.dimension
    _check_dimension(coeff, lap, n)
    if not 1 <= count <= n:
        raise ConfigError("spectrum.n_modes", f"expected 1 <= n_modes <= {n}, got {count}")
    root = sparse.diags(np.sqrt(coeff.a.values))
    symmetric = (root @ lap.matrix @ root).tocsc()
    if n <= GRID_DEFAULTS["dense_eig_limit"] or count >= n - 1:
        values = scipy.linalg.eigh(symmetric.toarray(), eigvals_only=True, subset_by_index=[0, count - 1])
    else:
        try:
            values = spla.eigsh(symmetric, k=count, sigma=0.0, which="LM", return_eigenvectors=False)
        except spla.ArpackNoConvergence as exc:
            raise ConvergenceError(f"ARPACK did not converge for {count} modes: {exc}") from exc
    return np.sort(np.asarray(values, dtype=float))


@dataclass(frozen=True)
class ModePair:
    """Eigenvalue pair of the block operator belonging to one eigenvalue a_j of A_h"""

    a_j: float
    re_plus: float
    im_plus: float
    re_minus: float
    im_minus: float
    regime: str

    @classmethod
    def from_eigenvalue(cls, a_j: float, params: PhysicalParams) -> "ModePair":
        plus, minus = lambda_pair(a_j, params)
        return cls(
            float(a_j), plus.real, plus.imag, minus.real, minus.imag, pair_regime(a_j, params)
        )

    @property
    def plus(self) -> complex:
        return complex(self.re_plus, self.im_plus)

    @property
    def minus(self) -> complex:
        return complex(self.re_minus, self.im_minus)

    def to_dict(self) -> Dict:
        return {
            "a_j": self.a_j,
            "re_plus": self.re_plus,
            "im_plus": self.im_plus,
            "re_minus": self.re_minus,
            "im_minus": self.im_minus,
            "regime": self.regime,
        }


@dataclass(frozen=True)
class SpectralReport:
    """lambda1(A_h), lambda0, per-mode eigenvalue pairs and the spectral abscissa of -A_h"""

    lambda1_A: float
    lambda0: float
    modes: Tuple[ModePair, ...]
    spectral_abscissa: float
    lambda1_continuum: Optional[float] = None
    lambda0_continuum: Optional[float] = None

    def eigenvalues(self) -> np.ndarray:
        return np.array([z for mode in self.modes for z in (mode.plus, mode.minus)])

    @property
    def dominant_regime(self) -> str:
        return self.modes[0].regime

    def to_dict(self) -> Dict:
        return {
            "lambda1_A": self.lambda1_A,
            "lambda0": self.lambda0,
            "modes": [mode.to_dict() for mode in self.modes],
            "spectral_abscissa": self.spectral_abscissa,
            "lambda1_continuum": self.lambda1_continuum,
            "lambda0_continuum": self.lambda0_continuum,
            # every exponential weight omega in [0, lambda0) is admissible
            "decay_rate_admissible_max": self.lambda0,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "SpectralReport":
        return cls(
            lambda1_A=data["lambda1_A"],
            lambda0=data["lambda0"],
            modes=tuple(ModePair(**mode) for mode in data["modes"]),
            spectral_abscissa=data["spectral_abscissa"],
            lambda1_continuum=data.get("lambda1_continuum"),
            lambda0_continuum=data.get("lambda0_continuum"),
        )


def block_spectrum(
    coeff: CoefficientField, lap: SparseOperator, params: PhysicalParams, n_modes: int
) -> SpectralReport:
    """
    Spectral report of the discrete block operator.

    Every eigenvector of A_h with eigenvalue a_j spans an invariant plane on which
    the block operator acts as [[0, -1], [c^2 a_j, b a_j]], so the spectrum is the
    union of lambda_pair(a_j) for any positive coefficient field.
    """
    lam1 = lambda1(lap, coeff.a)
    eigenvalues = discrete_spectrum_A(coeff, lap, n_modes)
    modes = tuple(ModePair.from_eigenvalue(a_j, params) for a_j in eigenvalues)
    abscissa = -min(min(mode.re_plus, mode.re_minus) for mode in modes)

    lam1_continuum = lam0_continuum = None
    if coeff.is_constant():
        domain = coeff.grid.domain
        (first, _), = analytic_eigenpairs(domain, coeff.grid, 1)
        lam1_continuum = float(coeff.a.values[0]) * first
        lam0_continuum = spectral_bound(lam1_continuum, params)

    report = SpectralReport(
        lambda1_A=lam1,
        lambda0=spectral_bound(lam1, params),
        modes=modes,
        spectral_abscissa=abscissa,
        lambda1_continuum=lam1_continuum,
        lambda0_continuum=lam0_continuum,
    )
    logger.info("lambda1(A_h)=%.12g lambda0=%.12g over %d modes", report.lambda1_A, report.lambda0, n_modes)
    return report
