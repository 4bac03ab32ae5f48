import heapq
import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from config.settings import GRID_DEFAULTS, SOLVER_DEFAULTS
from utils.errors import ConfigError, ConvergenceError, DimensionMismatch

logger = logging.getLogger(__name__)

DOMAIN_KINDS = {"interval": 1, "rectangle": 2}


@dataclass(frozen=True)
class Domain:
    """Interval (0, L) or rectangle (0, Lx) x (0, Ly)"""

    kind: str
    lengths: Tuple[float, ...]

    def __post_init__(self):
        if not isinstance(self.kind, str) or self.kind not in DOMAIN_KINDS:
            raise ConfigError("domain.kind", f"expected one of {sorted(DOMAIN_KINDS)}, got {self.kind!r}")
        lengths = tuple(float(length) for length in self.lengths)
        if len(lengths) != DOMAIN_KINDS[self.kind]:
            raise ConfigError(
                "domain.lengths", f"{self.kind} needs {DOMAIN_KINDS[self.kind]} length(s), got {len(lengths)}"
            )
        if any(not math.isfinite(length) or length <= 0 for length in lengths):
            raise ConfigError("domain.lengths", f"lengths must be finite and positive, got {lengths}")
        object.__setattr__(self, "lengths", lengths)

    @classmethod
    def interval(cls, length: float = math.pi) -> "Domain":
        return cls("interval", (length,))

    @classmethod
    def rectangle(cls, lx: float = math.pi, ly: float = math.pi) -> "Domain":
        return cls("rectangle", (lx, ly))

    @property
    def ndim(self) -> int:
        return DOMAIN_KINDS[self.kind]


@dataclass(frozen=True)
class Grid:
    """Uniform grid of interior nodes; Dirichlet boundary nodes are implied, never stored"""

    domain: Domain
    n_per_axis: Tuple[int, ...]

    def __post_init__(self):
        counts = tuple(int(n) for n in self.n_per_axis)
        if len(counts) != self.domain.ndim:
            raise ConfigError(
                "grid.n_per_axis", f"{self.domain.kind} needs {self.domain.ndim} point count(s), got {len(counts)}"
            )
        minimum = GRID_DEFAULTS["min_points_per_axis"]
        if any(n < minimum for n in counts):
            raise ConfigError("grid.n_per_axis", f"need at least {minimum} interior points per axis, got {counts}")
        object.__setattr__(self, "n_per_axis", counts)

    @property
    def ndim(self) -> int:
        return self.domain.ndim

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.n_per_axis

    @property
    def size(self) -> int:
        return int(np.prod(self.n_per_axis))

    @property
    def h_per_axis(self) -> Tuple[float, ...]:
        return tuple(length / (n + 1) for length, n in zip(self.domain.lengths, self.n_per_axis))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h_per_axis))

    def coordinates(self) -> List[np.ndarray]:
        """Interior node coordinates per axis"""
        return [h * np.arange(1, n + 1) for h, n in zip(self.h_per_axis, self.n_per_axis)]

    def mesh(self) -> List[np.ndarray]:
        """Flattened nodal coordinates (ij indexing, x varies slowest)"""
        return [axis.ravel() for axis in np.meshgrid(*self.coordinates(), indexing="ij")]


@dataclass(frozen=True, eq=False)
class Field:
    """Nodal values on the interior nodes of a grid (read-only)"""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values)
        if values.shape == self.grid.shape:
            values = values.ravel()
        if values.shape != (self.grid.size,):
            raise DimensionMismatch(f"field has {values.size} values, grid has {self.grid.size} nodes")
        if not (np.issubdtype(values.dtype, np.floating) or np.issubdtype(values.dtype, np.complexfloating)):
            values = values.astype(float)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, grid: Grid) -> "Field":
        return cls(grid, np.zeros(grid.size))

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "Field":
        return cls(grid, np.full(grid.size, float(value)))

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    def check_grid(self, other: "Field"):
        if self.grid != other.grid:
            raise DimensionMismatch("fields live on different grids")

    def __add__(self, other: "Field") -> "Field":
        self.check_grid(other)
        return Field(self.grid, self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        self.check_grid(other)
        return Field(self.grid, self.values - other.values)

    def __mul__(self, scalar) -> "Field":
        return Field(self.grid, scalar * self.values)

    __rmul__ = __mul__

    def __neg__(self) -> "Field":
        return Field(self.grid, -self.values)


@dataclass(frozen=True, eq=False)
class SparseOperator:
    """Square sparse matrix with a symmetry flag"""

    matrix: sparse.csr_matrix
    symmetric: bool = False

    def __post_init__(self):
        matrix = sparse.csr_matrix(self.matrix)
        rows, cols = matrix.shape
        if rows != cols:
            raise DimensionMismatch(f"operator must be square, got {rows}x{cols}")
        object.__setattr__(self, "matrix", matrix)

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def dot(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        if x.shape[0] != self.dimension:
            raise DimensionMismatch(f"operator dimension {self.dimension} does not match vector length {x.shape[0]}")
        return self.matrix @ x

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()


def _second_difference(n: int, h: float) -> sparse.csr_matrix:
    main = np.full(n, 2.0 / h**2)
    off = np.full(n - 1, -1.0 / h**2)
    return sparse.diags([off, main, off], [-1, 0, 1], format="csr")


def _forward_difference(n: int, h: float) -> sparse.csr_matrix:
    # n + 1 edges, the first and last touching the boundary
    ones = np.ones(n)
    return sparse.diags([ones, -ones], [0, -1], shape=(n + 1, n), format="csr") / h


def build_dirichlet_laplacian(grid: Grid) -> SparseOperator:
    """
    Assemble the positive discrete Dirichlet Laplacian -Delta_h.

    3-point stencil on intervals, 5-point stencil on rectangles; boundary rows
    are eliminated, so the matrix acts on interior nodes only and is symmetric
    positive definite.

    Args:
        grid: Interior-node grid

    Returns:
        SparseOperator: -Delta_h with the symmetric flag set
    """
    hx = grid.h_per_axis[0]
    nx = grid.n_per_axis[0]
    if grid.ndim == 1:
        matrix = _second_difference(nx, hx)
    else:
        hy = grid.h_per_axis[1]
        ny = grid.n_per_axis[1]
        matrix = sparse.kron(_second_difference(nx, hx), sparse.identity(ny)) + sparse.kron(
            sparse.identity(nx), _second_difference(ny, hy)
        )
    logger.debug("assembled Dirichlet Laplacian on %s grid, N=%d", grid.n_per_axis, grid.size)
    return SparseOperator(matrix, symmetric=True)


def build_gradient(grid: Grid) -> sparse.csr_matrix:
    """Forward-difference gradient onto grid edges (boundary edges included); G^T G = -Delta_h"""
    hx = grid.h_per_axis[0]
    nx = grid.n_per_axis[0]
    if grid.ndim == 1:
        matrix = _forward_difference(nx, hx)
    else:
        hy = grid.h_per_axis[1]
        ny = grid.n_per_axis[1]
        matrix = sparse.vstack(
            [
                sparse.kron(_forward_difference(nx, hx), sparse.identity(ny)),
                sparse.kron(sparse.identity(nx), _forward_difference(ny, hy)),
            ]
        )
    return sparse.csr_matrix(matrix)


def _mode_indices(domain: Domain, count: int) -> List[Tuple[float, Tuple[int, ...]]]:
    """Smallest continuum eigenvalues with their sine mode indices, in increasing order"""
    if domain.ndim == 1:
        (length,) = domain.lengths
        return [((j * math.pi / length) ** 2, (j,)) for j in range(1, count + 1)]

    lx, ly = domain.lengths

    def value(i, j):
        return (i * math.pi / lx) ** 2 + (j * math.pi / ly) ** 2

    # lazy enumeration of the tensor-sum lattice
    heap = [(value(1, 1), 1, 1)]
    seen = {(1, 1)}
    modes = []
    while len(modes) < count:
        val, i, j = heapq.heappop(heap)
        modes.append((val, (i, j)))
        for ni, nj in ((i + 1, j), (i, j + 1)):
            if (ni, nj) not in seen:
                seen.add((ni, nj))
                heapq.heappush(heap, (value(ni, nj), ni, nj))
    return modes


def mode_field(grid: Grid, index) -> Field:
    """Sampled Dirichlet sine mode; index is an int on intervals and a pair on rectangles"""
    indices = tuple(index) if isinstance(index, (list, tuple, np.ndarray)) else (index,)
    if any(isinstance(j, (bool, np.bool_)) or not isinstance(j, (int, np.integer)) for j in indices):
        raise ConfigError("initial.mode", f"mode indices must be integers, got {index!r}")
    if len(indices) != grid.ndim:
        raise ConfigError("initial.mode", f"mode index {index!r} does not match a {grid.ndim}D grid")
    if any(int(j) < 1 for j in indices):
        raise ConfigError("initial.mode", f"mode indices start at 1, got {index!r}")
    values = np.ones(grid.size)
    for j, length, coords in zip(indices, grid.domain.lengths, grid.mesh()):
        values = values * np.sin(int(j) * math.pi * coords / length)
    return Field(grid, values)


def analytic_eigenpairs(domain: Domain, grid: Grid, count: int) -> List[Tuple[float, Field]]:
    """
    Continuum Dirichlet eigenpairs of -Delta sampled on the grid.

    Args:
        domain: Interval or rectangle
        grid: Grid on that domain used to sample the eigenfunctions
        count: Number of pairs, smallest eigenvalues first

    Returns:
        list: (eigenvalue, eigenfield) tuples in increasing eigenvalue order
    """
    if grid.domain != domain:
        raise DimensionMismatch("grid does not live on the requested domain")
    cap = GRID_DEFAULTS["max_analytic_modes"]
    if count < 1 or count > cap:
        raise ConfigError("count", f"expected 1 <= count <= {cap}, got {count}")
    return [(value, mode_field(grid, index)) for value, index in _mode_indices(domain, count)]


def discrete_dirichlet_eigenvalues(grid: Grid, count: Optional[int] = None) -> np.ndarray:
    """Closed-form eigenvalues (4/h^2) sin^2(j pi h / 2L) of -Delta_h, tensor sums on rectangles"""
    per_axis = [
        (4.0 / h**2) * np.sin(np.arange(1, n + 1) * math.pi * h / (2.0 * length)) ** 2
        for h, n, length in zip(grid.h_per_axis, grid.n_per_axis, grid.domain.lengths)
    ]
    values = per_axis[0] if grid.ndim == 1 else np.add.outer(per_axis[0], per_axis[1]).ravel()
    values = np.sort(values)
    return values if count is None else values[:count]


def lambda1(
    op: SparseOperator,
    coeff: Optional[Field] = None,
    tol: Optional[float] = None,
    max_iter: Optional[int] = None,
) -> float:
    """
    Smallest eigenvalue of A u = -a(x) Delta_h u by inverse power iteration.

    The problem is solved in its symmetric generalized form L u = lambda M u with
    M = diag(1/a), i.e. in the weighted inner product <u, v>_{1/a}; L is
    factorized once.

    Args:
        op: Symmetric positive definite -Delta_h
        coeff: Optional strictly positive coefficient field a(x); a = 1 when omitted
        tol: Relative change of the Rayleigh quotient that ends the iteration
        max_iter: Iteration cap

    Returns:
        float: The smallest eigenvalue
    """
    tol = SOLVER_DEFAULTS["lambda1_tol"] if tol is None else tol
    max_iter = SOLVER_DEFAULTS["lambda1_max_iter"] if max_iter is None else max_iter
    n = op.dimension

    if coeff is None:
        weight = np.ones(n)
    else:
        a = np.asarray(coeff.values)
        if a.shape != (n,):
            raise DimensionMismatch(f"coefficient has {a.size} values, operator dimension is {n}")
        if np.iscomplexobj(a) or not np.all(a > 0):
            raise ConfigError("coeff", "coefficient field must be real and strictly positive")
        weight = 1.0 / a

    matrix = op.matrix.tocsc()
    solver = spla.splu(matrix)

    x = np.ones(n)
    x /= math.sqrt(x @ (weight * x))
    previous = float(x @ (matrix @ x))
    for iteration in range(1, max_iter + 1):
        y = solver.solve(weight * x)
        x = y / math.sqrt(y @ (weight * y))
        current = float(x @ (matrix @ x))
        if abs(current - previous) <= tol * abs(current):
            logger.debug("lambda1=%.16g after %d inverse iterations", current, iteration)
            return current
        previous = current

    raise ConvergenceError(f"inverse power iteration did not converge in {max_iter} iterations")
