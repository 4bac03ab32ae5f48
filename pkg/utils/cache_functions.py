from functools import lru_cache

import numpy as np
from scipy import sparse

from services.grid import Grid, SparseOperator, build_dirichlet_laplacian, build_gradient, discrete_dirichlet_eigenvalues


# Grids are frozen dataclasses, so they key the caches directly
@lru_cache(maxsize=32)
def cached_laplacian(grid: Grid) -> SparseOperator:
    """
    Dirichlet Laplacian for a grid, assembled once per grid.

    Args:
        grid: Interior-node grid

    Returns:
        SparseOperator: -Delta_h (shared, treat as read-only)
    """
    return build_dirichlet_laplacian(grid)


@lru_cache(maxsize=32)
def cached_gradient(grid: Grid) -> sparse.csr_matrix:
    """
    Forward-difference gradient onto grid edges, assembled once per grid.

    Args:
        grid: Interior-node grid

    Returns:
        sparse.csr_matrix: Edge gradient (shared, treat as read-only)
    """
    return build_gradient(grid)


@lru_cache(maxsize=32)
def cached_discrete_eigenvalues(grid: Grid) -> np.ndarray:
    """
    Full closed-form spectrum of -Delta_h for a grid.

    Args:
        grid: Interior-node grid

    Returns:
        np.ndarray: Sorted eigenvalues (read-only)
    """
    values = discrete_dirichlet_eigenvalues(grid)
    values.setflags(write=False)
    return values

