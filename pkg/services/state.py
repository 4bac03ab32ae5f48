from dataclasses import dataclass

import numpy as np

from services.grid import Field, Grid
from utils.errors import DimensionMismatch


@dataclass(frozen=True, eq=False)
class StateVector:
    """The pair v = (v1, v2) = (u, u_t) on one grid"""

    v1: Field
    v2: Field

    def __post_init__(self):
        if self.v1.grid != self.v2.grid:
            raise DimensionMismatch("state components live on different grids")

    @property
    def grid(self) -> Grid:
        return self.v1.grid

    @classmethod
    def zeros(cls, grid: Grid) -> "StateVector":
        return cls(Field.zeros(grid), Field.zeros(grid))

    @classmethod
    def from_stacked(cls, grid: Grid, x: np.ndarray) -> "StateVector":
        x = np.asarray(x)
        if x.shape != (2 * grid.size,):
            raise DimensionMismatch(f"stacked state needs {2 * grid.size} values, got {x.size}")
        return cls(Field(grid, x[: grid.size]), Field(grid, x[grid.size :]))

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.v1.values, self.v2.values])

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.v1.values)) and np.all(np.isfinite(self.v2.values)))

    def __add__(self, other: "StateVector") -> "StateVector":
        return StateVector(self.v1 + other.v1, self.v2 + other.v2)

    def __sub__(self, other: "StateVector") -> "StateVector":
        return StateVector(self.v1 - other.v1, self.v2 - other.v2)

    def __mul__(self, scalar) -> "StateVector":
        return StateVector(scalar * self.v1, scalar * self.v2)

    __rmul__ = __mul__
