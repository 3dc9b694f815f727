"""Uniform time grids and grid-sampled functions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["TimeGrid", "GridFunction"]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_j = t0 + j*dt, j = 0..n, with t_n = T exactly.

    Parameters
    ----------
    t0, T : float
        Interval endpoints, T > t0.
    n : int
        Number of steps (>= 2); the grid has n+1 nodes.
    """

    t0: float
    T: float
    n: int

    def __post_init__(self):
        if not self.T > self.t0:
            raise ValueError(f"need T > t0, got t0={self.t0}, T={self.T}")
        if self.n < 2:
            raise ValueError(f"need n >= 2, got n={self.n}")

    @property
    def dt(self) -> float:
        return (self.T - self.t0) / self.n

    @property
    def nodes(self) -> np.ndarray:
        # linspace pins the last node to T exactly (no accumulated drift)
        return np.linspace(self.t0, self.T, self.n + 1)

    @property
    def span(self) -> float:
        return self.T - self.t0

    def cell_edges(self, j: int) -> tuple[float, float]:
        """Endpoints of cell j = [t_j, t_{j+1}], 0 <= j < n."""
        nodes = self.nodes
        return float(nodes[j]), float(nodes[j + 1])

    def refine(self, factor: int = 2) -> "TimeGrid":
        return TimeGrid(self.t0, self.T, self.n * factor)


@dataclass
class GridFunction:
    """Values of a (possibly vector-valued) function at the nodes of a TimeGrid.

    ``values`` has shape (n+1,) or (n+1, d).  Nodes where the underlying
    function is singular can be flagged through ``singular_mask`` so that
    sup-norm style checks can skip them.
    """

    grid: TimeGrid
    values: np.ndarray
    singular_mask: np.ndarray | None = field(default=None)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape[0] != self.grid.n + 1:
            raise ValueError(
                f"values length {self.values.shape[0]} != n+1 = {self.grid.n + 1}"
            )
        if self.singular_mask is not None:
            self.singular_mask = np.asarray(self.singular_mask, dtype=bool)
            if self.singular_mask.shape[0] != self.grid.n + 1:
                raise ValueError("singular_mask length must be n+1")

    @classmethod
    def from_callable(cls, grid: TimeGrid, f) -> "GridFunction":
        return cls(grid, np.asarray(f(grid.nodes), dtype=float))

    @classmethod
    def constant(cls, grid: TimeGrid, level: float) -> "GridFunction":
        return cls(grid, np.full(grid.n + 1, float(level)))

    def finite_values(self) -> np.ndarray:
        if self.singular_mask is None:
            return self.values
        return self.values[~self.singular_mask]
