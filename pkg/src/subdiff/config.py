"""Solver and tolerance configuration.

All numerical tuning knobs live here so experiments have a single surface
to pin down.  Instances are immutable; use `dataclasses.replace` to derive
variants.
"""
from __future__ import annotations

from dataclasses import dataclass, replace


@dataclass(frozen=True)
class SolverConfig:
    # space-time grid for PDE solves
    t_max: float = 1.0
    n_t: int = 400
    x_min: float = -8.0
    x_max: float = 8.0
    n_x: int = 400
    #: std of the Gaussian mollifier standing in for the delta initial
    #: condition; None means 4 grid cells.
    init_width: float | None = None
    #: times that must land exactly on the time grid (piecewise coefficients)
    breakpoints: tuple[float, ...] = ()

    # tolerances
    quadrature_tol: float = 1e-8
    inversion_tol: float = 1e-6      # cross-method agreement, relative
    nonneg_tol: float = 1e-8         # clamp band for density ringing
    mass_tol: float = 1e-6           # conservation budget per unit time

    # Laplace inversion degrees
    talbot_degree: int = 40
    dehoog_degree: int = 25

    def __post_init__(self):
        if self.n_t < 16 or self.n_x < 16:
            raise ValueError("grids need at least 16 points")
        if self.t_max <= 0:
            raise ValueError("t_max must be positive")
        if self.x_min >= self.x_max:
            raise ValueError("x_min must be below x_max")
        for b in self.breakpoints:
            if not 0.0 < b < self.t_max:
                raise ValueError(f"breakpoint {b} outside (0, t_max)")
        if self.init_width is not None and self.init_width < 2 * self.dx:
            raise ValueError("init_width must be at least 2 grid cells")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n_x - 1)

    @property
    def delta_width(self) -> float:
        """Effective mollifier width (default 4 cells)."""
        return self.init_width if self.init_width is not None else 4.0 * self.dx

    def with_grid(self, **kw) -> "SolverConfig":
        return replace(self, **kw)


DEFAULT_CONFIG = SolverConfig()
