"""Problem data bundle and the data hypotheses checked before a QVI solve."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .grid import DiscreteOperator, SpaceTimeFunction, average_source
from .obstacles import ObstacleMap

ORDER_TOL = 1e-12


@dataclass(frozen=True)
class ProblemData:
    f: SpaceTimeFunction
    z0: np.ndarray
    obstacle: ObstacleMap
    operator: DiscreteOperator
    d: SpaceTimeFunction | None = None

    def __post_init__(self):
        z0 = np.array(np.broadcast_to(np.asarray(self.z0, dtype=float), (self.operator.sgrid.m,)))
        z0.setflags(write=False)
        object.__setattr__(self, "z0", z0)
        if self.obstacle.sgrid.m != z0.shape[0]:
            raise ShapeError("obstacle map and initial data live on different spatial grids")

    @property
    def sgrid(self):
        return self.obstacle.sgrid

    @property
    def tgrid(self):
        return self.obstacle.tgrid

    def source_cells(self, shift: float = 0.0) -> np.ndarray:
        """Averaged source rows ``f_1..f_N`` (of ``f + shift * d`` if shift)."""
        cells = average_source(self.f, self.tgrid)
        if shift:
            cells = cells + shift * average_source(self.d, self.tgrid)
        return cells

    def with_source(self, f: SpaceTimeFunction) -> "ProblemData":
        return ProblemData(f, self.z0, self.obstacle, self.operator, self.d)

    def perturbed(self, s: float) -> "ProblemData":
        return self.with_source(self.f + s * self.d.frames)

    def d_sign(self) -> int:
        """+1 if d >= 0, -1 if d <= 0, 0 if d vanishes, None if indefinite."""
        if self.d is None:
            return 0
        fr = self.d.frames
        if np.all(fr == 0):
            return 0
        if np.all(fr >= 0):
            return 1
        if np.all(fr <= 0):
            return -1
        return None

    def check_flags(self) -> dict:
        """Hypotheses on the data: sign and time-monotonicity of the source,
        nonnegative initial value, and initial value below the initial obstacle."""
        cells = self.source_cells()
        z0 = self.z0
        phi0 = self.obstacle.frozen(z0, 0)
        with np.errstate(invalid="ignore"):
            below = float(np.max(np.where(np.isfinite(phi0), z0 - phi0, -np.inf)))
        return {
            "f_nonnegative": bool(np.all(cells >= -ORDER_TOL)),
            "f_increasing": bool(np.all(np.diff(cells, axis=0) >= -ORDER_TOL)),
            "z0_nonnegative": bool(np.all(z0 >= -ORDER_TOL)),
            "z0_below_obstacle": bool(below <= ORDER_TOL),
            "d_sign": self.d_sign(),
        }
