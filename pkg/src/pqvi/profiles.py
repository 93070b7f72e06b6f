"""Named catalogue of analytic data profiles and scalar nonlinearities.

Profiles are products of a spatial shape and the time factor ``1 + rate*t``.
Everything here is a plain picklable dataclass so configs can be shipped to
worker processes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError
from .grid import RIGHT, ROTHE, SpaceGrid, SpaceTimeFunction, TimeGrid

PROFILE_KINDS = ("zero", "constant", "sine", "bump", "hat", "inf")


@dataclass(frozen=True)
class Profile:
    kind: str = "zero"
    amp: float = 1.0
    rate: float = 0.0
    center: float = 0.5
    width: float = 0.2
    mode: int = 1

    def __post_init__(self):
        if self.kind not in PROFILE_KINDS:
            raise InvalidParameterError(f"unknown profile kind {self.kind!r}; choose from {PROFILE_KINDS}")
        if self.kind in ("bump", "hat") and not self.width > 0:
            raise InvalidParameterError("profile width must be positive")

    def shape(self, x, omega: float) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(x)
        if self.kind == "inf":
            return np.full_like(x, np.inf)
        if self.kind == "constant":
            return np.full_like(x, self.amp)
        if self.kind == "sine":
            return self.amp * np.sin(self.mode * np.pi * x / omega)
        if self.kind == "bump":
            return self.amp * np.exp(-(((x - self.center * omega) / (self.width * omega)) ** 2))
        return self.amp * np.maximum(0.0, 1.0 - np.abs(x - self.center * omega) / (self.width * omega))

    def __call__(self, t, x, omega: float = 1.0):
        s = self.shape(x, omega)
        if self.kind == "inf":
            return s
        return (1.0 + self.rate * t) * s

    def spatial(self, sg: SpaceGrid, t: float = 0.0) -> np.ndarray:
        return np.asarray(self(t, sg.nodes, sg.omega), dtype=float)

    def nodal(self, sg: SpaceGrid, tg: TimeGrid) -> SpaceTimeFunction:
        """Values at the time nodes, read as a continuous piecewise-linear field."""
        frames = np.stack([self.spatial(sg, t) for t in tg.nodes])
        return SpaceTimeFunction(frames, sg, tg, ROTHE)

    def cells(self, sg: SpaceGrid, tg: TimeGrid) -> SpaceTimeFunction:
        """Midpoint samples per cell as a right-constant field (frame 0 at t=0)."""
        frames = np.stack([self.spatial(sg, 0.0)] + [self.spatial(sg, t) for t in tg.midpoints])
        return SpaceTimeFunction(frames, sg, tg, RIGHT)


@dataclass(frozen=True)
class NonlinearSource:
    """Scalar ``g`` with derivative and a declared bound on ``|g'|``.

    kinds: ``tanh`` gives ``gamma (1 + tanh v) / 2``; ``clipped-linear`` gives
    ``gamma * clip(v, 0, cap)``; ``constant`` gives ``gamma``.
    """

    kind: str = "tanh"
    gamma: float = 0.4
    cap: float = 1.0

    def __post_init__(self):
        if self.kind not in ("tanh", "clipped-linear", "constant"):
            raise InvalidParameterError(f"unknown nonlinearity {self.kind!r}")
        if self.gamma < 0:
            raise InvalidParameterError("gamma must be nonnegative so that g >= 0 and g is nondecreasing")

    def g(self, v):
        v = np.asarray(v, dtype=float)
        if self.kind == "tanh":
            return 0.5 * self.gamma * (1.0 + np.tanh(v))
        if self.kind == "clipped-linear":
            return self.gamma * np.clip(v, 0.0, self.cap)
        return np.full_like(v, self.gamma)

    def g_prime(self, v):
        v = np.asarray(v, dtype=float)
        if self.kind == "tanh":
            return 0.5 * self.gamma / np.cosh(v) ** 2
        if self.kind == "clipped-linear":
            return np.where((v > 0) & (v < self.cap), self.gamma, 0.0)
        return np.zeros_like(v)

    @property
    def sup_g_prime(self) -> float:
        if self.kind == "tanh":
            return 0.5 * self.gamma
        if self.kind == "clipped-linear":
            return self.gamma
        return 0.0

    def verify(self, samples: int = 2001, span: float = 10.0) -> bool:
        """Spot-check ``g >= 0``, monotonicity and the declared derivative bound."""
        v = np.linspace(-span, span, samples)
        gv, dg = self.g(v), self.g_prime(v)
        return bool(np.all(gv >= 0) and np.all(np.diff(gv) >= -1e-15) and np.all(np.abs(dg) <= self.sup_g_prime * (1 + 1e-12)))
