"""Eigenfunction-series Green's function of the 1-D Dirichlet heat operator.

Used as an oracle for the inverse-parabolic obstacle map, independently of the
finite-difference stepping: sources are projected on the continuous sine
modes and integrated exactly in time per mode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DomainError, InvalidParameterError
from .grid import RIGHT, SpaceGrid, SpaceTimeFunction, TimeGrid


@dataclass(frozen=True)
class GreenKernel:
    length: float = 1.0
    modes: int = 64
    diffusivity: float = 1.0

    def __post_init__(self):
        if self.modes < 1:
            raise InvalidParameterError("need at least one mode")
        if not self.length > 0 or not self.diffusivity > 0:
            raise InvalidParameterError("length and diffusivity must be positive")

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        return np.arange(1, self.modes + 1) * math.pi / self.length

    @cached_property
    def decay_rates(self) -> np.ndarray:
        return self.diffusivity * self.wavenumbers**2

    def sin_table(self, x) -> np.ndarray:
        """``sin(k pi x / L)`` with modes along the last axis."""
        return np.sin(np.multiply.outer(np.asarray(x, dtype=float), self.wavenumbers))

    def truncation_bound(self, t_min: float) -> float:
        return 2.0 / self.length * math.exp(-((self.modes + 1) ** 2) * math.pi**2 * self.diffusivity * t_min / self.length**2)


def green_series_eval(kernel: GreenKernel, x, y, t):
    """Truncated series ``(2/L) sum_k sin(k pi x/L) sin(k pi y/L) exp(-nu (k pi/L)^2 t)``."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise DomainError("the series is evaluated only for t > 0")
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    sx, sy = kernel.sin_table(x), kernel.sin_table(y)
    decay = np.exp(-np.multiply.outer(t, kernel.decay_rates))
    out = 2.0 / kernel.length * np.sum(sx * sy * decay, axis=-1)
    return out if out.ndim else float(out)


def project_on_modes(kernel: GreenKernel, values, sg: SpaceGrid) -> np.ndarray:
    """Exact sine coefficients ``int_0^L F(y) sin(k pi y/L) dy`` of the
    piecewise-linear interpolant of nodal values (zero at both ends).

    This is the trapezoid rule times the factor ``sinc^2(k pi dx / (2L))``.
    """
    values = np.asarray(values, dtype=float)
    half = 0.5 * kernel.wavenumbers * sg.dx
    factor = (np.sin(half) / half) ** 2
    return sg.dx * (values @ kernel.sin_table(sg.nodes)) * factor


def green_convolve(kernel: GreenKernel, source, w0, sg: SpaceGrid, tg: TimeGrid) -> SpaceTimeFunction:
    """``w0 + int_0^t int_0^L F(s, y) G(x, y, t - s) dy ds`` at the grid nodes.

    ``source`` holds cell values ``F_1..F_N`` (an ``(N, m)`` array, or a
    right-constant field whose frames 1..N are used); ``F`` is constant on
    each time cell, so every mode is integrated exactly in time.
    """
    cells = source.frames[1:] if isinstance(source, SpaceTimeFunction) else np.asarray(source, dtype=float)
    coeff = project_on_modes(kernel, cells, sg)
    lam = kernel.decay_rates
    e = np.exp(-lam * tg.h)
    gain = (1.0 - e) / lam
    basis = 2.0 / kernel.length * kernel.sin_table(sg.nodes)
    a = np.zeros(kernel.modes)
    frames = np.empty((tg.n_steps + 1, sg.m))
    frames[0] = w0
    for n in range(1, tg.n_steps + 1):
        a = e * a + gain * coeff[n - 1]
        frames[n] = np.asarray(w0, dtype=float) + basis @ a
    return SpaceTimeFunction(frames, sg, tg, RIGHT)
