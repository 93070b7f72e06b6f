"""Grids, discrete function spaces, operator assembly and Bochner norms.

Space is the interval (0, omega) with ``m`` interior nodes and homogeneous
Dirichlet values at both ends.  Spatial fields are plain 1-D numpy arrays of
length ``m``; space-time fields are ``(N+1, m)`` arrays wrapped in
:class:`SpaceTimeFunction`, which also records how the frames are meant to be
interpolated in time.

The pivot space H carries the dx-weighted inner product ``dx * sum(u*v)``.  The
V norm adds the forward-difference H1 seminorm over all ``m+1`` cells
(including the two boundary half-cells next to the implicit zeros).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidParameterError, ShapeError

RIGHT = "piecewise-constant-right"
LEFT = "piecewise-constant-left"
ROTHE = "rothe-linear"
KINDS = (RIGHT, LEFT, ROTHE)


@dataclass(frozen=True)
class SpaceGrid:
    omega: float
    m: int

    def __post_init__(self):
        if self.m < 1:
            raise InvalidParameterError(f"need at least one interior node, got m={self.m}")
        if not self.omega > 0:
            raise InvalidParameterError(f"interval length must be positive, got {self.omega}")

    @property
    def dx(self) -> float:
        return self.omega / (self.m + 1)

    @cached_property
    def nodes(self) -> np.ndarray:
        return self.dx * np.arange(1, self.m + 1)

    def zeros(self) -> np.ndarray:
        return np.zeros(self.m)


@dataclass(frozen=True)
class TimeGrid:
    horizon: float
    n_steps: int

    def __post_init__(self):
        if self.n_steps < 1:
            raise InvalidParameterError(f"need at least one time step, got N={self.n_steps}")
        if not self.horizon > 0:
            raise InvalidParameterError(f"horizon must be positive, got {self.horizon}")

    @property
    def h(self) -> float:
        return self.horizon / self.n_steps

    @cached_property
    def nodes(self) -> np.ndarray:
        t = self.h * np.arange(self.n_steps + 1)
        t[-1] = self.horizon
        return t

    @cached_property
    def midpoints(self) -> np.ndarray:
        return self.h * (np.arange(1, self.n_steps + 1) - 0.5)

    def refined(self, factor: int) -> "TimeGrid":
        return TimeGrid(self.horizon, self.n_steps * factor)


# ---------------------------------------------------------------------------
# spatial inner products and norms


def inner_h(u, v, sg: SpaceGrid):
    """dx-weighted l2 product, reduced over the last axis."""
    return sg.dx * np.sum(np.asarray(u) * np.asarray(v), axis=-1)


def norm_h(u, sg: SpaceGrid):
    return np.sqrt(np.maximum(inner_h(u, u, sg), 0.0))


def _forward_diff(u):
    u = np.asarray(u, dtype=float)
    pad = [(0, 0)] * (u.ndim - 1) + [(1, 1)]
    return np.diff(np.pad(u, pad), axis=-1)


def h1_seminorm_sq(u, sg: SpaceGrid):
    du = _forward_diff(u) / sg.dx
    return sg.dx * np.sum(du * du, axis=-1)


def inner_v(u, v, sg: SpaceGrid):
    du = _forward_diff(u) / sg.dx
    dv = _forward_diff(v) / sg.dx
    return inner_h(u, v, sg) + sg.dx * np.sum(du * dv, axis=-1)


def norm_v(u, sg: SpaceGrid):
    return np.sqrt(np.maximum(inner_v(u, u, sg), 0.0))


def _stiffness_modes(sg: SpaceGrid) -> np.ndarray:
    """Eigenvalues of tridiag(-1, 2, -1)/dx^2, ascending."""
    k = np.arange(1, sg.m + 1)
    return 4.0 / sg.dx**2 * np.sin(k * np.pi / (2 * (sg.m + 1))) ** 2


def dual_norm(f, sg: SpaceGrid):
    """Norm in V* of the functional v -> (f, v)_H, reduced over the last axis.

    With the V Gram matrix ``dx (I + K)`` the Riesz representer gives
    ``||f||_{V*}^2 = dx f^T (I + K)^{-1} f``; evaluated in the sine basis that
    diagonalises K.
    """
    f = np.asarray(f, dtype=float)
    q = _sine_basis(sg.m)
    coeff = f @ q
    mu = _stiffness_modes(sg)
    return np.sqrt(sg.dx * np.sum(coeff**2 / (1.0 + mu), axis=-1))


_SINE_CACHE: dict[int, np.ndarray] = {}


def _sine_basis(m: int) -> np.ndarray:
    """Orthonormal (in plain l2) discrete sine vectors as columns."""
    q = _SINE_CACHE.get(m)
    if q is None:
        i = np.arange(1, m + 1)
        q = np.sqrt(2.0 / (m + 1)) * np.sin(np.outer(i, i) * np.pi / (m + 1))
        q.setflags(write=False)
        _SINE_CACHE[m] = q
    return q


# ---------------------------------------------------------------------------
# operator


@dataclass(frozen=True)
class DiscreteOperator:
    """Three-point stencil for ``-nu u'' + c u`` with Dirichlet boundary.

    ``c_a`` and ``c_b`` are the coercivity and boundedness constants of the
    bilinear form ``dx v^T A w`` with respect to the discrete V norm.  Both
    forms are diagonal in the sine basis, so the constants are the extreme
    values of ``(nu*mu_k + c) / (1 + mu_k)`` over the stiffness eigenvalues.
    """

    sgrid: SpaceGrid
    diffusivity: float
    reaction: float = 0.0
    diag: np.ndarray = field(repr=False, default=None)
    off: float = field(repr=False, default=None)
    c_a: float = field(default=None)
    c_b: float = field(default=None)

    @cached_property
    def matrix(self) -> np.ndarray:
        m = self.sgrid.m
        a = np.diag(self.diag.copy())
        if m > 1:
            idx = np.arange(m - 1)
            a[idx, idx + 1] = self.off
            a[idx + 1, idx] = self.off
        a.setflags(write=False)
        return a

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        return self.diffusivity * _stiffness_modes(self.sgrid) + self.reaction

    @cached_property
    def eigenvectors(self) -> np.ndarray:
        return _sine_basis(self.sgrid.m)

    def apply(self, v):
        """A v along the last axis (works on single frames or stacks)."""
        v = np.asarray(v, dtype=float)
        pad = [(0, 0)] * (v.ndim - 1) + [(1, 1)]
        vp = np.pad(v, pad)
        return self.diag * v + self.off * (vp[..., :-2] + vp[..., 2:])

    def stepped(self, h: float) -> np.ndarray:
        """Dense ``I + h A``, the matrix of one backward-Euler step."""
        return np.eye(self.sgrid.m) + h * self.matrix

    def form(self, u, v):
        return inner_h(u, self.apply(v), self.sgrid)


def assemble_operator(grid: SpaceGrid, diffusivity: float, reaction: float = 0.0) -> DiscreteOperator:
    if not diffusivity > 0:
        raise InvalidParameterError(f"diffusivity must be positive, got {diffusivity}")
    if reaction < 0:
        raise InvalidParameterError(f"reaction must be nonnegative, got {reaction}")
    dx2 = grid.dx**2
    diag = np.full(grid.m, 2.0 * diffusivity / dx2 + reaction)
    diag.setflags(write=False)
    mu = _stiffness_modes(grid)
    ratio = (diffusivity * mu + reaction) / (1.0 + mu)
    return DiscreteOperator(
        sgrid=grid,
        diffusivity=float(diffusivity),
        reaction=float(reaction),
        diag=diag,
        off=-diffusivity / dx2,
        c_a=float(ratio.min()),
        c_b=float(ratio.max()),
    )


# ---------------------------------------------------------------------------
# space-time functions


@dataclass(frozen=True, eq=False)
class SpaceTimeFunction:
    """Frames of a field on ``tgrid.nodes x sgrid.nodes``.

    Frame ``n`` is the value attached to ``t_n``.  ``kind`` selects the time
    interpolant used for evaluation and for every Bochner norm:

    * ``piecewise-constant-right``: frame n on [t_{n-1}, t_n)
    * ``piecewise-constant-left``: frame n-1 on [t_{n-1}, t_n)
    * ``rothe-linear``: continuous, linear on each cell
    """

    frames: np.ndarray
    sgrid: SpaceGrid
    tgrid: TimeGrid
    kind: str = RIGHT

    def __post_init__(self):
        frames = np.array(self.frames, dtype=float)
        expected = (self.tgrid.n_steps + 1, self.sgrid.m)
        if frames.shape != expected:
            raise ShapeError(f"frames have shape {frames.shape}, expected {expected}")
        if self.kind not in KINDS:
            raise InvalidParameterError(f"unknown interpolation kind {self.kind!r}")
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)

    # construction helpers
    @classmethod
    def zeros(cls, sg: SpaceGrid, tg: TimeGrid, kind: str = RIGHT) -> "SpaceTimeFunction":
        return cls(np.zeros((tg.n_steps + 1, sg.m)), sg, tg, kind)

    @classmethod
    def constant(cls, value, sg: SpaceGrid, tg: TimeGrid, kind: str = RIGHT) -> "SpaceTimeFunction":
        value = np.broadcast_to(np.asarray(value, dtype=float), (sg.m,))
        return cls(np.tile(value, (tg.n_steps + 1, 1)), sg, tg, kind)

    def with_frames(self, frames) -> "SpaceTimeFunction":
        return SpaceTimeFunction(frames, self.sgrid, self.tgrid, self.kind)

    def with_kind(self, kind: str) -> "SpaceTimeFunction":
        return SpaceTimeFunction(self.frames, self.sgrid, self.tgrid, kind)

    @property
    def n_steps(self) -> int:
        return self.tgrid.n_steps

    def __getitem__(self, n):
        return self.frames[n]

    def __len__(self):
        return self.frames.shape[0]

    # arithmetic keeps grids and kind of the left operand
    def _coerce(self, other):
        if isinstance(other, SpaceTimeFunction):
            if other.frames.shape != self.frames.shape:
                raise ShapeError("space-time functions live on different grids")
            return other.frames
        return other

    def __add__(self, other):
        return self.with_frames(self.frames + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self.with_frames(self.frames - self._coerce(other))

    def __rsub__(self, other):
        return self.with_frames(self._coerce(other) - self.frames)

    def __mul__(self, other):
        return self.with_frames(self.frames * self._coerce(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self.with_frames(self.frames / self._coerce(other))

    def __neg__(self):
        return self.with_frames(-self.frames)

    def at(self, t: float) -> np.ndarray:
        """Spatial values at time ``t`` according to the interpolation kind."""
        tg = self.tgrid
        if t <= 0:
            return self.frames[0].copy() if self.kind != RIGHT else self.frames[min(1, tg.n_steps)].copy()
        if t >= tg.horizon:
            return self.frames[-1].copy() if self.kind != LEFT else self.frames[-2].copy()
        cell = min(int(math.floor(t / tg.h)), tg.n_steps - 1)  # t in [t_cell, t_cell+1)
        if self.kind == RIGHT:
            return self.frames[cell + 1].copy()
        if self.kind == LEFT:
            return self.frames[cell].copy()
        tau = (t - tg.nodes[cell]) / tg.h
        return (1 - tau) * self.frames[cell] + tau * self.frames[cell + 1]

    def sup(self) -> float:
        return float(np.max(np.abs(self.frames)))


def sup_distance(a: SpaceTimeFunction | np.ndarray, b: SpaceTimeFunction | np.ndarray) -> float:
    """Max |a - b| over all frames, treating matching infinities as equal."""
    fa = a.frames if isinstance(a, SpaceTimeFunction) else np.asarray(a, dtype=float)
    fb = b.frames if isinstance(b, SpaceTimeFunction) else np.asarray(b, dtype=float)
    with np.errstate(invalid="ignore"):
        diff = np.abs(fa - fb)
    same_inf = np.isinf(fa) & np.isinf(fb) & (np.sign(fa) == np.sign(fb))
    diff = np.where(same_inf, 0.0, diff)
    if diff.size == 0:
        return 0.0
    return float(np.max(diff))


# ---------------------------------------------------------------------------
# source averaging and interpolants


def average_source(f: SpaceTimeFunction, tg: TimeGrid | None = None) -> np.ndarray:
    """Cell means ``f_n = (1/h) int_{t_{n-1}}^{t_n} f``, rows n = 1..N.

    ``f`` may live on ``tg`` or on an integer refinement of it; the mean is
    exact for the declared interpolation kind (piecewise constants, or the
    trapezoidal rule for the piecewise-linear kind).
    """
    tg = tg or f.tgrid
    if not math.isclose(f.tgrid.horizon, tg.horizon, rel_tol=1e-12):
        raise ShapeError("source and target time grids have different horizons")
    nf = f.tgrid.n_steps
    if nf % tg.n_steps:
        raise ShapeError(f"source grid with {nf} steps is not a refinement of {tg.n_steps} steps")
    r = nf // tg.n_steps
    fr = f.frames
    if f.kind == RIGHT:
        cells = fr[1:]
    elif f.kind == LEFT:
        cells = fr[:-1]
    else:
        cells = 0.5 * (fr[1:] + fr[:-1])
    return cells.reshape(tg.n_steps, r, -1).mean(axis=1)


def build_interpolants(frames: Sequence[np.ndarray] | np.ndarray, sg: SpaceGrid, tg: TimeGrid):
    """Return the right-constant, left-constant and Rothe (linear) interpolants."""
    frames = np.asarray(frames, dtype=float)
    if frames.shape[0] != tg.n_steps + 1:
        raise ShapeError(f"need {tg.n_steps + 1} frames, got {frames.shape[0]}")
    return (
        SpaceTimeFunction(frames, sg, tg, RIGHT),
        SpaceTimeFunction(frames, sg, tg, LEFT),
        SpaceTimeFunction(frames, sg, tg, ROTHE),
    )


# ---------------------------------------------------------------------------
# Bochner norms

_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(8)
_GAUSS_X = 0.5 * (_GAUSS_X + 1.0)
_GAUSS_W = 0.5 * _GAUSS_W


def _cell_frames(u: SpaceTimeFunction) -> np.ndarray:
    if u.kind == RIGHT:
        return u.frames[1:]
    return u.frames[:-1]


def norms(u: SpaceTimeFunction, kind: str = "L2H", p: float = 2.0) -> float:
    """Discrete Bochner norm of ``u``.

    ``kind`` is one of ``L2H``, ``L2V``, ``LinfH``, ``LpH`` (with exponent
    ``p`` in [1, inf)).  Time integration is exact for the interpolation kind
    of ``u``; for ``LpH`` with ``p != 2`` on the Rothe kind an 8-point
    Gauss rule per cell is used.
    """
    sg, h = u.sgrid, u.tgrid.h
    fr = u.frames
    if kind == "LinfH":
        if u.kind == ROTHE:
            vals = norm_h(fr, sg)  # ||.||_H is convex along segments
        else:
            vals = norm_h(_cell_frames(u), sg)
        return float(np.max(vals))
    if kind in ("L2H", "L2V"):
        ip = inner_h if kind == "L2H" else inner_v
        if u.kind == ROTHE:
            a, b = fr[:-1], fr[1:]
            total = np.sum(ip(a, a, sg) + ip(a, b, sg) + ip(b, b, sg)) / 3.0
        else:
            c = _cell_frames(u)
            total = np.sum(ip(c, c, sg))
        return float(math.sqrt(max(h * total, 0.0)))
    if kind == "LpH":
        if not 1 <= p < math.inf:
            raise InvalidParameterError(f"exponent must lie in [1, inf), got {p}")
        if p == 2:
            return norms(u, "L2H")
        if u.kind == ROTHE:
            a, b = fr[:-1], fr[1:]
            vals = np.stack([norm_h(a + x * (b - a), sg) for x in _GAUSS_X])
            total = np.sum(_GAUSS_W[:, None] * vals**p)
        else:
            total = np.sum(norm_h(_cell_frames(u), sg) ** p)
        return float((h * total) ** (1.0 / p))
    raise InvalidParameterError(f"unknown norm kind {kind!r}")


def time_derivative_dual_l2(u: SpaceTimeFunction) -> float:
    """``||du/dt||_{L2(0,T;V*)}`` for the piecewise-linear reading of the frames."""
    d = np.diff(u.frames, axis=0) / u.tgrid.h
    return float(math.sqrt(u.tgrid.h * np.sum(dual_norm(d, u.sgrid) ** 2)))


# ---------------------------------------------------------------------------
# CSV


def to_csv(u: SpaceTimeFunction | np.ndarray, sg: SpaceGrid | None = None, path=None, t: Iterable[float] | None = None) -> str:
    """Serialise to ``t,x,value`` rows, time-major, 17 significant digits.

    A bare spatial array is written with a single ``t`` (default 0).
    """
    if isinstance(u, SpaceTimeFunction):
        sg = u.sgrid
        times = u.tgrid.nodes
        frames = u.frames
    else:
        frames = np.atleast_2d(np.asarray(u, dtype=float))
        times = np.asarray(list(t) if t is not None else [0.0] * frames.shape[0])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "x", "value"])
    for tn, frame in zip(times, frames):
        for x, v in zip(sg.nodes, frame):
            w.writerow([f"{tn:.17g}", f"{x:.17g}", f"{v:.17g}"])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text


def from_csv(source, sg: SpaceGrid, tg: TimeGrid, kind: str = RIGHT) -> SpaceTimeFunction:
    """Inverse of :func:`to_csv` for a field on known grids."""
    text = source if "\n" in str(source) else open(source, encoding="utf-8").read()
    rows = list(csv.reader(io.StringIO(text)))
    if rows[0] != ["t", "x", "value"]:
        raise ShapeError(f"unexpected CSV header {rows[0]}")
    vals = np.array([float(r[2]) for r in rows[1:]])
    return SpaceTimeFunction(vals.reshape(tg.n_steps + 1, sg.m), sg, tg, kind)
