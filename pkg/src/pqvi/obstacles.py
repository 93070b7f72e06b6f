"""Obstacle maps and their directional derivatives.

A map takes a space-time field ``psi`` (frames on the solver grid) and returns
the obstacle field ``Phi(psi)`` on the same grid.  Three families:

* :class:`ConstantMap` ignores its argument (the VI case);
* :class:`SuperpositionMap` acts framewise, ``Phi(v)_n = offset_n + phi(v_n)``;
* :class:`InverseParabolicMap` solves ``w' + B w = g(psi)``, ``w(0) = w0``, by
  backward Euler, where frame ``k`` of ``psi`` drives step ``k``.

Every map also offers :meth:`frozen`, the value at ``t_n`` of ``Phi`` applied to
a field held constant in time, which is what one elliptic step needs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError, ShapeError
from .grid import (
    RIGHT,
    DiscreteOperator,
    SpaceGrid,
    SpaceTimeFunction,
    TimeGrid,
    norms,
    time_derivative_dual_l2,
)
from .profiles import NonlinearSource

ORDER_PRESERVING = "order-preserving"
TIME_INCREASING = "time-increasing-preserving"
NONNEG_AT_ZERO = "nonnegative-at-zero"


def _frames(psi, shape) -> np.ndarray:
    fr = psi.frames if isinstance(psi, SpaceTimeFunction) else np.asarray(psi, dtype=float)
    if fr.shape != shape:
        raise ShapeError(f"field has shape {fr.shape}, map expects {shape}")
    return fr


class ObstacleMap:
    """Common interface; subclasses fill in the three evaluation methods."""

    kind = "abstract"
    declared: frozenset = frozenset()

    def __init__(self, sgrid: SpaceGrid, tgrid: TimeGrid):
        self.sgrid = sgrid
        self.tgrid = tgrid

    @property
    def shape(self):
        return (self.tgrid.n_steps + 1, self.sgrid.m)

    @property
    def is_constant(self) -> bool:
        return False

    def _wrap(self, frames) -> SpaceTimeFunction:
        return SpaceTimeFunction(frames, self.sgrid, self.tgrid, RIGHT)

    def evaluate(self, psi) -> SpaceTimeFunction:
        raise NotImplementedError

    def frozen(self, v, n: int) -> np.ndarray:
        raise NotImplementedError

    def derivative_apply(self, u, h) -> SpaceTimeFunction:
        raise NotImplementedError


class ConstantMap(ObstacleMap):
    kind = "constant"
    declared = frozenset({ORDER_PRESERVING, TIME_INCREASING})

    def __init__(self, psi0, sgrid: SpaceGrid, tgrid: TimeGrid):
        super().__init__(sgrid, tgrid)
        fr = psi0.frames if isinstance(psi0, SpaceTimeFunction) else np.asarray(psi0, dtype=float)
        if fr.ndim < 2:
            fr = np.broadcast_to(fr, self.shape)
        self.psi0 = _frames(fr, self.shape).copy()
        self.psi0.setflags(write=False)

    @property
    def is_constant(self) -> bool:
        return True

    def evaluate(self, psi=None):
        return self._wrap(self.psi0)

    def frozen(self, v, n):
        return self.psi0[n].copy()

    def derivative_apply(self, u, h):
        return self._wrap(np.zeros(self.shape))


class SuperpositionMap(ObstacleMap):
    """``Phi(v)_n = offset_n + theta * v_n`` or ``offset_n + g(v_n)``."""

    kind = "superposition"
    declared = frozenset({ORDER_PRESERVING, TIME_INCREASING})

    def __init__(self, offset, sgrid: SpaceGrid, tgrid: TimeGrid, slope: float = 0.5, source: NonlinearSource | None = None):
        super().__init__(sgrid, tgrid)
        fr = offset.frames if isinstance(offset, SpaceTimeFunction) else np.asarray(offset, dtype=float)
        if fr.ndim == 1:
            fr = np.tile(fr, (tgrid.n_steps + 1, 1))
        self.offset = _frames(fr, self.shape).copy()
        self.offset.setflags(write=False)
        if slope < 0:
            raise InvalidParameterError("slope must be nonnegative for an order-preserving map")
        self.slope = float(slope)
        self.source = source

    @property
    def slope_bound(self) -> float:
        return self.source.sup_g_prime if self.source is not None else self.slope

    def _phi(self, v):
        return self.source.g(v) if self.source is not None else self.slope * v

    def _dphi(self, v):
        return self.source.g_prime(v) if self.source is not None else np.full_like(v, self.slope)

    def evaluate(self, psi):
        return self._wrap(self.offset + self._phi(_frames(psi, self.shape)))

    def frozen(self, v, n):
        return self.offset[n] + self._phi(np.asarray(v, dtype=float))

    def derivative_apply(self, u, h):
        return self._wrap(self._dphi(_frames(u, self.shape)) * _frames(h, self.shape))


class InverseParabolicMap(ObstacleMap):
    """Backward-Euler solution operator of ``w' + B w = g(psi)``, ``w(0) = w0``.

    ``B`` is diagonal in the discrete sine basis, so each step is a diagonal
    scaling in modal coordinates.
    """

    kind = "inverse-parabolic"
    declared = frozenset({ORDER_PRESERVING, TIME_INCREASING, NONNEG_AT_ZERO})

    def __init__(self, B: DiscreteOperator, source: NonlinearSource, w0, tgrid: TimeGrid):
        super().__init__(B.sgrid, tgrid)
        self.B = B
        self.source = source
        self.w0 = np.array(np.broadcast_to(np.asarray(w0, dtype=float), (B.sgrid.m,)))
        self.w0.setflags(write=False)
        self._q = B.eigenvectors
        self._mu = B.eigenvalues
        self._r = 1.0 / (1.0 + tgrid.h * self._mu)

    def _march(self, forcing: np.ndarray, start: np.ndarray) -> np.ndarray:
        """Frames of ``w_k = (I + hB)^{-1} (w_{k-1} + h F_k)``, k = 1..N."""
        h, q, r = self.tgrid.h, self._q, self._r
        coeff = forcing @ q
        out = np.empty(self.shape)
        a = start @ q
        out[0] = start
        for k in range(1, self.tgrid.n_steps + 1):
            a = r * (a + h * coeff[k - 1])
            out[k] = q @ a
        return out

    def evaluate(self, psi):
        fr = _frames(psi, self.shape)
        return self._wrap(self._march(self.source.g(fr[1:]), self.w0))

    def frozen(self, v, n):
        rn = self._r**n
        c = self.source.g(np.asarray(v, dtype=float)) @ self._q
        a = rn * (self.w0 @ self._q) + (1.0 - rn) / self._mu * c
        return self._q @ a

    def derivative_apply(self, u, h):
        uf, hf = _frames(u, self.shape), _frames(h, self.shape)
        return self._wrap(self._march(self.source.g_prime(uf[1:]) * hf[1:], np.zeros(self.sgrid.m)))

    def steady_state(self, v) -> np.ndarray:
        return np.linalg.solve(self.B.matrix, self.source.g(np.asarray(v, dtype=float)))


# ---------------------------------------------------------------------------
# property spot checks


def order_preservation_violation(phi: ObstacleMap, pairs: int = 500, rng=None, scale: float = 1.0) -> float:
    """Largest ``Phi(psi1) - Phi(psi2)`` over random ordered pairs ``psi1 <= psi2``."""
    rng = np.random.default_rng(rng)
    worst = 0.0
    for _ in range(pairs):
        a = scale * rng.standard_normal(phi.shape)
        b = a + scale * rng.random(phi.shape)
        worst = max(worst, float(np.max(phi.evaluate(a).frames - phi.evaluate(b).frames)))
    return worst


# ---------------------------------------------------------------------------
# smallness diagnostics


@dataclass
class SmallnessDiagnostics:
    c1: float
    c2: float
    c3: float
    k1: float
    k2: float
    k3: float
    c_a: float
    c_b: float
    horizon: float
    p: float = 2.0
    closed_form: dict = field(default_factory=dict)

    @property
    def lhs_L7a(self) -> float:
        return self.c_b * self.c1 + self.c2 + self.c3

    @property
    def lhs_L13(self) -> float:
        return self.k1 + self.horizon ** (1.0 / self.p) * (self.k2 * self.c_b + self.k3) / math.sqrt(self.c_a)

    @property
    def verdict_L7a(self) -> bool:
        return self.lhs_L7a < self.c_a

    @property
    def verdict_L13(self) -> bool:
        return self.lhs_L13 < 1.0

    def as_dict(self) -> dict:
        return {
            "c1": self.c1,
            "c2": self.c2,
            "c3": self.c3,
            "k1": self.k1,
            "k2": self.k2,
            "k3": self.k3,
            "c_a": self.c_a,
            "c_b": self.c_b,
            "lhs_L7a": self.lhs_L7a,
            "lhs_L13": self.lhs_L13,
            "verdict_L7a": self.verdict_L7a,
            "verdict_L13": self.verdict_L13,
            "closed_form": dict(self.closed_form),
        }


def closed_form_bounds(phi: InverseParabolicMap) -> dict:
    """Energy-estimate bounds for the derivative of the inverse-parabolic map.

    All are operator-norm bounds with ``||h||_{L2(0,T;H)}`` on the right.
    """
    a = phi.source.sup_g_prime
    T = phi.tgrid.horizon
    ca, cb = phi.B.c_a, phi.B.c_b
    l2v = a * math.sqrt(T / (2.0 * ca))
    return {
        "L2V_from_L2H": l2v,
        "dt_L2Vstar_from_L2H": a * (1.0 + cb * math.sqrt(T / (2.0 * ca))),
        "LinfH_from_L2H": 2.0 * a * math.sqrt(T),
    }


def _probes(sg: SpaceGrid, tg: TimeGrid, count: int, rng) -> list[np.ndarray]:
    """Half smooth low-mode directions, half white noise; frame 0 kept at zero."""
    out = []
    x, t = sg.nodes, tg.nodes
    for j in range(count):
        fr = np.zeros((tg.n_steps + 1, sg.m))
        if j % 2 == 0:
            modes = 1 + rng.integers(0, 3, size=2)
            amp = rng.standard_normal(2)
            tw = rng.standard_normal(2)
            for k, a, b in zip(modes, amp, tw):
                fr[1:] += a * np.outer(1.0 + b * t[1:] / tg.horizon, np.sin(k * np.pi * x / sg.omega))
            if j == 0:
                fr[1:] = np.sin(np.pi * x / sg.omega)
        else:
            fr[1:] = rng.standard_normal((tg.n_steps, sg.m))
        out.append(fr)
    return out


def smallness_diagnostics(phi: ObstacleMap, u, A: DiscreteOperator, probe_count: int = 16, rng=None, p: float = 2.0, radius: float = 0.05) -> SmallnessDiagnostics:
    """Empirical operator-norm quotients of ``Phi'(u)`` in the norms of the
    two local smallness hypotheses, plus closed-form bounds where available.

    The ``k`` constants are taken as maxima over ``u`` and a few random points
    within ``radius`` of it.  Diagnostics never raise on a failed verdict.
    """
    rng = np.random.default_rng(rng)
    sg, tg = phi.sgrid, phi.tgrid
    uf = _frames(u, phi.shape)
    probes = _probes(sg, tg, probe_count, rng)

    def st(fr):
        return SpaceTimeFunction(fr, sg, tg, RIGHT)

    c1 = c2 = c3 = k1 = k2 = k3 = 0.0
    bases = [uf] + [uf + radius * (1.0 + np.abs(uf).max()) * rng.uniform(-1, 1, uf.shape) for _ in range(2)]
    for bi, base in enumerate(bases):
        for hf in probes:
            hfun = st(hf)
            eta = phi.derivative_apply(base, hf)
            n_l2v = norms(eta, "L2V")
            n_dt = time_derivative_dual_l2(eta)
            n_lp = norms(eta, "LpH", p)
            h_l2v = norms(hfun, "L2V")
            h_lp = norms(hfun, "LpH", p)
            if h_lp > 0:
                k1 = max(k1, n_lp / h_lp)
                k2 = max(k2, n_l2v / h_lp)
                k3 = max(k3, n_dt / h_lp)
            if bi == 0 and h_l2v > 0:
                c1 = max(c1, n_l2v / h_l2v)
                c2 = max(c2, n_dt / h_l2v)
                c3 = max(c3, float(np.sum(eta.frames[-1] ** 2) * sg.dx) / h_l2v**2)
    closed = {}
    if isinstance(phi, InverseParabolicMap):
        closed = closed_form_bounds(phi)
        if p == 2:
            b = closed
            closed["lhs_L13_closed"] = b["L2V_from_L2H"] + math.sqrt(tg.horizon) * (b["L2V_from_L2H"] * A.c_b + b["dt_L2Vstar_from_L2H"]) / math.sqrt(A.c_a)
            closed["verdict_L13_closed"] = closed["lhs_L13_closed"] < 1.0
    return SmallnessDiagnostics(c1, c2, c3, k1, k2, k3, A.c_a, A.c_b, tg.horizon, p, closed)
