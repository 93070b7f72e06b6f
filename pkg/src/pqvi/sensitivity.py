"""Directional derivative of the source-to-solution map of the discrete QVI.

The derivative ``alpha`` of ``s -> u(f + s d)`` at a discrete solution ``u``
solves a linearised problem posed on the discrete active sets of ``u``.
Write ``alpha = rho~ + delta`` where ``rho~`` is the lagged derivative of the
obstacle, ``rho~_n = (Phi'(u) alpha)_{n-1}``.  Then ``delta`` solves a
backward-Euler problem with nodewise constraints:

* strongly active nodes: ``delta = 0``;
* biactive nodes: ``delta <= 0`` with a complementary nonnegative multiplier;
* free nodes: the plain linear equation.

Because ``rho~`` only looks at earlier frames, the fixed-point iteration
``alpha^k = rho~(alpha^{k-1}) + delta^k`` terminates after at most N+1 passes.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InvalidParameterError, NonConvergenceError, SizeError, StaleSolutionError
from .grid import RIGHT, DiscreteOperator, SpaceTimeFunction, TimeGrid, average_source, norms
from .lcp import LCPProblem, solve_lcp
from .parabolic import DECREASING, INCREASING, ParabolicSolveReport, ViIterationReport, lag, vi_iterate_qvi
from .problem import ProblemData

FREE, SIGN, ZERO = 0, 1, 2
ORDER_TOL = 1e-9


@dataclass(frozen=True)
class ConeSpec:
    """Constraint code per (step, node): 0 free, 1 sign (``delta <= 0``), 2 zero."""

    codes: np.ndarray

    def __post_init__(self):
        codes = np.array(self.codes, dtype=np.int8)
        if codes.ndim != 2 or not np.isin(codes, (FREE, SIGN, ZERO)).all():
            raise InvalidParameterError("cone codes must be a 2-D array with entries in {0, 1, 2}")
        codes.setflags(write=False)
        object.__setattr__(self, "codes", codes)

    def count(self, code: int) -> int:
        return int(np.sum(self.codes[1:] == code))


@dataclass(frozen=True)
class Multiplier:
    frames: np.ndarray
    complementarity: float
    min_value: float


def _report_of(u_report) -> ParabolicSolveReport:
    return u_report.final if isinstance(u_report, ViIterationReport) else u_report


def extract_cone(u: SpaceTimeFunction, data: ProblemData, u_report, strict_complementarity: bool = False, tol: float = 1e-6) -> tuple[ConeSpec, Multiplier]:
    """Cone and multiplier of a converged solution.

    The active-set split is read from the solver's per-step classification so
    it uses the same thresholds.  The multiplier is re-assembled from ``u`` and
    the data, and complementarity against the stored obstacle is re-verified;
    a mismatch means ``u`` and the report do not belong together.
    """
    rep = _report_of(u_report)
    uf = u.frames if isinstance(u, SpaceTimeFunction) else np.asarray(u, dtype=float)
    if uf.shape != rep.solution.frames.shape or np.max(np.abs(uf - rep.solution.frames)) > 1e-12 * (1 + np.abs(uf).max()):
        raise StaleSolutionError("solution does not match the stored solve report")
    A, tg = data.operator, data.tgrid
    cells = data.source_cells()
    lam = np.zeros_like(uf)
    lam[1:] = cells - np.diff(uf, axis=0) / tg.h - A.apply(uf[1:])
    psi = rep.obstacle
    fin = np.isfinite(psi)
    gap = np.where(fin, psi - uf, 0.0)
    comp = float(np.max(np.abs(np.where(fin, lam * gap, lam))[1:])) if uf.shape[0] > 1 else 0.0
    mn = float(np.min(lam[1:]))
    scale = 1.0 + float(np.max(np.abs(lam)))
    if comp > tol * scale or mn < -tol * scale:
        raise StaleSolutionError(f"complementarity violated by {max(comp, -mn):.3e}; solution is stale")
    codes = rep.active_masks().copy()
    if strict_complementarity:
        codes[codes == SIGN] = ZERO
    return ConeSpec(codes), Multiplier(lam, comp, mn)


@dataclass
class DerivativeViSolution:
    delta: SpaceTimeFunction
    multipliers: np.ndarray
    kkt_residual: float


def solve_derivative_vi(cone: ConeSpec, source, A: DiscreteOperator, tg: TimeGrid, method: str = "pdas", initial=None) -> DerivativeViSolution:
    """Backward Euler for ``delta`` under the nodewise cone constraints.

    ``source`` is an ``(N, m)`` array of cell values or a field to average.
    Strongly active nodes are removed from the system (they are pinned at 0);
    the remainder is an LCP with bound 0 on sign nodes and ``+inf`` on free ones.
    """
    cells = average_source(source, tg) if isinstance(source, SpaceTimeFunction) else np.asarray(source, dtype=float)
    m, h = A.sgrid.m, tg.h
    S = A.stepped(h)
    frames = np.zeros((tg.n_steps + 1, m))
    if initial is not None:
        frames[0] = initial
    mult = np.zeros_like(frames)
    worst = 0.0
    for n in range(1, tg.n_steps + 1):
        code = cone.codes[n]
        keep = code != ZERO
        if not keep.any():
            continue
        b = frames[n - 1] + h * cells[n - 1]
        psi = np.where(code[keep] == SIGN, 0.0, np.inf)
        sol = solve_lcp(LCPProblem(S[np.ix_(keep, keep)], b[keep], psi), method)
        frames[n, keep] = sol.z
        mult[n, keep] = sol.multiplier / h
        worst = max(worst, sol.residual)
    return DerivativeViSolution(SpaceTimeFunction(frames, A.sgrid, tg, RIGHT), mult, worst)


def derivative_vi_pattern_oracle(cone: ConeSpec, source, A: DiscreteOperator, tg: TimeGrid, max_sign_nodes: int = 16) -> np.ndarray:
    """Exhaustive oracle on the global space-time system.

    Each sign node is either pinned (``delta = 0``, multiplier must be >= 0) or
    released (equation row, value must be <= 0).  All ``2^k`` patterns are
    tried on the stacked ``(N m) x (N m)`` system, fewest pins first.
    """
    cells = np.asarray(source, dtype=float)
    m, N, h = A.sgrid.m, tg.n_steps, tg.h
    S = A.stepped(h)
    dim = N * m
    M = np.zeros((dim, dim))
    rhs = (h * cells).reshape(-1)
    for n in range(N):
        M[n * m : (n + 1) * m, n * m : (n + 1) * m] = S
        if n > 0:
            M[n * m : (n + 1) * m, (n - 1) * m : n * m] = -np.eye(m)
    codes = cone.codes[1:].reshape(-1)
    sign_idx = np.flatnonzero(codes == SIGN)
    if sign_idx.size > max_sign_nodes:
        raise SizeError(f"pattern oracle limited to {max_sign_nodes} sign nodes")
    scale = 1.0 + float(np.max(np.abs(rhs)))
    tol = 1e-11 * scale
    for k in range(sign_idx.size + 1):
        for pinned in itertools.combinations(sign_idx, k):
            fixed = codes == ZERO
            fixed[list(pinned)] = True
            x = np.zeros(dim)
            free = ~fixed
            if free.any():
                x[free] = np.linalg.solve(M[np.ix_(free, free)], rhs[free])
            resid = rhs - M @ x
            released = np.setdiff1d(sign_idx, pinned)
            if np.all(x[released] <= tol) and np.all(resid[list(pinned)] >= -tol):
                out = np.zeros((N + 1, m))
                out[1:] = x.reshape(N, m)
                return out
    raise NonConvergenceError("no sign pattern satisfies the optimality system")


@dataclass
class SensitivityResult:
    alpha: SpaceTimeFunction
    alpha_iterates: list
    delta_iterates: list
    iterations: int
    cone: ConeSpec
    multiplier: Multiplier
    checks: dict = field(default_factory=dict)
    taylor_table: list = field(default_factory=list)
    diagnostics: object = None


def _lagged_obstacle_derivative(phi, u_frames, alpha_frames) -> np.ndarray:
    return lag(phi.derivative_apply(u_frames, alpha_frames).frames)


def alpha_iteration(u_report, data: ProblemData, tol: float = 1e-12, max_iter: int | None = None, strict_complementarity: bool = False, method: str = "pdas") -> SensitivityResult:
    """Fixed-point iteration for the derivative in direction ``data.d``.

    Stops when the lagged obstacle derivative produced by the newest iterate
    differs from the one it was built on by less than ``tol`` (so a constant
    obstacle map needs exactly one pass).  Monotonicity of the chain, the sign
    relative to ``d`` and the zero initial frame are recorded in ``checks``.
    """
    if data.d is None:
        raise InvalidParameterError("a perturbation direction d is required")
    rep = _report_of(u_report)
    u = rep.solution
    cone, mult = extract_cone(u, data, rep, strict_complementarity)
    A, phi, tg = data.operator, data.obstacle, data.tgrid
    dcells = average_source(data.d, tg)
    max_iter = max_iter or tg.n_steps + 5
    m = A.sgrid.m
    alpha = np.zeros((tg.n_steps + 1, m))
    rho = np.zeros_like(alpha)
    alphas, deltas = [], []
    worst_kkt = 0.0
    for k in range(1, max_iter + 1):
        src = dcells - np.diff(rho, axis=0) / tg.h - A.apply(rho[1:])
        sol = solve_derivative_vi(cone, src, A, tg, method, initial=-rho[0])
        worst_kkt = max(worst_kkt, sol.kkt_residual)
        alpha = rho + sol.delta.frames
        alphas.append(alpha)
        deltas.append(sol.delta.frames)
        new_rho = _lagged_obstacle_derivative(phi, u.frames, alpha)
        change = float(np.max(np.abs(new_rho - rho)))
        rho = new_rho
        if change < tol:
            break
    else:
        raise NonConvergenceError(f"derivative iteration did not settle in {max_iter} passes", residual=change)
    sgn = data.d_sign()
    checks = {"dvi_kkt_residual": worst_kkt, "alpha_frame0_zero": bool(np.all(alpha[0] == 0.0)), "d_sign": sgn}
    if sgn in (1, -1):
        chain = [sgn * (b - a) for a, b in zip([np.zeros_like(alpha)] + alphas[:-1], alphas)]
        worst_chain = max(0.0, -min(float(np.min(c)) for c in chain))
        checks.update(
            {
                "monotone_chain": worst_chain <= ORDER_TOL,
                "monotone_violation": worst_chain,
                "sign_ok": bool(np.all(sgn * alpha >= -ORDER_TOL)),
                "sign_violation": max(0.0, -float(np.min(sgn * alpha))),
            }
        )
    return SensitivityResult(SpaceTimeFunction(alpha, A.sgrid, tg, RIGHT), alphas, deltas, len(alphas), cone, mult, checks)


# ---------------------------------------------------------------------------
# Taylor check


def solve_shifted(args):
    """Worker: ``u_s`` by VI iteration from ``u`` with source ``f + s d``."""
    data, start, s, tol_fp = args
    direction = DECREASING if data.d_sign() == -1 else INCREASING
    rep = vi_iterate_qvi(data, start=start, direction=direction, tol_fp=tol_fp, shift=s, keep_iterates=False)
    return rep.limit.frames


def taylor_check(data: ProblemData, u: SpaceTimeFunction, alpha: SpaceTimeFunction, s_values=(0.2, 0.1, 0.05, 0.025, 0.0125), p: float = 2.0, tol_fp: float = 1e-13, mapper: Callable = map) -> list[dict]:
    """Remainder table ``r(s) = ||u_s - u - s alpha||_{Lp(H)} / s``.

    ``mapper`` may be an executor's ``map`` to solve the ``u_s`` concurrently;
    results keep the order of ``s_values``.
    """
    s_values = [float(s) for s in s_values]
    if any(s <= 0 for s in s_values) or any(b >= a for a, b in zip(s_values, s_values[1:])):
        raise InvalidParameterError("s values must be positive and strictly decreasing")
    solved = list(mapper(solve_shifted, [(data, u.frames, s, tol_fp) for s in s_values]))
    rows = []
    prev = None
    for s, us in zip(s_values, solved):
        quotient = (us - u.frames) / s
        rem = u.with_frames(quotient - alpha.frames)
        r = norms(rem, "LpH", p)
        row = {
            "s": s,
            "remainder": r,
            "ratio": (r / prev if prev else (0.0 if prev == 0.0 else math.nan)),
            "fd_gap_L2H": norms(rem, "L2H"),
            "frame0_zero": bool(np.all(quotient[0] == 0.0)),
        }
        rows.append(row)
        prev = r
    return rows


def taylor_verdicts(rows: list[dict], alpha_norm: float | None = None) -> dict:
    """Decay of the last three ratios, and the last gap against the trend of the three rows before it."""
    r = np.array([row["remainder"] for row in rows])
    s = np.array([row["s"] for row in rows])
    ratios = [row["ratio"] for row in rows[-3:]]
    decay = all(q <= 0.9 for q in ratios if not math.isnan(q)) and not any(math.isnan(q) for q in ratios)
    if np.all(r == 0):
        decay = True
    out = {"decay_ok": bool(decay), "ratios": [float(q) for q in ratios]}
    if len(rows) >= 4 and np.all(r[-4:-1] > 0):
        slope, icpt = np.polyfit(np.log(s[-4:-1]), np.log(r[-4:-1]), 1)
        pred = float(math.exp(icpt + slope * math.log(s[-1])))
        out.update({"trend_order": float(slope), "predicted_last": pred, "trend_ok": bool(rows[-1]["fd_gap_L2H"] <= 10 * pred)})
    else:
        out.update({"trend_order": math.nan, "predicted_last": 0.0, "trend_ok": bool(rows[-1]["fd_gap_L2H"] <= 1e-12)})
    if alpha_norm is not None:
        out["relative_last"] = float(r[-1] / alpha_norm) if alpha_norm > 0 else math.inf
    return out


def coincidence_behavior_check(u_report, alpha: SpaceTimeFunction, tol: float = 1e-7) -> dict:
    """Largest ``alpha`` and ``|alpha|`` over nodes where ``u`` touches its obstacle."""
    rep = _report_of(u_report)
    codes = rep.active_masks()
    a = alpha.frames
    on = codes > 0
    on[0] = False
    if not on.any():
        return {"coincidence_nodes": 0, "max_alpha": 0.0, "max_abs_alpha": 0.0, "upper_ok": True, "zero_ok": True}
    mx, mabs = float(np.max(a[on])), float(np.max(np.abs(a[on])))
    return {"coincidence_nodes": int(on.sum()), "max_alpha": mx, "max_abs_alpha": mabs, "upper_ok": mx <= tol, "zero_ok": mabs <= tol}
