"""Time-dependent solvers: parabolic VI, Rothe scheme for the QVI, monotone
VI iteration, the zero-obstacle transformation, and the plain linear solve.

All schemes are backward Euler with ``S = I + h A``.  Step ``n`` sees the
obstacle frozen at ``t_{n-1}``: for a given obstacle field ``psi`` the
constraint is ``z_n <= psi_{n-1}``.  The lagged field ``Psi`` with
``Psi_0 = psi_0`` and ``Psi_n = psi_{n-1}`` is what the solution is actually
compared against, and it is stored on every report.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solveh_banded

from .elliptic import FROM_SUB, FROM_SUPER, EllipticQviStep, solve_elliptic_qvi
from .errors import AssumptionViolation, InvalidDataError, InvalidParameterError, NonConvergenceError, ShapeError
from .grid import RIGHT, DiscreteOperator, SpaceTimeFunction, TimeGrid, average_source, inner_v, norm_h
from .lcp import LCPProblem, solve_lcp, solve_lower
from .problem import ProblemData

INCREASING = "increasing"
DECREASING = "decreasing"
ORDER_TOL = 1e-9


def lag(frames) -> np.ndarray:
    """``Psi_0 = psi_0``, ``Psi_n = psi_{n-1}``."""
    fr = frames.frames if isinstance(frames, SpaceTimeFunction) else np.asarray(frames, dtype=float)
    return np.concatenate([fr[:1], fr[:-1]], axis=0)


def _cells(f, tg: TimeGrid) -> np.ndarray:
    if isinstance(f, SpaceTimeFunction):
        return average_source(f, tg)
    cells = np.asarray(f, dtype=float)
    if cells.shape[0] != tg.n_steps:
        raise ShapeError(f"need {tg.n_steps} source rows, got {cells.shape[0]}")
    return cells


def _sup_change(a, b) -> float:
    with np.errstate(invalid="ignore"):
        diff = np.where(np.isinf(a) & np.isinf(b), 0.0, np.abs(a - b))
    return float(np.max(diff)) if diff.size else 0.0


def discrete_bounds(frames: np.ndarray, A: DiscreteOperator, tg: TimeGrid) -> dict:
    """``max_n ||z_n||_H``, ``h sum ||z_n||_V^2`` and ``(1/h) sum ||z_n - z_{n-1}||_H^2``."""
    sg, h = A.sgrid, tg.h
    dz = np.diff(frames, axis=0)
    return {
        "max_H": float(np.max(norm_h(frames, sg))),
        "l2v_sq": float(h * np.sum(inner_v(frames[1:], frames[1:], sg))),
        "dt_sq": float(np.sum(norm_h(dz, sg) ** 2) / h),
    }


@dataclass
class ParabolicSolveReport:
    solution: SpaceTimeFunction
    per_step: list
    multipliers: np.ndarray
    obstacle: np.ndarray
    bounds: dict
    flags: dict = field(default_factory=dict)
    outer_iters: list = field(default_factory=list)

    @property
    def feasibility(self) -> float:
        """``max(z_n - Psi_n)`` over finite obstacle entries, frames 1..N."""
        z, psi = self.solution.frames[1:], self.obstacle[1:]
        with np.errstate(invalid="ignore"):
            gap = np.where(np.isfinite(psi), z - psi, -np.inf)
        return float(np.max(gap)) if gap.size else -np.inf

    @property
    def active_fraction(self) -> float:
        n = sum(len(s.active.contact) for s in self.per_step)
        return n / max(1, len(self.per_step) * self.solution.sgrid.m)

    def active_masks(self) -> np.ndarray:
        """Codes per (n, node): 2 strongly active, 1 biactive, 0 inactive; frame 0 zero."""
        m = self.solution.sgrid.m
        return np.stack([np.zeros(m, dtype=np.int8)] + [s.active.mask(m) for s in self.per_step])


def _wrap(frames, A, tg) -> SpaceTimeFunction:
    return SpaceTimeFunction(frames, A.sgrid, tg, RIGHT)


def parabolic_vi(f, psi, z0, A: DiscreteOperator, tg: TimeGrid, method: str = "pdas", warm: list | None = None, init_tol: float = 1e-9) -> ParabolicSolveReport:
    """Backward-Euler parabolic VI ``z <= psi`` with the obstacle frozen at the left endpoint.

    ``f`` is a source field (averaged per cell) or an ``(N, m)`` array of cell
    values.  ``warm`` may hold previous active-set guesses per step.
    """
    cells = _cells(f, tg)
    psi_fr = psi.frames if isinstance(psi, SpaceTimeFunction) else np.asarray(psi, dtype=float)
    m = A.sgrid.m
    if psi_fr.shape != (tg.n_steps + 1, m):
        raise ShapeError(f"obstacle has shape {psi_fr.shape}, expected {(tg.n_steps + 1, m)}")
    z0 = np.asarray(z0, dtype=float)
    with np.errstate(invalid="ignore"):
        excess = float(np.max(np.where(np.isfinite(psi_fr[0]), z0 - psi_fr[0], -np.inf)))
    if excess > init_tol:
        raise InvalidDataError(f"initial data exceeds the initial obstacle by {excess:.3e}")
    big_psi = lag(psi_fr)
    S = A.stepped(tg.h)
    h = tg.h
    frames = np.empty((tg.n_steps + 1, m))
    mult = np.zeros_like(frames)
    frames[0] = z0
    steps = []
    for n in range(1, tg.n_steps + 1):
        p = LCPProblem(S, frames[n - 1] + h * cells[n - 1], big_psi[n])
        kw = {}
        if method == "pdas" and warm is not None:
            kw["active0"] = warm[n - 1]
        sol = solve_lcp(p, method, **kw)
        frames[n] = sol.z
        mult[n] = sol.multiplier / h
        steps.append(sol)
    return ParabolicSolveReport(_wrap(frames, A, tg), steps, mult, big_psi, discrete_bounds(frames, A, tg))


def unconstrained_solve(f, z0, A: DiscreteOperator, tg: TimeGrid) -> SpaceTimeFunction:
    """Linear backward Euler ``(z_n - z_{n-1})/h + A z_n = f_n`` (banded Cholesky)."""
    cells = _cells(f, tg)
    m, h = A.sgrid.m, tg.h
    band = np.zeros((2, m))
    band[1] = 1.0 + h * A.diag
    band[0, 1:] = h * A.off
    frames = np.empty((tg.n_steps + 1, m))
    frames[0] = z0
    for n in range(1, tg.n_steps + 1):
        frames[n] = solveh_banded(band, frames[n - 1] + h * cells[n - 1])
    return _wrap(frames, A, tg)


# ---------------------------------------------------------------------------
# Rothe scheme


def rothe_solve_qvi(data: ProblemData, direction: str = "minimal", method: str = "pdas", tol_fp: float = 1e-11, max_outer: int = 500, strict: bool = False) -> ParabolicSolveReport:
    """Rothe scheme: one elliptic QVI per step with ``v -> Phi(v)(t_{n-1})``.

    ``direction`` ``minimal`` starts each step from ``z_{n-1}``, ``maximal``
    from the unconstrained step.  Data hypotheses are checked up front and
    reported in ``flags``; a failed hypothesis only warns.
    """
    if direction not in ("minimal", "maximal"):
        raise InvalidParameterError(f"direction must be 'minimal' or 'maximal', got {direction!r}")
    A, phi, tg = data.operator, data.obstacle, data.tgrid
    flags = data.check_flags()
    for key in ("f_nonnegative", "f_increasing", "z0_nonnegative", "z0_below_obstacle"):
        if not flags[key]:
            warnings.warn(f"data hypothesis {key} does not hold", RuntimeWarning, stacklevel=2)
    cells = data.source_cells()
    S = A.stepped(tg.h)
    h, m = tg.h, A.sgrid.m
    frames = np.empty((tg.n_steps + 1, m))
    mult = np.zeros_like(frames)
    obst = np.empty_like(frames)
    frames[0] = data.z0
    obst[0] = phi.frozen(data.z0, 0)
    steps, outer = [], []
    monotone_ok = True
    sandwich = 0.0
    feas = -np.inf
    for n in range(1, tg.n_steps + 1):
        b = frames[n - 1] + h * cells[n - 1]
        zbar = np.linalg.solve(S, b)
        start = frames[n - 1] if direction == "minimal" else zbar
        step = EllipticQviStep(S, b, lambda v, k=n - 1: phi.frozen(v, k), start, FROM_SUB if direction == "minimal" else FROM_SUPER)
        try:
            res = solve_elliptic_qvi(step, tol_fp=tol_fp, max_outer=max_outer, method=method, strict=strict)
        except NonConvergenceError as exc:
            raise NonConvergenceError(f"step {n}: {exc}", residual=exc.residual, step=n) from exc
        except AssumptionViolation as exc:
            raise AssumptionViolation(f"step {n}: {exc}", node=exc.node, iteration=exc.iteration, magnitude=exc.magnitude) from exc
        frames[n] = res.z
        obst[n] = res.obstacle
        mult[n] = res.lcp.multiplier / h
        steps.append(res.lcp)
        outer.append(res.outer_iters)
        monotone_ok &= res.monotone_ok
        sandwich = max(sandwich, float(np.max(frames[n - 1] - res.z)), float(np.max(res.z - zbar)))
        feas = max(feas, res.feasibility)
    flags.update(
        {
            "monotone_in_time": bool(np.all(np.diff(frames, axis=0) >= -ORDER_TOL)),
            "sandwich_violation": sandwich,
            "feasibility": feas,
            "feasible": bool(feas <= 1e-8),
            "outer_monotone": bool(monotone_ok),
        }
    )
    return ParabolicSolveReport(_wrap(frames, A, tg), steps, mult, obst, discrete_bounds(frames, A, tg), flags, outer)


# ---------------------------------------------------------------------------
# VI iteration


@dataclass
class ViIterationReport:
    iterates: list
    limit: SpaceTimeFunction
    direction: str
    outer_iters: int
    final: ParabolicSolveReport
    monotone_ok: bool
    max_monotone_violation: float
    feasibility: float

    @property
    def feasible(self) -> bool:
        return self.feasibility <= 1e-7


def vi_iterate_qvi(data: ProblemData, start=None, direction: str = INCREASING, tol_fp: float = 1e-8, max_outer: int = 200, method: str = "pdas", shift: float = 0.0, keep_iterates: bool = True) -> ViIterationReport:
    """Monotone iteration ``z^k = S(f, Phi(z^{k-1}))`` for the parabolic QVI.

    ``start`` defaults to 0 after the initial frame (increasing) or the unconstrained solve
    (decreasing).  The first iterate must lie above (below) ``start``; if not,
    ``start`` is no sub-(super)solution and :class:`AssumptionViolation` is
    raised.  Stops once the obstacle frames that the next solve would use
    change by less than ``tol_fp``.  ``shift`` solves with source ``f + shift*d``.
    """
    if direction not in (INCREASING, DECREASING):
        raise InvalidParameterError(f"direction must be {INCREASING!r} or {DECREASING!r}")
    A, phi, tg = data.operator, data.obstacle, data.tgrid
    cells = data.source_cells(shift)
    if start is None:
        if direction == INCREASING:
            start = np.zeros((tg.n_steps + 1, A.sgrid.m))
            start[0] = data.z0
        else:
            start = unconstrained_solve(cells, data.z0, A, tg).frames
    z = start.frames.copy() if isinstance(start, SpaceTimeFunction) else np.array(start, dtype=float)
    sign = 1.0 if direction == INCREASING else -1.0
    psi = phi.evaluate(z).frames
    iterates = [z.copy()] if keep_iterates else []
    worst = 0.0
    warm = None
    scale = 1.0 + float(np.max(np.abs(z)))
    for k in range(1, max_outer + 1):
        rep = parabolic_vi(cells, psi, data.z0, A, tg, method=method, warm=warm)
        warm = [s.active_guess for s in rep.per_step]
        new = rep.solution.frames
        viol = float(np.max(sign * (z - new)))
        if viol > ORDER_TOL * scale:
            n, i = np.unravel_index(int(np.argmax(sign * (z - new))), z.shape)
            if k == 1:
                raise AssumptionViolation(
                    f"start is not a {'sub' if sign > 0 else 'super'}solution: first iterate crosses it at step {n}, node {i} by {viol:.3e}",
                    node=(int(n), int(i)),
                    iteration=k,
                    magnitude=viol,
                )
            worst = max(worst, viol)
        z = new
        if keep_iterates:
            iterates.append(z.copy())
        new_psi = phi.evaluate(z).frames
        change = _sup_change(new_psi[:-1], psi[:-1])
        psi = new_psi
        if change < tol_fp:
            lim = _wrap(z, A, tg)
            feas = float(np.max(np.where(np.isfinite(lag(psi)[1:]), z[1:] - lag(psi)[1:], -np.inf)))
            return ViIterationReport(iterates, lim, direction, k, rep, worst == 0.0, worst, feas)
    raise NonConvergenceError(f"VI iteration did not settle in {max_outer} outer steps", residual=change, s=shift or None)


# ---------------------------------------------------------------------------
# zero-obstacle transformation


def transform_source(g, psi_eval, A: DiscreteOperator, tg: TimeGrid) -> np.ndarray:
    """Cell values ``(Psi_n - Psi_{n-1})/h + A Psi_n - g_n`` with the lagged obstacle."""
    cells = _cells(g, tg)
    big = lag(psi_eval)
    if not np.all(np.isfinite(big)):
        raise InvalidDataError("the transformation needs a finite obstacle")
    return np.diff(big, axis=0) / tg.h + A.apply(big[1:]) - cells


def lower_obstacle_vi(G, w0, A: DiscreteOperator, tg: TimeGrid, method: str = "pdas") -> ParabolicSolveReport:
    """Backward Euler for ``w >= 0``: ``(w_n - w_{n-1})/h + A w_n - G_n = mu_n >= 0``."""
    cells = _cells(G, tg)
    S = A.stepped(tg.h)
    m, h = A.sgrid.m, tg.h
    frames = np.empty((tg.n_steps + 1, m))
    mult = np.zeros_like(frames)
    frames[0] = w0
    steps = []
    for n in range(1, tg.n_steps + 1):
        sol = solve_lower(S, frames[n - 1] + h * cells[n - 1], 0.0, method)
        frames[n] = sol.z
        mult[n] = sol.multiplier / h
        steps.append(sol)
    return ParabolicSolveReport(_wrap(frames, A, tg), steps, mult, np.zeros_like(frames), discrete_bounds(frames, A, tg))


def zero_obstacle_transform(g, psi_eval, z0, A: DiscreteOperator, tg: TimeGrid, method: str = "pdas", tol: float = 1e-9) -> SpaceTimeFunction:
    """Solution ``w`` of the zero lower-obstacle problem with ``z = Psi - w``.

    Source ``G = L Psi - g`` and initial value ``w0 = psi_eval_0 - z0``, which
    must be nonnegative.
    """
    psi_fr = psi_eval.frames if isinstance(psi_eval, SpaceTimeFunction) else np.asarray(psi_eval, dtype=float)
    w0 = psi_fr[0] - np.asarray(z0, dtype=float)
    if float(np.min(w0)) < -tol:
        raise InvalidDataError(f"initial data lies above the initial obstacle by {-float(np.min(w0)):.3e}")
    w0 = np.maximum(w0, 0.0)
    G = transform_source(g, psi_fr, A, tg)
    return lower_obstacle_vi(G, w0, A, tg, method).solution


def transform_identity_residual(g, psi_eval, z0, A: DiscreteOperator, tg: TimeGrid, method: str = "pdas") -> float:
    """``max |S(g, psi) + w - Psi|`` with both sides solved independently."""
    psi_fr = psi_eval.frames if isinstance(psi_eval, SpaceTimeFunction) else np.asarray(psi_eval, dtype=float)
    z = parabolic_vi(g, psi_fr, z0, A, tg, method).solution.frames
    w = zero_obstacle_transform(g, psi_fr, z0, A, tg, method).frames
    return float(np.max(np.abs(z + w - lag(psi_fr))))


def l1h_cells(cells, sg, tg: TimeGrid) -> float:
    return tg.h * float(np.sum(norm_h(np.asarray(cells, dtype=float), sg)))
