"""One elliptic QVI step: find ``z`` with ``z <= Phi(z)`` frozen at one time.

Solved by the monotone iteration ``z^{k+1} = LCP(b, obstacle_eval(z^k))``
started from a subsolution (giving the minimal solution) or a supersolution
(giving the maximal one).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import AssumptionViolation, InvalidParameterError, NonConvergenceError
from .lcp import LCPProblem, LCPSolution, solve_lcp

FROM_SUB = "from-subsolution"
FROM_SUPER = "from-supersolution"
MONOTONE_TOL = 1e-9


@dataclass(frozen=True)
class EllipticQviStep:
    system: np.ndarray
    rhs: np.ndarray
    obstacle_eval: Callable[[np.ndarray], np.ndarray]
    start: np.ndarray
    direction: str = FROM_SUB

    def __post_init__(self):
        if self.direction not in (FROM_SUB, FROM_SUPER):
            raise InvalidParameterError(f"unknown direction {self.direction!r}")


@dataclass(frozen=True)
class EllipticQviResult:
    z: np.ndarray
    outer_iters: int
    monotone_ok: bool
    lcp: LCPSolution
    obstacle: np.ndarray
    max_monotone_violation: float
    feasibility: float


def solve_elliptic_qvi(step: EllipticQviStep, tol_fp: float = 1e-11, max_outer: int = 500, method: str = "pdas", strict: bool = False) -> EllipticQviResult:
    """Monotone fixed-point iteration for one elliptic QVI.

    The loop stops once the obstacle produced by the newest iterate differs
    from the obstacle it was computed with by less than ``tol_fp`` (sup norm),
    so the returned ``z`` solves the LCP with its own obstacle up to that
    tolerance.  A constant obstacle map therefore needs one LCP solve.

    Monotonicity of the iterates is checked against the declared direction.
    A violation is flagged and warned about, or raised when ``strict``.
    """
    sign = 1.0 if step.direction == FROM_SUB else -1.0
    z = np.asarray(step.start, dtype=float).copy()
    psi = np.asarray(step.obstacle_eval(z), dtype=float)
    template = LCPProblem(step.system, step.rhs, psi)
    guess = None
    worst = 0.0
    for k in range(1, max_outer + 1):
        kw = {"active0": guess} if method == "pdas" else {}
        sol = solve_lcp(template.with_bound(psi), method, **kw)
        guess = sol.active_guess
        viol = float(np.max(sign * (z - sol.z)))
        if viol > MONOTONE_TOL:
            worst = max(worst, viol)
            node = int(np.argmax(sign * (z - sol.z)))
            msg = f"outer iterate {k} not monotone ({step.direction}) at node {node} by {viol:.3e}"
            if strict:
                raise AssumptionViolation(msg, node=node, iteration=k, magnitude=viol)
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
        z = sol.z
        new_psi = np.asarray(step.obstacle_eval(z), dtype=float)
        with np.errstate(invalid="ignore"):
            diff = np.where(np.isinf(new_psi) & np.isinf(psi), 0.0, np.abs(new_psi - psi))
        change = float(np.max(diff)) if diff.size else 0.0
        psi = new_psi
        if change < tol_fp:
            with np.errstate(invalid="ignore"):
                feas = float(np.max(np.where(np.isfinite(psi), z - psi, -np.inf)))
            return EllipticQviResult(z, k, worst <= MONOTONE_TOL, sol, psi, worst, feas)
    raise NonConvergenceError(f"elliptic QVI iteration did not settle in {max_outer} outer steps", residual=change)
