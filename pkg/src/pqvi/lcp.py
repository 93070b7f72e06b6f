"""Single-step upper-obstacle problems as linear complementarity problems.

Find ``z`` with ``z <= psi``, ``lam = b - S z >= 0`` and ``lam * (psi - z) = 0``
for a symmetric positive definite M-matrix ``S`` (in practice ``I + h A``).
Nodes with ``psi = +inf`` are unconstrained.

Three solvers share this contract: projected SOR, a primal-dual active-set
method, and an exhaustive active-set enumeration used as an oracle.  Lower
obstacle problems are handled by negation in :func:`solve_lower`.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import InternalInconsistencyError, InvalidParameterError, NonConvergenceError, ShapeError, SizeError

TOL_MULT_REL = 1e-8
TOL_GAP_REL = 1e-9


@dataclass(frozen=True)
class ActiveSet:
    strongly_active: np.ndarray
    biactive: np.ndarray
    inactive: np.ndarray

    @property
    def contact(self) -> np.ndarray:
        return np.union1d(self.strongly_active, self.biactive)

    def mask(self, m: int) -> np.ndarray:
        """Integer code per node: 2 strongly active, 1 biactive, 0 inactive."""
        code = np.zeros(m, dtype=np.int8)
        code[self.biactive] = 1
        code[self.strongly_active] = 2
        return code


def tol_mult(lam) -> float:
    lam = np.asarray(lam, dtype=float)
    return TOL_MULT_REL * (1.0 + (float(np.max(np.abs(lam))) if lam.size else 0.0))


def tol_gap(psi) -> float:
    psi = np.asarray(psi, dtype=float)
    fin = psi[np.isfinite(psi)]
    return TOL_GAP_REL * (1.0 + (float(np.max(np.abs(fin))) if fin.size else 0.0))


def classify(z, lam, psi) -> ActiveSet:
    """Split nodes into strongly active, biactive and inactive.

    Contact means ``psi - z <= tol_gap``; a contact node is strongly active
    when its multiplier exceeds ``tol_mult``, otherwise biactive.
    """
    z, lam, psi = (np.asarray(a, dtype=float) for a in (z, lam, psi))
    contact = np.isfinite(psi) & (psi - z <= tol_gap(psi))
    strong = contact & (lam > tol_mult(lam))
    bi = contact & ~strong
    return ActiveSet(np.flatnonzero(strong), np.flatnonzero(bi), np.flatnonzero(~contact))


@dataclass(frozen=True)
class LCPProblem:
    system: np.ndarray
    rhs: np.ndarray
    upper_bound: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.system, dtype=float)
        b = np.asarray(self.rhs, dtype=float)
        try:
            psi = np.broadcast_to(np.asarray(self.upper_bound, dtype=float), b.shape).copy()
        except ValueError:
            raise ShapeError(f"upper bound does not match right-hand side of shape {b.shape}") from None
        if s.ndim != 2 or s.shape[0] != s.shape[1] or s.shape[0] != b.shape[0] or b.ndim != 1:
            raise ShapeError(f"inconsistent LCP shapes {s.shape}, {b.shape}")
        if np.any(np.isnan(psi)) or np.any(psi == -np.inf):
            raise InvalidParameterError("upper bound must be finite or +inf")
        object.__setattr__(self, "system", s)
        object.__setattr__(self, "rhs", b)
        object.__setattr__(self, "upper_bound", psi)

    @property
    def m(self) -> int:
        return self.rhs.shape[0]

    def with_bound(self, psi) -> "LCPProblem":
        return LCPProblem(self.system, self.rhs, psi)


@dataclass(frozen=True)
class LCPSolution:
    z: np.ndarray
    multiplier: np.ndarray
    active: ActiveSet
    iterations: int
    residual: float
    method: str = ""
    active_guess: np.ndarray = field(default=None, repr=False)


def kkt_residual(p: LCPProblem, z, lam=None) -> float:
    """Largest violation among feasibility, dual sign and complementarity."""
    z = np.asarray(z, dtype=float)
    lam = p.rhs - p.system @ z if lam is None else np.asarray(lam, dtype=float)
    fin = np.isfinite(p.upper_bound)
    gap = np.where(fin, p.upper_bound - z, np.inf)
    r = [0.0]
    r.append(float(np.max(np.maximum(-gap, 0.0))))
    r.append(float(np.max(np.maximum(-lam, 0.0))))
    if np.any(fin):
        r.append(float(np.max(np.abs(lam[fin] * gap[fin]))))
    if np.any(~fin):
        r.append(float(np.max(np.abs(lam[~fin]))))
    return max(r)


def _finish(p: LCPProblem, z, iterations, method, guess=None) -> LCPSolution:
    lam = p.rhs - p.system @ z
    return LCPSolution(
        z=z,
        multiplier=lam,
        active=classify(z, lam, p.upper_bound),
        iterations=iterations,
        residual=kkt_residual(p, z, lam),
        method=method,
        active_guess=guess,
    )


def solve_psor(p: LCPProblem, tol: float = 1e-10, max_iter: int = 100_000, relaxation: float = 1.5, z0=None) -> LCPSolution:
    """Projected successive over-relaxation with clamp ``min(., psi)``."""
    if not 0 < relaxation < 2:
        raise InvalidParameterError(f"relaxation must lie in (0, 2), got {relaxation}")
    s, b, psi = p.system, p.rhs, p.upper_bound
    diag = np.diag(s).copy()
    rows = [s[i] for i in range(p.m)]
    z = np.minimum(np.zeros(p.m) if z0 is None else np.array(z0, dtype=float), psi)
    change = np.inf
    for it in range(1, max_iter + 1):
        change = 0.0
        for i in range(p.m):
            r = b[i] - rows[i] @ z
            zi = min(z[i] + relaxation * r / diag[i], psi[i])
            change = max(change, abs(zi - z[i]))
            z[i] = zi
        if change < tol:
            return _finish(p, z, it, "psor")
    raise NonConvergenceError(f"PSOR did not converge in {max_iter} sweeps", residual=change)


def _reduced_solve(s, b, psi, active):
    z = np.where(active, psi, 0.0)
    free = ~active
    if np.any(free):
        rhs = b[free] - s[np.ix_(free, active)] @ psi[active]
        z[free] = np.linalg.solve(s[np.ix_(free, free)], rhs)
    return z


def solve_pdas(p: LCPProblem, tol: float = 0.0, max_iter: int = 200, active0=None) -> LCPSolution:
    """Primal-dual active-set method.

    Each iteration solves the reduced system with ``z = psi`` on the guessed
    active set, then re-guesses from ``lam + c (z - psi) > thr`` where ``thr``
    is a roundoff-level threshold (so that nodes with numerically zero
    multiplier do not flip back and forth).  Stops when the guess repeats;
    ``iterations`` counts linear solves.
    """
    s, b, psi = p.system, p.rhs, p.upper_bound
    fin = np.isfinite(psi)
    c = float(np.max(np.diag(s)))
    scale = 1.0 + float(np.max(np.abs(b))) + (float(np.max(np.abs(s @ np.where(fin, psi, 0.0)))) if np.any(fin) else 0.0)
    thr = max(tol, 64 * np.finfo(float).eps * scale)
    active = np.zeros(p.m, dtype=bool) if active0 is None else (np.asarray(active0, dtype=bool) & fin)
    seen = set()
    for it in range(1, max_iter + 1):
        z = _reduced_solve(s, b, psi, active)
        lam = b - s @ z
        with np.errstate(invalid="ignore"):
            score = np.where(active, lam, c * (z - np.where(fin, psi, np.inf)))
        new = fin & (score > thr) | (active & fin & (np.abs(score) <= thr))
        if np.array_equal(new, active):
            return _finish(p, z, it, "pdas", guess=active)
        key = new.tobytes()
        if key in seen:
            # cycling between sets: fall back to PSOR started from the current iterate
            sol = solve_psor(p, z0=np.minimum(z, psi))
            return LCPSolution(sol.z, sol.multiplier, sol.active, it + sol.iterations, sol.residual, "pdas+psor", active)
        seen.add(active.tobytes())
        active = new
    raise NonConvergenceError(f"PDAS did not settle in {max_iter} iterations", residual=kkt_residual(p, z))


def solve_bruteforce_oracle(p: LCPProblem, max_nodes: int = 20) -> LCPSolution:
    """Enumerate active sets over constrained nodes, smallest sets first."""
    fin_idx = np.flatnonzero(np.isfinite(p.upper_bound))
    if fin_idx.size > max_nodes:
        raise SizeError(f"oracle limited to {max_nodes} constrained nodes, got {fin_idx.size}")
    s, b, psi = p.system, p.rhs, p.upper_bound
    fin = np.isfinite(psi)
    scale = 1.0 + float(np.max(np.abs(b))) + (float(np.max(np.abs(s @ np.where(fin, psi, 0.0)))) if fin.any() else 0.0)
    tol = 1e-10 * scale
    count = 0
    for k in range(fin_idx.size + 1):
        for subset in itertools.combinations(fin_idx, k):
            count += 1
            active = np.zeros(p.m, dtype=bool)
            active[list(subset)] = True
            z = _reduced_solve(s, b, psi, active)
            lam = b - s @ z
            if np.all(z[fin] <= psi[fin] + tol) and np.all(lam[active] >= -tol):
                return _finish(p, z, count, "oracle", guess=active)
    raise InternalInconsistencyError("no active set satisfies the KKT conditions")


SOLVERS = {"pdas": solve_pdas, "psor": solve_psor, "oracle": solve_bruteforce_oracle}


def solve_lcp(p: LCPProblem, method: str = "pdas", **kw) -> LCPSolution:
    try:
        solver = SOLVERS[method]
    except KeyError:
        raise InvalidParameterError(f"unknown LCP method {method!r}") from None
    return solver(p, **kw)


def solve_lower(system, rhs, lower, method: str = "pdas", **kw) -> LCPSolution:
    """Solve ``z >= lower``, ``mu = S z - b >= 0``, ``mu (z - lower) = 0`` by negation.

    The returned ``multiplier`` is ``mu`` (nonnegative) and ``z`` is in the
    original orientation.
    """
    lower = np.broadcast_to(np.asarray(lower, dtype=float), np.shape(rhs))
    neg = solve_lcp(LCPProblem(system, -np.asarray(rhs, dtype=float), -lower), method, **kw)
    return LCPSolution(-neg.z, neg.multiplier, neg.active, neg.iterations, neg.residual, neg.method, neg.active_guess)
