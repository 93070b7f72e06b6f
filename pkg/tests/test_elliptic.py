import warnings

import numpy as np
import pytest

from pqvi.elliptic import FROM_SUB, FROM_SUPER, EllipticQviStep, solve_elliptic_qvi
from pqvi.errors import AssumptionViolation, InvalidParameterError, NonConvergenceError
from pqvi.grid import SpaceGrid, assemble_operator
from pqvi.lcp import LCPProblem, solve_bruteforce_oracle


@pytest.fixture
def S4():
    return assemble_operator(SpaceGrid(1.0, 4), 1.0).stepped(0.1)


class TestEllipticQvi:
    def test_constant_map_one_iteration(self, S4):
        psi0 = np.array([0.2, 0.4, 0.4, 0.2])
        b = S4 @ np.ones(4)
        res = solve_elliptic_qvi(EllipticQviStep(S4, b, lambda v: psi0, np.zeros(4)))
        assert res.outer_iters == 1
        np.testing.assert_allclose(res.z, solve_bruteforce_oracle(LCPProblem(S4, b, psi0)).z, atol=1e-10)

    def test_affine_map_self_consistent(self, S4):
        theta, c = 0.5, 1.0
        b = S4 @ np.full(4, 1.2)
        step = EllipticQviStep(S4, b, lambda v: c + theta * v, np.zeros(4))
        res = solve_elliptic_qvi(step, tol_fp=1e-13)
        z = res.z
        # z must solve the LCP with its own obstacle
        own = solve_bruteforce_oracle(LCPProblem(S4, b, c + theta * z))
        np.testing.assert_allclose(own.z, z, atol=1e-10)
        # brute force over which nodes sit on the self-consistent obstacle z = c/(1-theta)
        best = None
        for mask in range(16):
            act = np.array([(mask >> i) & 1 for i in range(4)], dtype=bool)
            x = np.zeros(4)
            x[act] = c / (1 - theta)
            free = ~act
            if free.any():
                x[free] = np.linalg.solve(S4[np.ix_(free, free)], b[free] - S4[np.ix_(free, act)] @ x[act])
            lam = b - S4 @ x
            if np.all(x <= c + theta * x + 1e-12) and np.all(lam[act] >= -1e-12) and np.allclose(lam[free], 0):
                best = x
                break
        assert best is not None
        np.testing.assert_allclose(z, best, atol=1e-9)

    def test_two_sided_runs_agree(self, S4):
        theta, c = 0.5, 1.0
        b = S4 @ np.full(4, 1.2)
        phi = lambda v: c + theta * v  # noqa: E731
        lo = solve_elliptic_qvi(EllipticQviStep(S4, b, phi, np.zeros(4), FROM_SUB), tol_fp=1e-13)
        sup = np.linalg.solve(S4, b)
        hi = solve_elliptic_qvi(EllipticQviStep(S4, b, phi, sup, FROM_SUPER), tol_fp=1e-13)
        assert lo.monotone_ok and hi.monotone_ok
        np.testing.assert_allclose(lo.z, hi.z, atol=1e-7)

    def test_bad_direction(self, S4):
        with pytest.raises(InvalidParameterError):
            EllipticQviStep(S4, np.ones(4), lambda v: v, np.zeros(4), "sideways")

    def test_monotonicity_violation(self, S4):
        b = S4 @ np.ones(4)
        # decreasing map breaks the order argument
        step = EllipticQviStep(S4, b, lambda v: 1.0 - 0.5 * v, np.full(4, 5.0), FROM_SUB)
        with pytest.raises(AssumptionViolation) as exc:
            solve_elliptic_qvi(step, strict=True)
        assert exc.value.node is not None and exc.value.iteration is not None
        with warnings.catch_warnings(record=True) as rec:
            warnings.simplefilter("always")
            res = solve_elliptic_qvi(step, tol_fp=1e-12)
        assert not res.monotone_ok and rec

    def test_nonconvergence(self, S4):
        b = S4 @ np.full(4, 10.0)
        step = EllipticQviStep(S4, b, lambda v: 1.0 + 0.999 * v, np.zeros(4))
        with pytest.raises(NonConvergenceError):
            solve_elliptic_qvi(step, tol_fp=1e-14, max_outer=3)
