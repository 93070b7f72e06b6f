import dataclasses

import numpy as np
import pytest

from pqvi.errors import InvalidParameterError, StaleSolutionError
from pqvi.grid import SpaceGrid, SpaceTimeFunction, TimeGrid, assemble_operator, norms
from pqvi.lcp import LCPProblem, solve_bruteforce_oracle
from pqvi.obstacles import ConstantMap
from pqvi.parabolic import vi_iterate_qvi
from pqvi.problem import ProblemData
from pqvi.profiles import Profile
from pqvi.sensitivity import (
    FREE,
    SIGN,
    ZERO,
    ConeSpec,
    alpha_iteration,
    coincidence_behavior_check,
    derivative_vi_pattern_oracle,
    extract_cone,
    solve_derivative_vi,
    taylor_check,
    taylor_verdicts,
)

from conftest import shipped_problem


def constant_problem(m=6, N=4, psi=0.05, f=1.0, d=1.0):
    sg, tg = SpaceGrid(1.0, m), TimeGrid(1.0, N)
    A = assemble_operator(sg, 1.0)
    fs = Profile("constant", f, rate=1.0).cells(sg, tg)
    ds = Profile("bump", d, width=0.3).cells(sg, tg)
    return ProblemData(fs, np.zeros(m), ConstantMap(psi, sg, tg), A, ds)


class TestCone:
    def test_all_free(self):
        data = constant_problem(psi=10.0)
        rep = vi_iterate_qvi(data)
        cone, mult = extract_cone(rep.limit, data, rep)
        assert cone.count(FREE) == cone.codes[1:].size
        np.testing.assert_allclose(mult.frames, 0.0, atol=1e-10)

    def test_fully_clamped(self):
        data = constant_problem(psi=0.0, f=5.0)
        rep = vi_iterate_qvi(data)
        cone, _ = extract_cone(rep.limit, data, rep)
        assert np.all(cone.codes[1:] == ZERO)

    def test_matches_oracle_active_sets(self):
        data = constant_problem(m=6, N=4, psi=0.06, f=1.0)
        rep = vi_iterate_qvi(data)
        cone, _ = extract_cone(rep.limit, data, rep)
        assert 0 < cone.count(ZERO) < cone.codes[1:].size
        u, tg, A = rep.limit.frames, data.tgrid, data.operator
        S, cells = A.stepped(tg.h), data.source_cells()
        for n in range(1, tg.n_steps + 1):
            o = solve_bruteforce_oracle(LCPProblem(S, u[n - 1] + tg.h * cells[n - 1], rep.final.obstacle[n]))
            np.testing.assert_array_equal(cone.codes[n], o.active.mask(6))

    def test_stale(self):
        data = constant_problem(psi=0.02)
        rep = vi_iterate_qvi(data)
        with pytest.raises(StaleSolutionError):
            extract_cone(rep.limit + 0.01, data, rep)


class TestDerivativeVi:
    def test_all_free_is_linear(self, small, rng):
        sg, tg, A = small
        src = rng.standard_normal((tg.n_steps, sg.m))
        cone = ConeSpec(np.zeros((tg.n_steps + 1, sg.m), dtype=int))
        delta = solve_derivative_vi(cone, src, A, tg).delta.frames
        S = A.stepped(tg.h)
        ref = np.zeros(sg.m)
        for n in range(tg.n_steps):
            ref = np.linalg.solve(S, ref + tg.h * src[n])
            np.testing.assert_allclose(delta[n + 1], ref, atol=1e-12)

    def test_all_zero(self, small, rng):
        sg, tg, A = small
        cone = ConeSpec(np.full((tg.n_steps + 1, sg.m), ZERO))
        assert np.all(solve_derivative_vi(cone, rng.standard_normal((tg.n_steps, sg.m)), A, tg).delta.frames == 0)

    def test_biactive_toy_vs_oracle(self, rng):
        sg, tg = SpaceGrid(1.0, 2), TimeGrid(1.0, 2)
        A = assemble_operator(sg, 1.0)
        codes = np.full((3, 2), SIGN)
        codes[0] = FREE
        for _ in range(20):
            src = 3 * rng.standard_normal((2, 2))
            ours = solve_derivative_vi(ConeSpec(codes), src, A, tg).delta.frames
            np.testing.assert_allclose(ours, derivative_vi_pattern_oracle(ConeSpec(codes), src, A, tg), atol=1e-12)

    def test_bad_codes(self):
        with pytest.raises(InvalidParameterError):
            ConeSpec(np.array([[0, 3]]))


class TestAlpha:
    def test_constant_map_one_pass(self):
        data = constant_problem(psi=0.02)
        rep = vi_iterate_qvi(data)
        res = alpha_iteration(rep, data)
        assert res.iterations == 1
        np.testing.assert_array_equal(res.alpha.frames, res.delta_iterates[0])

    def test_zero_direction(self):
        data = constant_problem(psi=0.02, d=0.0)
        rep = vi_iterate_qvi(data)
        assert np.all(alpha_iteration(rep, data).alpha.frames == 0)

    def test_missing_direction(self):
        data = dataclasses.replace(constant_problem(), d=None)
        with pytest.raises(InvalidParameterError):
            alpha_iteration(vi_iterate_qvi(data), data)

    def test_default_instance(self):
        data = shipped_problem("derivative-default").data
        rep = vi_iterate_qvi(data, tol_fp=1e-13, keep_iterates=False)
        res = alpha_iteration(rep, data)
        assert res.checks["monotone_chain"] and res.checks["sign_ok"] and res.checks["alpha_frame0_zero"]
        assert np.all(res.alpha.frames >= -1e-9)
        assert res.iterations > 1


class TestCoincidence:
    def test_inactive_is_vacuous(self):
        data = constant_problem(psi=10.0)
        rep = vi_iterate_qvi(data)
        rep_a = alpha_iteration(rep, data)
        out = coincidence_behavior_check(rep, rep_a.alpha)
        assert out["coincidence_nodes"] == 0 and out["zero_ok"]

    @pytest.mark.parametrize("sign", [1.0, -1.0])
    def test_clamped_superposition(self, sign):
        data = shipped_problem("derivative-clamped").data
        data = dataclasses.replace(data, d=data.d * sign)
        direction = "increasing" if sign > 0 else "decreasing"
        rep = vi_iterate_qvi(data, direction=direction, tol_fp=1e-13, keep_iterates=False)
        res = alpha_iteration(rep, data)
        out = coincidence_behavior_check(rep, res.alpha, tol=1e-7)
        assert out["coincidence_nodes"] > 0 and out["upper_ok"]
        if sign > 0:
            assert out["zero_ok"]


class TestTaylor:
    def test_fixed_obstacle(self):
        data = shipped_problem("taylor-vi").data
        rep = vi_iterate_qvi(data, tol_fp=1e-13, keep_iterates=False)
        alpha = alpha_iteration(rep, data).alpha
        rows = taylor_check(data, rep.limit, alpha)
        v = taylor_verdicts(rows, norms(alpha, "L2H"))
        assert all(b["remainder"] < a["remainder"] for a, b in zip(rows, rows[1:]))
        assert v["relative_last"] <= 1e-3
        assert all(r["frame0_zero"] for r in rows)

    def test_zero_direction(self):
        data = constant_problem(psi=0.02, d=0.0)
        rep = vi_iterate_qvi(data, tol_fp=1e-13)
        alpha = alpha_iteration(rep, data).alpha
        rows = taylor_check(data, rep.limit, alpha)
        assert max(r["remainder"] for r in rows) <= 1e-12

    def test_bad_s_values(self):
        data = constant_problem()
        u = SpaceTimeFunction.zeros(data.sgrid, data.tgrid)
        with pytest.raises(InvalidParameterError):
            taylor_check(data, u, u, s_values=(0.1, 0.2))
