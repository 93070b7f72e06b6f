import numpy as np
import pytest
from scipy.integrate import trapezoid

from pqvi.errors import InvalidParameterError, ShapeError
from pqvi.grid import (
    RIGHT,
    ROTHE,
    SpaceGrid,
    SpaceTimeFunction,
    TimeGrid,
    assemble_operator,
    average_source,
    build_interpolants,
    dual_norm,
    from_csv,
    h1_seminorm_sq,
    norm_h,
    norms,
    to_csv,
)


class TestGrids:
    def test_spacing(self):
        sg = SpaceGrid(2.0, 3)
        assert sg.dx == pytest.approx(0.5)
        np.testing.assert_allclose(sg.nodes, [0.5, 1.0, 1.5])

    def test_time_nodes(self):
        tg = TimeGrid(1.0, 4)
        np.testing.assert_allclose(tg.nodes, [0, 0.25, 0.5, 0.75, 1.0])
        assert tg.refined(2).n_steps == 8

    @pytest.mark.parametrize("args", [(0.0, 3), (1.0, 0), (-1.0, 2)])
    def test_invalid(self, args):
        with pytest.raises(InvalidParameterError):
            SpaceGrid(*args)


class TestOperator:
    def test_m_matrix_row_sums(self):
        A = assemble_operator(SpaceGrid(1.0, 8), 1.0)
        rows = A.matrix.sum(axis=1)
        assert rows[0] > 0 and rows[-1] > 0
        np.testing.assert_allclose(rows[1:-1], 0.0, atol=1e-9)
        off = A.matrix - np.diag(np.diag(A.matrix))
        assert np.all(off <= 0)

    def test_bad_diffusivity(self):
        with pytest.raises(InvalidParameterError):
            assemble_operator(SpaceGrid(1.0, 4), 0.0)

    def test_eigenpairs(self):
        A = assemble_operator(SpaceGrid(1.0, 9), 0.7, 0.3)
        q, lam = A.eigenvectors, A.eigenvalues
        np.testing.assert_allclose(A.matrix @ q, q * lam, atol=1e-9)

    def test_constants_bracket_form(self, rng):
        A = assemble_operator(SpaceGrid(1.0, 11), 0.5, 0.2)
        sg = A.sgrid
        for _ in range(20):
            v = rng.standard_normal(sg.m)
            vv = sg.dx * v @ v + sg.dx * np.sum(np.diff(np.pad(v, 1)) ** 2) / sg.dx**2
            assert A.form(v, v) >= A.c_a * vv * (1 - 1e-12)
            assert A.form(v, v) <= A.c_b * vv * (1 + 1e-12)

    def test_dual_norm_of_riesz(self, rng):
        sg = SpaceGrid(1.0, 7)
        f = rng.standard_normal(sg.m)
        K = assemble_operator(sg, 1.0).matrix
        v = np.linalg.solve(np.eye(sg.m) + K, f)
        assert dual_norm(f, sg) == pytest.approx(np.sqrt(sg.dx * f @ v), rel=1e-12)


class TestSpaceTime:
    def test_shape_checked(self):
        sg, tg = SpaceGrid(1.0, 3), TimeGrid(1.0, 2)
        with pytest.raises(ShapeError):
            SpaceTimeFunction(np.zeros((2, 3)), sg, tg)

    def test_frames_read_only(self):
        sg, tg = SpaceGrid(1.0, 3), TimeGrid(1.0, 2)
        u = SpaceTimeFunction.zeros(sg, tg)
        with pytest.raises(ValueError):
            u.frames[0, 0] = 1.0

    def test_evaluation_by_kind(self):
        sg, tg = SpaceGrid(1.0, 1), TimeGrid(1.0, 2)
        fr = np.array([[0.0], [1.0], [2.0]])
        right, left, rothe = build_interpolants(fr, sg, tg)
        assert right.at(0.25)[0] == 1.0
        assert left.at(0.25)[0] == 0.0
        assert rothe.at(0.25)[0] == pytest.approx(0.5)

    def test_constant_frames_interpolants_agree(self):
        sg, tg = SpaceGrid(1.0, 4), TimeGrid(1.0, 5)
        for u in build_interpolants(np.full((6, 4), 3.0), sg, tg):
            for t in (0.05, 0.5, 0.93):
                np.testing.assert_allclose(u.at(t), 3.0)

    def test_interpolant_gap_identity(self, rng):
        sg, tg = SpaceGrid(1.0, 6), TimeGrid(1.0, 8)
        fr = rng.standard_normal((9, 6))
        right, left, _ = build_interpolants(fr, sg, tg)
        # both interpolants are constant per cell, so midpoint sampling is exact
        lhs = sum(tg.h * norm_h(right.at(t) - left.at(t), sg) ** 2 for t in tg.midpoints)
        rhs = tg.h * np.sum(norm_h(np.diff(fr, axis=0), sg) ** 2)
        assert lhs == pytest.approx(rhs, rel=1e-12)


class TestAverageSource:
    def test_constant(self):
        sg, tg = SpaceGrid(1.0, 4), TimeGrid(1.0, 4)
        cells = average_source(SpaceTimeFunction.constant(2.5, sg, tg))
        np.testing.assert_allclose(cells, 2.5)

    def test_linear_in_time(self):
        sg, tg = SpaceGrid(1.0, 3), TimeGrid(1.0, 2)
        fine = TimeGrid(1.0, 2)
        f = SpaceTimeFunction(np.repeat(fine.nodes[:, None], 3, axis=1), sg, fine, ROTHE)
        np.testing.assert_allclose(average_source(f, tg), [[0.25] * 3, [0.75] * 3])

    def test_bessel_inequality(self, rng):
        sg, fine, tg = SpaceGrid(1.0, 5), TimeGrid(1.0, 64), TimeGrid(1.0, 8)
        f = SpaceTimeFunction(rng.standard_normal((65, 5)), sg, fine, RIGHT)
        cells = average_source(f, tg)
        lhs = tg.h * np.sum(norm_h(cells, sg) ** 2)
        assert lhs <= norms(f, "L2H") ** 2 + 1e-10

    def test_mismatch(self):
        sg = SpaceGrid(1.0, 3)
        f = SpaceTimeFunction.zeros(sg, TimeGrid(1.0, 5))
        with pytest.raises(ShapeError):
            average_source(f, TimeGrid(1.0, 2))


class TestNorms:
    @pytest.mark.parametrize("kind", ["L2H", "L2V", "LinfH", "LpH"])
    def test_zero(self, kind):
        u = SpaceTimeFunction.zeros(SpaceGrid(1.0, 4), TimeGrid(1.0, 3))
        assert norms(u, kind, p=3.0) == 0.0

    def test_unit_mass(self):
        sg = SpaceGrid(1.0, 999)
        u = SpaceTimeFunction.constant(1.0, sg, TimeGrid(1.0, 4))
        assert abs(norms(u, "L2H") - 1.0) <= 2 * sg.dx

    def test_hat_h1(self):
        sg, tg = SpaceGrid(1.0, 9), TimeGrid(1.0, 2)
        hat = np.zeros(9)
        hat[4] = 1.0
        assert h1_seminorm_sq(hat, sg) == pytest.approx(2.0 / sg.dx, rel=1e-12)
        u = SpaceTimeFunction(np.tile(hat, (3, 1)), sg, tg)
        assert norms(u, "L2V") ** 2 == pytest.approx(sg.dx + 2.0 / sg.dx, rel=1e-12)

    def test_rothe_lp_matches_l2_at_p2(self, rng):
        sg, tg = SpaceGrid(1.0, 4), TimeGrid(1.0, 5)
        u = SpaceTimeFunction(rng.standard_normal((6, 4)), sg, tg, ROTHE)
        assert norms(u, "LpH", p=2.0) == pytest.approx(norms(u, "L2H"))
        # Gauss rule is exact for the quartic integrand at p = 4
        a, b = u.frames[:-1], u.frames[1:]
        s = np.linspace(0, 1, 4001)
        vals = np.array([np.sum(norm_h(a + x * (b - a), sg) ** 4) for x in s])
        ref = (tg.h * trapezoid(vals, s)) ** 0.25
        assert norms(u, "LpH", p=4.0) == pytest.approx(ref, rel=1e-6)

    def test_bad_kind(self):
        u = SpaceTimeFunction.zeros(SpaceGrid(1.0, 2), TimeGrid(1.0, 2))
        with pytest.raises(InvalidParameterError):
            norms(u, "L3")


class TestCsv:
    def test_roundtrip(self, rng):
        sg, tg = SpaceGrid(1.0, 4), TimeGrid(1.0, 3)
        u = SpaceTimeFunction(rng.standard_normal((4, 4)), sg, tg)
        text = to_csv(u)
        assert text.splitlines()[0] == "t,x,value"
        back = from_csv(text, sg, tg)
        np.testing.assert_array_equal(back.frames, u.frames)
