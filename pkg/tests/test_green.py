import math

import numpy as np
import pytest
from scipy.integrate import trapezoid

from pqvi.acceptance import green_levels
from pqvi.errors import DomainError, InvalidParameterError
from pqvi.green import GreenKernel, green_convolve, green_series_eval, project_on_modes
from pqvi.grid import SpaceGrid, TimeGrid


class TestSeries:
    def test_long_time_decay(self):
        k = GreenKernel(1.0, 32)
        val = green_series_eval(k, 0.5, 0.5, 10.0)
        assert abs(val) <= math.exp(-math.pi**2 * 10) * 2 * 32 + 1e-300

    def test_symmetric(self):
        k = GreenKernel(2.0, 20, 0.5)
        assert green_series_eval(k, 0.3, 1.1, 0.2) == pytest.approx(green_series_eval(k, 1.1, 0.3, 0.2))

    def test_domain(self):
        with pytest.raises(DomainError):
            green_series_eval(GreenKernel(), 0.5, 0.5, 0.0)

    def test_invalid_kernel(self):
        with pytest.raises(InvalidParameterError):
            GreenKernel(modes=0)

    def test_truncation_bound_decreases(self):
        assert GreenKernel(1.0, 20).truncation_bound(0.01) < GreenKernel(1.0, 10).truncation_bound(0.01)

    def test_mass_conservation_short_time(self):
        # integral of G over y tends to 1 for interior x at small t
        k = GreenKernel(1.0, 400)
        y = np.linspace(0, 1, 4001)
        vals = green_series_eval(k, np.full_like(y, 0.5), y, 1e-3)
        assert trapezoid(vals, y) == pytest.approx(1.0, abs=1e-3)


class TestProjection:
    def test_single_mode(self):
        sg = SpaceGrid(1.0, 31)
        k = GreenKernel(1.0, 8)
        coeff = project_on_modes(k, np.sin(2 * np.pi * sg.nodes), sg)
        half = math.pi * sg.dx
        assert coeff[1] == pytest.approx(0.5 * (math.sin(half) / half) ** 2, rel=1e-12)
        assert np.max(np.abs(np.delete(coeff, 1))) < 1e-12

    def test_exact_for_hat(self):
        sg = SpaceGrid(1.0, 3)
        k = GreenKernel(1.0, 1)
        vals = np.array([0.0, 1.0, 0.0])
        # int of hat centred at 0.5 with half-width 0.25 against sin(pi y)
        y = np.linspace(0, 1, 200001)
        ref = trapezoid(np.maximum(0, 1 - np.abs(y - 0.5) / 0.25) * np.sin(np.pi * y), y)
        assert project_on_modes(k, vals, sg)[0] == pytest.approx(ref, rel=1e-8)


class TestConvolve:
    def test_steady_mode(self):
        # constant-in-time single-mode source: exact modal solution
        sg, tg = SpaceGrid(1.0, 63), TimeGrid(0.5, 10)
        k = GreenKernel(1.0, 64)
        src = np.tile(np.sin(np.pi * sg.nodes), (10, 1))
        w = green_convolve(k, src, np.zeros(63), sg, tg)
        lam = math.pi**2
        fac = (math.sin(math.pi * sg.dx / 2) / (math.pi * sg.dx / 2)) ** 2
        # discrete sine vector has continuous coefficient 1/2 up to the projection factor
        expected = (1 - math.exp(-lam * 0.5)) / lam * fac * np.sin(np.pi * sg.nodes)
        np.testing.assert_allclose(w.frames[-1], expected, atol=1e-12)

    def test_refinement_monotone(self):
        d = green_levels()
        assert d[0] > d[1] > d[2]
