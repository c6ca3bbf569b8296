import math
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd
from django.test import SimpleTestCase
from scipy import sparse

from kolmogorov.coeff import CoefficientField, FieldParams, make_builtin
from kolmogorov.exceptions import AnisotropyError, InvalidParameterError, UnsupportedDegeneracyError
from kolmogorov.fpk import (
    assemble_generator_2d,
    battery_from_config,
    cutoff_telescoping,
    default_battery,
    generator_checks,
    lyapunov_check,
    solve_1d,
    solve_2d,
    stationary_vector,
    weak_residual,
)
from kolmogorov.measures import Box, DiracMeasure, GridDensity, gaussian
from kolmogorov.testfunctions import PolyBump


def ou(d):
    # 定常分布は N(0, I/2)
    return make_builtin(FieldParams("ornstein_uhlenbeck", d, None, {"lambda": 1.0, "sigma0": math.sqrt(0.5)}))


def l1_error(density: GridDensity, reference):
    return float(np.sum(np.abs(density.values.ravel() - reference.density(density.centers()))) * density.cell_volume)


def write_table(directory, sigma):
    x = np.linspace(-8.0, 8.0, 33)
    path = Path(directory) / "table.csv"
    pd.DataFrame({"x1": x, "sigma_1_1": sigma(x), "b_1": np.zeros_like(x)}).to_csv(path, index=False)
    return make_builtin(FieldParams("tabulated", 1, None, {"path": str(path)}))


class Solve1DTests(SimpleTestCase):
    def test_ou_matches_the_gaussian(self):
        density = solve_1d(ou(1))
        self.assertIsInstance(density, GridDensity)
        self.assertEqual(density.resolution, (1024,))
        self.assertLess(l1_error(density, gaussian([0.0], [[0.5]])), 1e-4)

    def test_tanh_gives_a_dirac_at_the_origin(self):
        solution = solve_1d(make_builtin(FieldParams("tanh_1d", 1, None, {})))
        self.assertIsInstance(solution, DiracMeasure)
        self.assertLess(abs(solution.atom[0]), 1e-4)

    def test_vanishing_diffusion_everywhere(self):
        field = make_builtin(FieldParams("constant", 1, None, {"sigma": [[0.0]], "drift": [1.0]}))
        with self.assertRaises(UnsupportedDegeneracyError):
            solve_1d(field)

    def test_vanishing_diffusion_on_an_interval(self):
        with tempfile.TemporaryDirectory() as tmp:
            field = write_table(tmp, lambda x: np.maximum(np.abs(x) - 1.0, 0.0))
            with self.assertRaises(UnsupportedDegeneracyError):
                solve_1d(field)

    def test_several_isolated_zeros_without_drift(self):
        with tempfile.TemporaryDirectory() as tmp:
            field = write_table(tmp, lambda x: x * x - 1.0)
            with self.assertRaises(UnsupportedDegeneracyError):
                solve_1d(field)

    def test_invalid_grid(self):
        with self.assertRaises(InvalidParameterError):
            solve_1d(ou(1), n=8)
        with self.assertRaises(InvalidParameterError):
            solve_1d(ou(1), domain=(1.0, -1.0))
        with self.assertRaises(InvalidParameterError):
            solve_1d(ou(2))


class Solve2DTests(SimpleTestCase):
    def test_ou_matches_the_gaussian(self):
        box = Box((-4.0, -4.0), (4.0, 4.0))
        density = solve_2d(ou(2), box, 48, 48)
        self.assertEqual(density.resolution, (48, 48))
        self.assertLess(l1_error(density, gaussian([0.0, 0.0], np.eye(2) * 0.5)), 0.1)

    def test_generator_is_a_rate_matrix(self):
        Q, info = assemble_generator_2d(ou(2), Box((-2.0, -2.0), (2.0, 2.0)), 12, 10)
        checks = generator_checks(Q)
        self.assertGreaterEqual(checks["min_offdiagonal"], 0.0)
        self.assertLess(checks["max_row_sum"], 1e-12)
        self.assertEqual(info["clamped_cells"], 0)

    def test_residual_shrinks_under_refinement(self):
        box = Box((-6.0, -6.0), (6.0, 6.0))
        battery = default_battery(2, Box((-2.0, -2.0), (2.0, 2.0)), 8, seed=0)
        coarse, fine = (weak_residual(ou(2), solve_2d(ou(2), box, n, n), battery).max_abs for n in (32, 64))
        self.assertLessEqual(fine, 0.6 * coarse)

    def test_clamped_cells_are_reported(self):
        def sigma(pts):
            # 角の 1 セルだけ a12 = 1.5 > min(a11, a22) = 1
            corner = (pts[:, 0] > 5.5) & (pts[:, 1] > 5.5)
            out = np.zeros((len(pts), 2, 2))
            out[:, 0, 0] = 1.0
            out[:, 1, 0] = np.where(corner, 1.5, 0.0)
            out[:, 1, 1] = 1.0
            return out

        field = CoefficientField(2, 2, sigma, lambda pts: -pts, "corner-correlated")
        with self.assertLogs("kolmogorov.fpk", level="WARNING") as logs:
            density = solve_2d(field, Box((-6.0, -6.0), (6.0, 6.0)), 24, 24)
        self.assertIn("clamped", logs.output[0])
        self.assertEqual(density.diagnostics["clamped_cells"], 1)
        self.assertAlmostEqual(float(density.values.sum() * density.cell_volume), 1.0, places=9)

    def test_strong_correlation_on_a_stretched_grid(self):
        field = make_builtin(
            FieldParams("constant", 2, None, {"sigma": [[1.0, 0.0], [0.5, math.sqrt(0.75)]], "drift": [0.0, 0.0]})
        )
        with self.assertRaises(AnisotropyError):
            assemble_generator_2d(field, Box((-1.0, -1.0), (1.0, 1.0)), 4, 40)

    def test_stationary_vector_of_two_states(self):
        Q = sparse.csr_matrix(np.array([[-1.0, 1.0], [2.0, -2.0]]))
        p, iterations, residual = stationary_vector(Q)
        np.testing.assert_allclose(p, [2.0 / 3.0, 1.0 / 3.0], atol=1e-10)
        self.assertLessEqual(residual, 1e-12)
        self.assertGreater(iterations, 0)


class ResidualTests(SimpleTestCase):
    def test_gaussian_solves_the_ou_equation(self):
        battery = default_battery(1, Box((-3.0,), (3.0,)), 8)
        report = weak_residual(ou(1), gaussian([0.0], [[0.5]]), battery)
        self.assertEqual(len(report.entries), 8)
        self.assertLess(report.max_normalized, 1e-6)

    def test_wrong_variance_is_detected(self):
        battery = default_battery(1, Box((-3.0,), (3.0,)), 8)
        report = weak_residual(ou(1), gaussian([0.0], [[1.0]]), battery)
        self.assertGreater(report.max_normalized, 1e-3)

    def test_dirac_at_zero_solves_tanh(self):
        field = make_builtin(FieldParams("tanh_1d", 1, None, {}))
        battery = [PolyBump([0.0], 1.0), PolyBump([0.5], 1.0), PolyBump([3.0], 1.0)]
        report = weak_residual(field, DiracMeasure([0.0]), battery)
        self.assertEqual(report.max_abs, 0.0)
        self.assertEqual(report.entries[2].flags, ["outside_support"])

    def test_battery_dimension_must_match(self):
        with self.assertRaises(InvalidParameterError):
            weak_residual(ou(2), gaussian([0.0], [[0.5]]), [PolyBump([0.0], 1.0)])
        with self.assertRaises(InvalidParameterError):
            weak_residual(ou(1), gaussian([0.0], [[0.5]]), [])

    def test_battery_config(self):
        shell = battery_from_config({"kind": "shell", "count": 4, "r_min": 1.0, "r_max": 2.0}, 2)
        norms = [np.linalg.norm(f.center) for f in shell]
        self.assertTrue(all(1.0 <= n <= 2.0 for n in norms))
        listed = battery_from_config({"kind": "list", "functions": [{"kind": "poly_bump", "center": [0.0], "radius": 1.0}]}, 1)
        self.assertEqual(len(listed), 1)
        with self.assertRaises(InvalidParameterError):
            battery_from_config({"kind": "default"}, 1)
        with self.assertRaises(InvalidParameterError):
            battery_from_config({"kind": "sobol"}, 1)

    def test_default_battery_is_deterministic(self):
        box = Box((-2.0, -2.0), (2.0, 2.0))
        a = default_battery(2, box, 6, seed=3)
        b = default_battery(2, box, 6, seed=3)
        self.assertEqual([f.describe() for f in a], [f.describe() for f in b])
        self.assertEqual(a[3].weight_axis, 0)

    def test_cutoff_gap_closes(self):
        rows = cutoff_telescoping(ou(1), gaussian([0.0], [[0.5]]), PolyBump([0.5], 1.0))
        self.assertEqual([r["j"] for r in rows], [1.0, 2.0, 4.0, 8.0, 16.0, 32.0])
        self.assertGreater(rows[0]["gap"], rows[-1]["gap"])
        self.assertLess(rows[-1]["gap"], 1e-12)


class LyapunovTests(SimpleTestCase):
    def test_power_law_threshold_and_formula(self):
        field = make_builtin(FieldParams("power_law", 3, None, {"alpha": 2.0}))
        (report,) = lyapunov_check(field, powers=(2.0,), target=1.0)
        # LV = 6r² - 2r⁴
        self.assertAlmostEqual(report.threshold_radius, 1.8)
        np.testing.assert_allclose(report.lv_max, 6 * report.radii**2 - 2 * report.radii**4, atol=1e-9, rtol=1e-12)
        self.assertTrue(report.extras["bound_holds"])
        self.assertEqual(report.extras["stated_formula"], "8|x|^2 - 2|x|^4")

    def test_ou_threshold(self):
        (report,) = lyapunov_check(ou(1), target=0.5)
        # LV = 1 - 2r²
        self.assertAlmostEqual(report.threshold_radius, 0.875)
        self.assertEqual(report.extras, {})

    def test_no_threshold_without_confinement(self):
        field = make_builtin(FieldParams("constant", 1, None, {"sigma": [[1.0]], "drift": [0.0]}))
        (report,) = lyapunov_check(field)
        self.assertFalse(report.valid)
        self.assertIsNone(report.constant)

    def test_invalid_arguments(self):
        with self.assertRaises(InvalidParameterError):
            lyapunov_check(ou(1), powers=(1.0,))
        with self.assertRaises(InvalidParameterError):
            lyapunov_check(ou(1), target=0.0)
