import json
import math
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd
from django.test import SimpleTestCase

from kolmogorov.coeff import FieldParams, make_builtin
from kolmogorov.exceptions import InvalidParameterError, ResolutionError, UnsupportedDimensionError
from kolmogorov.fpk import default_battery
from kolmogorov.measures import Box, CouplingMeasure, DiracMeasure, example1_density, gaussian
from kolmogorov.mollify import (
    GridSpec,
    MollifierKernel,
    bump_normalizer,
    doubled_regularized_psd,
    export_system,
    kernel_matrix,
    mollify_measure,
    regularize_coefficients,
    regularized_lyapunov,
    regularized_residual,
    weak_convergence_profile,
)


def ou(d=1):
    return make_builtin(FieldParams("ornstein_uhlenbeck", d, None, {"lambda": 1.0, "sigma0": math.sqrt(0.5)}))


class KernelTests(SimpleTestCase):
    def test_normalizer(self):
        self.assertAlmostEqual(bump_normalizer(1), 2.25228, places=4)
        self.assertGreater(bump_normalizer(2), bump_normalizer(1))

    def test_eps_range(self):
        for eps in (0.0, 1.0, -0.5):
            with self.assertRaises(InvalidParameterError):
                MollifierKernel(eps, 1)

    def test_kernel_vanishes_outside_the_ball(self):
        kernel = MollifierKernel(0.5, 2)
        values = kernel(np.array([[0.0, 0.0], [0.3, 0.3], [0.4, 0.4]]))
        self.assertAlmostEqual(values[0], bump_normalizer(2) * math.exp(-1.0) / 0.25)
        self.assertGreater(values[1], 0.0)
        self.assertEqual(values[2], 0.0)

    def test_columns_carry_unit_mass(self):
        grid = GridSpec(Box((-2.0,), (2.0,)), (64,))
        atoms = np.array([[-0.3], [0.0], [1.1]])
        K = kernel_matrix(MollifierKernel(0.4, 1), grid, atoms)
        np.testing.assert_allclose(np.asarray(K.sum(axis=0)).ravel() * grid.cell_volume, 1.0, rtol=1e-12)


class GridTests(SimpleTestCase):
    def test_covering_contains_the_dilated_support(self):
        grid = GridSpec.covering(DiracMeasure([9.0]), 0.5)
        self.assertLessEqual(grid.box.lo[0], -6.0)
        self.assertGreaterEqual(grid.box.hi[0], 9.5)
        np.testing.assert_allclose(grid.spacing, [0.0625])

    def test_only_gaussian_analytic_measures(self):
        with self.assertRaises(InvalidParameterError):
            GridSpec.covering(example1_density(), 0.5)

    def test_coarse_grid_is_rejected(self):
        grid = GridSpec(Box((-8.0,), (8.0,)), (16,))
        with self.assertRaises(ResolutionError):
            mollify_measure(gaussian([0.0], [[0.5]]), 0.5, grid)


class MollifiedSystemTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.measure = gaussian([0.0], [[0.5]])
        cls.system = regularize_coefficients(ou(), cls.measure, 0.5)

    def test_mu_eps_is_a_probability_density(self):
        mu = self.system.mu_eps
        self.assertAlmostEqual(float(mu.values.sum() * mu.cell_volume), 1.0, places=9)
        self.assertTrue(np.all(mu.values > 0))
        self.assertEqual(self.system.source_fingerprint, self.measure.fingerprint())

    def test_regularized_equation_is_solved(self):
        battery = default_battery(1, Box((-2.0,), (2.0,)), 6)
        report = regularized_residual(self.system, battery)
        # 中点則の誤差 O(h²) (h = eps/8)
        self.assertLess(report.max_normalized, 1e-2)

    def test_residual_shrinks_on_a_finer_grid(self):
        battery = default_battery(1, Box((-2.0,), (2.0,)), 6)
        fine_grid = GridSpec.covering(self.measure, 0.5, spacing=0.5 / 16.0)
        fine = regularize_coefficients(ou(), self.measure, 0.5, fine_grid)
        coarse_residual = regularized_residual(self.system, battery).max_abs
        self.assertLessEqual(regularized_residual(fine, battery).max_abs, coarse_residual / 1.5)

    def test_doubled_diffusion_stays_positive_semidefinite(self):
        self.assertGreaterEqual(doubled_regularized_psd(self.system, self.system, pairs=2000), -1e-9)

    def test_diffusion_dominates_sigma_squared(self):
        a = self.system.coefficients["a"][..., 0, 0]
        s = self.system.coefficients["sigma"][..., 0, 0]
        self.assertTrue(np.all(a >= s * s - 1e-12))

    def test_lyapunov_on_the_grid(self):
        (report,) = regularized_lyapunov(self.system)
        self.assertTrue(report.valid)
        self.assertLess(report.radii[-1], self.system.grid.box.hi[0])

    def test_export(self):
        with tempfile.TemporaryDirectory() as tmp:
            csv_path, manifest_path = export_system(self.system, tmp)
            frame = pd.read_csv(csv_path)
            self.assertEqual(
                list(frame.columns), ["i1", "x1", "mu_eps", "gamma", "smoothed", "a_1_1", "sigma_1_1", "b_1"]
            )
            manifest = json.loads(Path(manifest_path).read_text())
            self.assertEqual(manifest["eps"], 0.5)
            self.assertEqual(manifest["csv"], "mollified_system.csv")
            self.assertEqual(manifest["source_measure_sha256"], self.measure.fingerprint())
            self.assertEqual(len(manifest["csv_sha256"]), 64)


class TwoDimensionalTests(SimpleTestCase):
    def test_dirac_in_the_plane(self):
        measure = DiracMeasure([0.5, 0.5])
        field = make_builtin(FieldParams("diagonal_map", 2, None, {"slope": 1.0, "bend": 0.5}))
        grid = GridSpec.covering(measure, 0.5, spacing=0.125)
        system = regularize_coefficients(field, measure, 0.5, grid)
        self.assertEqual(system.mu_eps.dim, 2)
        self.assertGreaterEqual(doubled_regularized_psd(system, system, pairs=500, seed=1), -1e-9)

    def test_unsupported_inputs(self):
        with self.assertRaises(UnsupportedDimensionError):
            mollify_measure(DiracMeasure([0.0, 0.0, 0.0]), 0.5)
        coupling = CouplingMeasure.product(DiracMeasure([0.0]), DiracMeasure([1.0]))
        with self.assertRaises(InvalidParameterError):
            mollify_measure(coupling, 0.5, GridSpec(Box.symmetric(2, 8.0), (128, 128)))
        with self.assertRaises(InvalidParameterError):
            regularize_coefficients(ou(2), gaussian([0.0], [[0.5]]), 0.5)


class WeakConvergenceTests(SimpleTestCase):
    def test_error_shrinks_with_eps(self):
        measure = gaussian([0.0], [[0.5]])
        battery = default_battery(1, Box((-2.0,), (2.0,)), 4)
        profile = weak_convergence_profile(measure, [0.1, 0.4], battery, spacing=0.25)
        self.assertEqual([r["eps"] for r in profile["rows"]], [0.4, 0.1])
        self.assertLess(profile["rows"][-1]["max_abs_error"], profile["rows"][0]["max_abs_error"])
