import math
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase
from scipy import integrate as sp_integrate

from kolmogorov.exceptions import InvalidParameterError, UnsupportedDimensionError
from kolmogorov.measures import (
    Box,
    CouplingMeasure,
    DiracMeasure,
    EmpiricalMeasure,
    GridDensity,
    example1_density,
    gaussian,
    integrate,
    measure_from_config,
)
from kolmogorov.testfunctions import GaussianBump, PolyBump


class BoxTests(SimpleTestCase):
    def test_geometry(self):
        box = Box.cube([1.0, -1.0], 0.5)
        self.assertEqual(box.lower, (0.5, -1.5))
        self.assertAlmostEqual(box.volume, 1.0)
        self.assertIsNone(box.intersect(Box.cube([5.0, 5.0], 1.0)))
        left, right = Box.symmetric(4, 1.0).split(2)
        self.assertEqual(left.dim, 2)
        self.assertEqual(right.dim, 2)

    def test_empty_box_is_rejected(self):
        with self.assertRaises(InvalidParameterError):
            Box((1.0,), (0.0,))


class GridDensityTests(SimpleTestCase):
    def test_mass_must_be_one(self):
        with self.assertRaises(InvalidParameterError):
            GridDensity(Box((0.0,), (1.0,)), np.full(10, 2.0))

    def test_from_values_normalizes(self):
        density = GridDensity.from_values(Box((0.0,), (2.0,)), np.ones(8))
        self.assertAlmostEqual(float(density.values.sum() * density.cell_volume), 1.0)
        np.testing.assert_allclose(density.axes[0], 0.125 + 0.25 * np.arange(8))

    def test_midpoint_integral_of_a_bump(self):
        density = GridDensity.from_values(Box((0.0,), (1.0,)), np.ones(2000))
        f = PolyBump(np.array([0.5]), 0.5)
        # (1/2)∫(1-u²)³ du over [-1, 1] = 16/35
        self.assertAlmostEqual(integrate(density, f), 16.0 / 35.0, places=6)

    def test_csv_keeps_the_box(self):
        density = GridDensity.from_values(Box((-1.0, 0.0), (1.0, 3.0)), np.arange(1.0, 13.0).reshape(4, 3))
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "density.csv"
            density.to_csv(path)
            loaded = GridDensity.from_csv(path)
        np.testing.assert_allclose(loaded.box.lo, density.box.lo)
        np.testing.assert_allclose(loaded.box.hi, density.box.hi)
        np.testing.assert_allclose(loaded.values, density.values, rtol=1e-14)

    def test_marginal(self):
        density = GridDensity.from_values(Box((0.0, 0.0), (1.0, 1.0)), np.ones((4, 5)))
        self.assertEqual(density.marginal([1]).resolution, (5,))


class DiscreteMeasureTests(SimpleTestCase):
    def test_empirical_weights_must_sum_to_one(self):
        with self.assertRaises(InvalidParameterError):
            EmpiricalMeasure(np.zeros((2, 1)), np.array([0.5, 0.6]))

    def test_empirical_moments(self):
        emp = EmpiricalMeasure(np.array([[0.0], [2.0]]), np.array([0.25, 0.75]))
        np.testing.assert_allclose(emp.mean(), [1.5])
        np.testing.assert_allclose(emp.covariance(), [[0.75]])

    def test_dirac_integral_is_point_evaluation(self):
        f = GaussianBump(np.array([0.0, 0.0]), 1.0)
        self.assertAlmostEqual(integrate(DiracMeasure(np.array([1.0, 0.0])), f), math.exp(-0.5))


class AnalyticDensityTests(SimpleTestCase):
    def test_gaussian_1d(self):
        # ∫ exp(-x²/2s²) N(0, v)(dx) = √(s²/(s²+v))
        value = integrate(gaussian([0.0], [[1.0]]), GaussianBump(np.array([0.0]), 1.0))
        self.assertAlmostEqual(value, 1.0 / math.sqrt(2.0), places=7)

    def test_gaussian_2d_ball_rule(self):
        value = integrate(gaussian([0.0, 0.0], np.eye(2)), GaussianBump(np.zeros(2), 1.0))
        self.assertAlmostEqual(value, 0.5, places=7)

    def test_covariance_must_be_positive_definite(self):
        with self.assertRaises(InvalidParameterError):
            gaussian([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])

    def test_example1_normalizer(self):
        density = example1_density(3)
        self.assertAlmostEqual(density.normalizer, 1.0 / (4.0 * math.pi * math.sqrt(math.pi / 2.0)), places=12)
        self.assertAlmostEqual(density.normalizer, 0.0634936, places=6)

    def test_example1_integral_around_the_singularity(self):
        density = example1_density(3)
        value = integrate(density, PolyBump(np.zeros(3), 1.0))
        radial, _ = sp_integrate.quad(lambda r: (1.0 - r * r) ** 3 * math.exp(-0.5 * r * r), 0.0, 1.0)
        self.assertAlmostEqual(value, 4.0 * math.pi * density.normalizer * radial, places=7)

    def test_example1_is_three_dimensional(self):
        with self.assertRaises(UnsupportedDimensionError):
            example1_density(2)


class CouplingTests(SimpleTestCase):
    def test_product_of_diracs(self):
        coupling = CouplingMeasure.product(DiracMeasure(np.array([0.0])), DiracMeasure(np.array([1.0])))
        f = GaussianBump(np.array([0.0, 0.0]), 1.0)
        self.assertAlmostEqual(integrate(coupling, f), math.exp(-0.5))
        self.assertEqual(coupling.dim, 2)

    def test_diagonal_projects_to_its_measure(self):
        mu = gaussian([0.0], [[0.5]])
        self.assertIs(CouplingMeasure.diagonal(mu).project("second"), mu)

    def test_product_needs_matching_dimensions(self):
        with self.assertRaises(InvalidParameterError):
            CouplingMeasure.product(DiracMeasure(np.zeros(1)), DiracMeasure(np.zeros(2)))


class ConfigTests(SimpleTestCase):
    def test_kinds(self):
        self.assertEqual(measure_from_config({"kind": "gaussian", "mean": [0.0, 0.0], "variance": 2.0}).dim, 2)
        self.assertEqual(measure_from_config({"kind": "dirac", "atom": [1.0]}).dim, 1)
        self.assertEqual(measure_from_config({"kind": "example1_radial"}).dim, 3)
        pair = measure_from_config({"kind": "product", "first": {"kind": "dirac", "atom": [0.0]},
                                    "second": {"kind": "gaussian"}})
        self.assertEqual(pair.kind, "product")

    def test_unknown_kind_and_missing_file(self):
        with self.assertRaises(InvalidParameterError):
            measure_from_config({"kind": "cauchy"})
        with self.assertRaises(InvalidParameterError):
            measure_from_config({"kind": "grid", "path": "/nonexistent/density.csv"})
