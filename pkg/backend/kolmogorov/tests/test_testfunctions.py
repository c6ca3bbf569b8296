import numpy as np
from django.test import SimpleTestCase

from kolmogorov.exceptions import InvalidParameterError
from kolmogorov.testfunctions import (
    Cutoff,
    GaussianBump,
    HalfSquaredDistance,
    Monomial,
    PolyBump,
    ProductFunction,
    SquaredNorm,
    function_from_config,
    smoothstep_profile,
    tapered,
)


def fd_gradient(f, pts, h=1e-6):
    out = np.zeros_like(pts)
    for k in range(pts.shape[1]):
        e = np.zeros(pts.shape[1])
        e[k] = h
        out[:, k] = (f.value(pts + e) - f.value(pts - e)) / (2.0 * h)
    return out


def fd_hessian(f, pts, h=1e-5):
    n, d = pts.shape
    out = np.zeros((n, d, d))
    for k in range(d):
        e = np.zeros(d)
        e[k] = h
        out[:, :, k] = (f.gradient(pts + e) - f.gradient(pts - e)) / (2.0 * h)
    return out


class DerivativeTests(SimpleTestCase):
    """解析的な勾配・ヘッセ行列を中心差分と突き合わせる"""

    def assert_derivatives(self, f, pts):
        np.testing.assert_allclose(f.gradient(pts), fd_gradient(f, pts), rtol=1e-5, atol=1e-6)
        np.testing.assert_allclose(f.hessian(pts), fd_hessian(f, pts), rtol=1e-5, atol=1e-5)

    def test_poly_bump(self):
        pts = np.array([[0.1, -0.2], [0.5, 0.3], [-0.4, 0.1]])
        self.assert_derivatives(PolyBump(np.array([0.0, 0.1]), 1.0), pts)
        self.assert_derivatives(PolyBump(np.array([0.0, 0.1]), 1.0, weight_axis=1), pts)

    def test_gaussian_bump(self):
        self.assert_derivatives(GaussianBump(np.array([0.2]), 0.7), np.array([[-0.3], [0.4], [1.1]]))

    def test_cutoffs(self):
        # 引数が遷移区間 (1, 2) の内側に来る点
        self.assert_derivatives(Cutoff(1.0, "quadratic_arg", 2), np.array([[1.1, 0.3], [0.9, 0.8], [1.3, -0.2]]))
        self.assert_derivatives(Cutoff(1.0, "log_arg", 2), np.array([[1.5, 0.8], [1.2, 1.5], [-2.0, 0.5]]))

    def test_monomial_and_product(self):
        pts = np.array([[0.5, -0.6], [0.9, 0.7], [-0.3, 1.0]])
        self.assert_derivatives(Monomial((2, 1)), pts)
        self.assert_derivatives(tapered(Monomial((1, 1)), 1.0), pts)

    def test_half_squared_distance(self):
        self.assert_derivatives(HalfSquaredDistance(2), np.array([[0.3, -0.1, 1.0, 0.4]]))


class SupportTests(SimpleTestCase):
    def test_poly_bump_vanishes_outside_its_ball(self):
        f = PolyBump(np.zeros(2), 1.0)
        np.testing.assert_array_equal(f.value([[1.0, 0.5], [0.0, 1.2]]), [0.0, 0.0])
        self.assertEqual(f.support_box().to_dict(), {"lower": [-1.0, -1.0], "upper": [1.0, 1.0]})

    def test_cutoff_levels(self):
        psi = Cutoff(4.0, "quadratic_arg", 1)
        np.testing.assert_allclose(psi.value([[0.0], [1.9], [2.9], [3.0]]), [1.0, 1.0, 0.0, 0.0], atol=1e-12)
        self.assertGreater(psi.value([[2.4]])[0], 0.0)
        np.testing.assert_array_equal(psi.annulus([[1.0], [2.5], [3.5]]), [False, True, False])

    def test_log_arg_cutoff_support_stays_finite(self):
        box = Cutoff(300.0, "log_arg", 2).support_box()
        self.assertTrue(np.all(np.isfinite(box.upper)))
        with self.assertRaises(InvalidParameterError):
            Cutoff(355.0, "log_arg", 2)
        self.assertEqual(Cutoff(355.0, "quadratic_arg", 1).outer_level, 710.0)

    def test_smoothstep_is_c2_at_the_joints(self):
        f, f1, f2 = smoothstep_profile(np.array([1.0, 2.0]))
        np.testing.assert_allclose(f, [1.0, 0.0])
        np.testing.assert_allclose(f1, [0.0, 0.0])
        np.testing.assert_allclose(f2, [0.0, 0.0])

    def test_product_support_is_the_intersection(self):
        f = ProductFunction(PolyBump(np.array([0.0]), 2.0), PolyBump(np.array([1.5]), 1.0))
        box = f.support_box()
        self.assertEqual((box.lower, box.upper), ((0.5,), (2.0,)))

    def test_monomial_needs_a_taper_to_integrate(self):
        with self.assertRaises(InvalidParameterError):
            Monomial((1,)).as_integrand()
        self.assertIsNotNone(tapered(Monomial((1,)), 2.0).as_integrand())

    def test_squared_norm_value(self):
        np.testing.assert_allclose(SquaredNorm(np.array([1.0, 0.0])).value([[0.0, 1.0]]), [2.0])


class ConfigTests(SimpleTestCase):
    def test_kinds(self):
        self.assertIsInstance(function_from_config({"kind": "poly_bump", "radius": 0.5}, 2), PolyBump)
        self.assertIsInstance(function_from_config({"kind": "gaussian_bump", "center": [1.0]}, 1), GaussianBump)
        self.assertIsInstance(function_from_config({"kind": "cutoff", "j": 2.0}, 1), Cutoff)
        self.assertIsInstance(function_from_config({"kind": "monomial", "exponents": [1, 1], "taper": 3.0}, 2),
                              ProductFunction)

    def test_invalid_inputs(self):
        with self.assertRaises(InvalidParameterError):
            function_from_config({"kind": "sine"}, 1)
        with self.assertRaises(InvalidParameterError):
            PolyBump(np.zeros(1), 1.0, exponent=2)
        with self.assertRaises(InvalidParameterError):
            Cutoff(1.0, "cubic_arg", 1)
