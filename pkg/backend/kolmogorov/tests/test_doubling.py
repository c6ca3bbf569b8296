import numpy as np
from django.test import SimpleTestCase

from kolmogorov.coeff import FieldParams, make_builtin
from kolmogorov.doubling import (
    apply_doubled,
    doubled_blocks,
    doubled_generator_value,
    doubled_matrices,
    generator_value,
    psd_margin,
    psd_margins,
    q_value,
    q_values,
    r_value,
    r_values,
)
from kolmogorov.exceptions import ContractViolationError, DiagonalUndefinedError
from kolmogorov.testfunctions import HalfSquaredDistance, SquaredNorm

FIELDS = (
    FieldParams("power_law", 3, None, {"alpha": 2.0}),
    FieldParams("diagonal_map", 2, None, {"slope": 1.5, "bend": 0.5, "drift_rate": 1.0}),
    FieldParams("isotropic", 2, None, {"scale": 1.0, "exponent": 0.5, "drift_rate": 1.0}),
    FieldParams("constant", 2, 3, {"sigma": [[1.0, 0.0, 0.5], [0.0, 1.0, 0.2]], "drift": [0.3, -0.1]}),
)


class QuantityTests(SimpleTestCase):
    def test_power_law_hand_values(self):
        field = make_builtin(FIELDS[0])
        self.assertAlmostEqual(q_value(field, [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]), -4.0, places=12)
        self.assertAlmostEqual(q_value(field, [0.1, 0.0, 0.0], [0.2, 0.0, 0.0]), 0.0293, places=12)

    def test_q_splits_into_drift_and_trace_parts(self):
        # q(tx, ty) = t^(α+2)·drift 部分 + t^α·trace 部分
        field = make_builtin(FIELDS[0])
        x, y, t = np.array([0.3, -0.2, 0.5]), np.array([-0.4, 0.1, 0.2]), 1.7
        drift = np.dot(x - y, field.drift(x) - field.drift(y))
        trace = q_value(field, x, y) - drift
        tdrift = np.dot(t * (x - y), field.drift(t * x) - field.drift(t * y))
        self.assertAlmostEqual(tdrift, t**4 * drift, places=10)
        self.assertAlmostEqual(q_value(field, t * x, t * y) - tdrift, t**2 * trace, places=10)

    def test_r_vanishes_for_constant_sigma(self):
        field = make_builtin(FieldParams("ornstein_uhlenbeck", 2, None, {"lambda": 1.0, "sigma0": 0.7}))
        rng = np.random.default_rng(3)
        np.testing.assert_allclose(r_values(field, rng.normal(size=(5, 2)), rng.normal(size=(5, 2))), 0.0)

    def test_r_is_undefined_on_the_diagonal(self):
        field = make_builtin(FIELDS[1])
        with self.assertRaises(DiagonalUndefinedError):
            r_value(field, [1.0, 2.0], [1.0, 2.0])
        self.assertTrue(np.isnan(r_values(field, [[1.0, 2.0]], [[1.0, 2.0]])[0]))
        self.assertIsNone(doubled_blocks(field, [1.0, 2.0], [1.0, 2.0]).r)


class DoubledOperatorTests(SimpleTestCase):
    def test_half_squared_distance_gives_q(self):
        for k, params in enumerate(FIELDS):
            field = make_builtin(params)
            rng = np.random.default_rng(k)
            X = rng.uniform(-2.0, 2.0, (200, field.d))
            Y = rng.uniform(-2.0, 2.0, (200, field.d))
            lhs = doubled_generator_value(field, HalfSquaredDistance(field.d), np.concatenate([X, Y], axis=1))
            q = q_values(field, X, Y)
            np.testing.assert_allclose(lhs, q, rtol=0, atol=1e-10 * (1.0 + np.abs(q).max()))

    def test_single_pair_entry_point(self):
        field = make_builtin(FIELDS[0])
        value = apply_doubled(field, HalfSquaredDistance(3), [1.0, 0.0, 0.0], [2.0, 0.0, 0.0])
        self.assertAlmostEqual(value, -4.0, places=12)

    def test_doubled_matrix_is_psd(self):
        for k, params in enumerate(FIELDS):
            field = make_builtin(params)
            rng = np.random.default_rng(10 + k)
            A, B = doubled_matrices(field, rng.normal(size=(300, field.d)), rng.normal(size=(300, field.d)))
            self.assertEqual(A.shape, (300, 2 * field.d, 2 * field.d))
            self.assertEqual(B.shape, (300, 2 * field.d))
            self.assertGreaterEqual(float(psd_margins(A).min()), -1e-12)

    def test_diagonal_block_has_no_margin(self):
        # x = y で 𝔸 = [[A, A], [A, A]] は特異
        field = make_builtin(FieldParams("ornstein_uhlenbeck", 1, None, {"lambda": 1.0, "sigma0": 1.0}))
        self.assertAlmostEqual(psd_margin(doubled_blocks(field, [0.5], [0.5]).A_block), 0.0, places=12)

    def test_asymmetric_matrix_is_rejected(self):
        with self.assertRaises(ContractViolationError):
            psd_margin(np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_generator_of_squared_norm(self):
        field = make_builtin(FieldParams("ornstein_uhlenbeck", 1, None, {"lambda": 1.0, "sigma0": 0.5}))
        x = np.array([[0.0], [1.0], [-2.0]])
        # L|x|² = 2σ0² - 2λx²
        np.testing.assert_allclose(generator_value(field, SquaredNorm(np.zeros(1)), x), 0.5 - 2.0 * x[:, 0] ** 2)
