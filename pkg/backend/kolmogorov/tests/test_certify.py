import numpy as np
from django.test import SimpleTestCase

from kolmogorov.certify import (
    HOLDS,
    INDEFINITE,
    VIOLATED,
    LambdaFunction,
    ScanRegion,
    check_corollary1,
    check_example3,
    check_example4,
    check_moments,
    check_theorem1,
    check_theorem2,
    combine_verdicts,
    reevaluate_witness,
    sample_pairs,
    scan,
    structured_probes,
)
from kolmogorov.coeff import FieldParams, make_builtin
from kolmogorov.exceptions import InvalidParameterError
from kolmogorov.measures import gaussian
from kolmogorov.tests.utils import numeric_settings

OU = FieldParams("ornstein_uhlenbeck", 1, None, {"lambda": 1.0, "sigma0": 0.5})
POWER_LAW = FieldParams("power_law", 3, None, {"alpha": 2.0})


@numeric_settings(scan_chunk_size=1024)
class CertifyTestCase(SimpleTestCase):
    def region(self, radius=3.0, budget=3000, multistart=2, seed=0):
        return ScanRegion(radius=radius, sample_budget=budget, multistart_count=multistart, rng_seed=seed)


class ScanRegionTests(CertifyTestCase):
    def test_defaults_come_from_settings(self):
        region = ScanRegion()
        self.assertEqual(region.radius, 10.0)
        self.assertEqual(region.sample_budget, 200_000)

    def test_invalid_regions(self):
        with self.assertRaises(InvalidParameterError):
            ScanRegion(radius=1.0, separation_floor=2.0)
        with self.assertRaises(InvalidParameterError):
            ScanRegion(radius=-1.0)

    def test_probes_respect_the_region(self):
        region = self.region(radius=2.0)
        X, Y = structured_probes(2, region)
        self.assertTrue(np.all(np.linalg.norm(X, axis=1) <= 2.0))
        self.assertTrue(np.all(np.linalg.norm(X - Y, axis=1) >= region.separation_floor))


class Theorem1Tests(CertifyTestCase):
    def test_ou_is_negative_everywhere(self):
        cert = check_theorem1(make_builtin(OU), self.region())
        self.assertEqual(cert.verdict, HOLDS)
        self.assertEqual(cert.criterion, "theorem1_negative")
        self.assertAlmostEqual(cert.extremum, -1.0, places=9)

    def test_tanh_is_positive_on_the_ball(self):
        cert = check_theorem1(make_builtin(FieldParams("tanh_1d", 1, None, {})), self.region())
        self.assertEqual(cert.verdict, HOLDS)
        self.assertEqual(cert.criterion, "theorem1_positive")
        self.assertGreater(cert.extremum, 0.0)

    def test_power_law_has_witnesses_of_both_signs(self):
        field = make_builtin(POWER_LAW)
        cert = check_theorem1(field, self.region())
        self.assertEqual(cert.verdict, VIOLATED)
        self.assertEqual(sorted(np.sign(w.value) for w in cert.witnesses), [-1.0, 1.0])
        for w in cert.witnesses:
            self.assertAlmostEqual(reevaluate_witness(field, w), w.value, places=9)
        self.assertIn("radius 3", cert.to_dict()["caveat"])

    def test_scan_does_not_depend_on_threads(self):
        field = make_builtin(POWER_LAW)
        region = self.region(budget=4000)
        one = scan(field, region, "q_hat", threads=1).to_dict()
        three = scan(field, region, "q_hat", threads=3).to_dict()
        self.assertEqual(one, three)

    def test_seed_changes_the_samples(self):
        a, _ = sample_pairs(2, self.region(seed=1), 0, 16)
        b, _ = sample_pairs(2, self.region(seed=2), 0, 16)
        self.assertFalse(np.allclose(a, b))

    def test_larger_budget_keeps_earlier_pairs(self):
        small, _ = sample_pairs(2, self.region(), 0, 8)
        large, _ = sample_pairs(2, self.region(), 0, 64)
        np.testing.assert_array_equal(small, large[:8])


class OtherCriteriaTests(CertifyTestCase):
    def test_theorem2_and_corollary1_for_ou(self):
        field = make_builtin(OU)
        Lambda = LambdaFunction.constant(0.0)
        cert = check_theorem2(field, Lambda, self.region())
        self.assertEqual(cert.verdict, HOLDS)
        self.assertEqual(set(cert.checks), {"bound", "strict"})
        self.assertEqual(check_corollary1(field, Lambda, self.region()).verdict, HOLDS)

    def test_example3_for_linear_diagonal_map(self):
        # ‖ΔΣ‖² = 4|Δx|², ⟨Δx, Δb⟩ = -|Δx|²
        field = make_builtin(FieldParams("diagonal_map", 2, None, {"slope": 2.0, "drift_rate": 1.0}))
        self.assertEqual(check_example3(field, 2.0, self.region()).verdict, HOLDS)
        self.assertEqual(check_example3(field, 0.5, self.region()).verdict, VIOLATED)
        with self.assertRaises(InvalidParameterError):
            check_example3(field, 0.0, self.region())

    def test_example4_margin_is_one(self):
        field = make_builtin(FieldParams("isotropic", 2, None, {"scale": 1.0, "exponent": 1.0, "drift_rate": 1.0}))
        cert = check_example4(field, self.region(radius=5.0))
        self.assertEqual(cert.verdict, HOLDS)
        self.assertAlmostEqual(cert.extremum, 1.0, places=9)

    def test_example4_needs_isotropic_sigma(self):
        field = make_builtin(FieldParams("diagonal_map", 2, None, {"slope": 1.0, "bend": 0.5}))
        with self.assertRaises(InvalidParameterError):
            check_example4(field, self.region())

    def test_lambda_config(self):
        quadratic = LambdaFunction.from_config({"kind": "quadratic", "c0": 1.0, "c1": 2.0})
        np.testing.assert_allclose(quadratic(np.array([[1.0, 1.0]])), [5.0])
        with self.assertRaises(InvalidParameterError):
            LambdaFunction.from_config({"kind": "cubic"})
        with self.assertRaises(InvalidParameterError):
            LambdaFunction.constant(-1.0)

    def test_combine_verdicts(self):
        self.assertEqual(combine_verdicts([HOLDS, INDEFINITE]), INDEFINITE)
        self.assertEqual(combine_verdicts([INDEFINITE, VIOLATED]), VIOLATED)
        self.assertEqual(combine_verdicts([HOLDS]), HOLDS)


class MomentTests(SimpleTestCase):
    def test_ou_moments_are_finite(self):
        field = make_builtin(OU)
        report = check_moments(field, gaussian([0.0], [[0.25]]), "theorem1", radius=6.0)
        self.assertTrue(report.all_finite)
        # ∫ ‖Σ‖² dμ = σ0²
        self.assertAlmostEqual(report.integrals["sigma_sq"]["2R"], 0.25, places=6)

    def test_lambda_is_required(self):
        with self.assertRaises(InvalidParameterError):
            check_moments(make_builtin(OU), gaussian([0.0], [[1.0]]), "theorem2")
