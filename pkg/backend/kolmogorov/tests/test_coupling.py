import math
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from kolmogorov.coeff import CoefficientField, FieldParams, make_builtin
from kolmogorov.coupling import (
    contraction_rate,
    empirical_invariant,
    gaussian_sampler,
    read_state_dump,
    sampler_from_config,
    simulate_coupled,
    w2_profile,
    w2_upper_bound,
)
from kolmogorov.exceptions import DegenerateFitError, InvalidParameterError, PathBlowupError
from kolmogorov.tests.utils import numeric_settings


def ou(sigma0=math.sqrt(0.5)):
    return make_builtin(FieldParams("ornstein_uhlenbeck", 1, None, {"lambda": 1.0, "sigma0": sigma0}))


def explosive():
    """b(x) = x³, Σ = 0"""
    return CoefficientField(
        1, 1, lambda pts: np.zeros((len(pts), 1, 1)), lambda pts: pts**3, "explosive"
    )


class SimulationTests(SimpleTestCase):
    def test_threads_and_blocks_do_not_change_the_paths(self):
        field = make_builtin(FieldParams("power_law", 2, None, {"alpha": 1.0}))
        init = (gaussian_sampler([1.0, 0.0], np.eye(2)), gaussian_sampler([0.0, 1.0], np.eye(2)))
        one = simulate_coupled(field, init, 0.01, 0.5, 10, seed=7, snapshots=5, threads=1, block_size=3)
        three = simulate_coupled(field, init, 0.01, 0.5, 10, seed=7, snapshots=5, threads=3, block_size=4)
        whole = simulate_coupled(field, init, 0.01, 0.5, 10, seed=7, snapshots=5, threads=1, block_size=64)
        np.testing.assert_array_equal(one.states, three.states)
        np.testing.assert_array_equal(one.states, whole.states)
        self.assertEqual(one.noise_draws, three.noise_draws)
        self.assertEqual(one.states.shape, (10, 6, 2, 2))

    def test_more_pairs_keep_the_first_ones(self):
        init = (gaussian_sampler([0.0], [[1.0]]), gaussian_sampler([1.0], [[0.5]]))
        field = make_builtin(FieldParams("tanh_1d", 1, None, {}))
        small = simulate_coupled(field, init, 0.01, 0.3, 4, seed=3, snapshots=3, block_size=2)
        large = simulate_coupled(field, init, 0.01, 0.3, 8, seed=3, snapshots=3, block_size=5)
        np.testing.assert_array_equal(small.states, large.states[:4])

    @numeric_settings(coupling_noise_chunk=7)
    def test_noise_chunk_does_not_change_the_paths(self):
        init = (gaussian_sampler([0.0], [[1.0]]), [0.5])
        chunked = simulate_coupled(ou(), init, 0.01, 0.5, 5, seed=2, snapshots=5)
        with numeric_settings(coupling_noise_chunk=256):
            whole = simulate_coupled(ou(), init, 0.01, 0.5, 5, seed=2, snapshots=5)
        np.testing.assert_array_equal(chunked.states, whole.states)

    def test_noise_draw_count(self):
        field = make_builtin(
            FieldParams("constant", 2, 3, {"sigma": [[1.0, 0.0, 0.5], [0.0, 1.0, 0.2]], "drift": [0.0, 0.0]})
        )
        ens = simulate_coupled(field, ([0.0, 0.0], [1.0, 1.0]), 0.1, 1.0, 5, snapshots=2, block_size=2)
        # d1 * steps * K
        self.assertEqual(ens.noise_draws, 3 * 10 * 5)
        self.assertEqual(ens.summary()["noise_draws"], 150)

    def test_each_copy_follows_the_ou_law(self):
        # Euler: 平均 (1-h)^n x0, 分散 (1 - (1-h)^{2n}) / (2 - h)  (σ0² = 1/2)
        h, n = 0.01, 100
        ens = simulate_coupled(ou(), ([1.0], [0.0]), h, n * h, 4000, seed=5, snapshots=1)
        decay = (1.0 - h) ** n
        variance = (1.0 - decay**2) / (2.0 - h)
        X, Y = ens.states[:, -1, 0, 0], ens.states[:, -1, 1, 0]
        self.assertAlmostEqual(float(np.mean(X)), decay, delta=0.05)
        self.assertAlmostEqual(float(np.mean(Y)), 0.0, delta=0.05)
        self.assertAlmostEqual(float(np.var(X)), variance, delta=0.05)
        self.assertAlmostEqual(float(np.var(Y)), variance, delta=0.05)
        # 同じ増分で駆動されるので差は決定的
        np.testing.assert_allclose(X - Y, decay, rtol=1e-9)

    def test_seed_changes_the_paths(self):
        init = (gaussian_sampler([0.0], [[1.0]]), [0.0])
        a = simulate_coupled(ou(), init, 0.01, 0.1, 4, seed=1, snapshots=2)
        b = simulate_coupled(ou(), init, 0.01, 0.1, 4, seed=2, snapshots=2)
        self.assertFalse(np.array_equal(a.states, b.states))

    def test_equal_starts_stay_together(self):
        field = make_builtin(FieldParams("power_law", 1, None, {"alpha": 2.0}))
        ens = simulate_coupled(field, ([0.5], [0.5]), 0.01, 1.0, 8, snapshots=4)
        self.assertEqual(float(np.max(ens.sq_diff())), 0.0)
        with self.assertRaises(DegenerateFitError):
            contraction_rate(ens)

    def test_ou_contracts_at_the_euler_rate(self):
        # 定数 Σ では差は決定的: |X_n - Y_n|² = (1-h)^{2n}
        h = 0.01
        ens = simulate_coupled(ou(), ([1.0], [0.0]), h, 2.0, 4, snapshots=20)
        report = contraction_rate(ens)
        self.assertAlmostEqual(report.rate, -math.log1p(-h) / h, places=6)
        self.assertTrue(report.contracting)
        self.assertLess(report.residual, 1e-9)
        self.assertEqual(report.points, 21)

    def test_explosive_paths_are_excluded(self):
        ens = simulate_coupled(explosive(), ([2.0], [1.0]), 0.1, 2.0, 3, snapshots=4)
        self.assertEqual(ens.blown_up, 3)
        self.assertTrue(np.isnan(ens.states[:, -1]).all())
        stats = ens.statistics()
        self.assertEqual(int(stats["alive_paths"].iloc[-1]), 0)

    def test_state_dump_layout(self):
        ens = simulate_coupled(ou(), (gaussian_sampler([0.0], [[1.0]]), [1.0]), 0.05, 0.5, 3, snapshots=5)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "states.bin"
            ens.dump_states(path)
            self.assertEqual(path.stat().st_size, 3 * 6 * 2 * 1 * 8)
            np.testing.assert_array_equal(read_state_dump(path, 3, 6, 1), ens.states)

    def test_invalid_arguments(self):
        with self.assertRaises(InvalidParameterError):
            simulate_coupled(ou(), ([0.0], [1.0]), 0.0, 1.0, 2)
        with self.assertRaises(InvalidParameterError):
            simulate_coupled(ou(), ([0.0], [1.0]), 0.1, 0.01, 2)
        with self.assertRaises(InvalidParameterError):
            simulate_coupled(ou(), ([0.0], [1.0]), 0.1, 1.0, 0)


class EstimateTests(SimpleTestCase):
    def setUp(self):
        self.ensemble = simulate_coupled(ou(), ([1.0], [0.0]), 0.01, 1.0, 2, snapshots=10)

    def test_fit_window_must_lie_inside_the_horizon(self):
        with self.assertRaises(InvalidParameterError):
            contraction_rate(self.ensemble, (0.5, 2.0))
        with self.assertRaises(InvalidParameterError):
            contraction_rate(self.ensemble, (0.6, 0.4))

    def test_w2_bound_on_and_off_the_grid(self):
        on = w2_upper_bound(self.ensemble, 0.5)
        self.assertFalse(on.off_grid)
        self.assertAlmostEqual(on.value, 0.99**50, places=9)
        off = w2_upper_bound(self.ensemble, 0.53)
        self.assertTrue(off.off_grid)
        self.assertAlmostEqual(off.t_used, 0.5)

    def test_w2_profile_is_nonincreasing_for_ou(self):
        profile = w2_profile(self.ensemble)
        self.assertTrue(profile["nonincreasing"])
        self.assertEqual(profile["increases_at"], [])
        self.assertEqual(len(profile["bound"]), 11)


class InvariantTests(SimpleTestCase):
    def test_ou_variance(self):
        h = 0.05
        measure = empirical_invariant(ou(), h, burn_in=5.0, T=400.0, seed=3, stride=10, chains=8)
        # Euler 法の定常分散は 1/(2-h)
        self.assertAlmostEqual(float(measure.covariance()[0, 0]), 1.0 / (2.0 - h), delta=0.06)
        self.assertAlmostEqual(float(measure.mean()[0]), 0.0, delta=0.05)

    def test_blowup_is_an_error(self):
        with self.assertRaises(PathBlowupError):
            empirical_invariant(explosive(), 0.1, burn_in=0.0, T=5.0, x0=[2.0])

    def test_invalid_horizon(self):
        with self.assertRaises(InvalidParameterError):
            empirical_invariant(ou(), 0.1, burn_in=5.0, T=5.0)


class SamplerTests(SimpleTestCase):
    def test_config_forms(self):
        rng = np.random.default_rng(0)
        np.testing.assert_array_equal(sampler_from_config([1.0, 2.0], 2)(rng, 3), [[1.0, 2.0]] * 3)
        np.testing.assert_array_equal(sampler_from_config({"kind": "point", "at": [0.5]}, 1)(rng, 2), [[0.5], [0.5]])
        draws = sampler_from_config({"kind": "gaussian", "variance": 4.0}, 2)(rng, 5)
        self.assertEqual(draws.shape, (5, 2))
        with self.assertRaises(InvalidParameterError) as ctx:
            sampler_from_config({"kind": "uniform"}, 1)
        self.assertEqual(ctx.exception.parameter, "init.kind")
