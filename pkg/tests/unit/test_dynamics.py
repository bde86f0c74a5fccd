import math
import unittest

import numpy as np

from capmfg.dynamics import (B0, BumpTestFunction, ConstantPolicy, ConstantTestFunction, GradientField,
                             ParticleEnsemble, PiecewiseConstantPolicy, c_constants, default_test_functions,
                             fp_weak_residual, horizon_constants, increment_bound, k1_floor, moment_bound_check,
                             perturbation_check, running_payoff, simulate_controlled, simulate_mkv,
                             simulate_mkv_with_diagnostics, t_max_formula, x_moment_bound)
from capmfg.exceptions import MeasureInvariantException
from capmfg.measures import EmpiricalMeasure, MeasureFlow, moment_M2, moment_P2
from capmfg.params import baseline_params
from tests import _small_numerics, _uniform_cloud


class ZeroGradients(GradientField):
    def grid_gradients(self, time_index, x, h):
        return np.zeros(len(x)), np.zeros(len(x)), 0


class ParticleEnsembleTests(unittest.TestCase):

    def test_should_keep_initial_capital_verbatim(self):
        # given
        mu = EmpiricalMeasure.uniform([0.0, 1.0, 2.0], [0.1, 0.0, 3.7])

        # when
        ensemble = ParticleEnsemble.from_measure(mu)

        # then
        self.assertEqual(mu, ensemble.measure())
        np.testing.assert_array_equal([False, True, False], ensemble.mask)

    def test_should_refuse_weighted_atoms(self):
        # given
        mu = EmpiricalMeasure([0.0, 1.0], [1.0, 1.0], [0.25, 0.75])

        # when/then
        with self.assertRaises(MeasureInvariantException):
            ParticleEnsemble.from_measure(mu)


class PolicyTests(unittest.TestCase):

    def test_should_switch_at_breakpoints(self):
        # given
        policy = PiecewiseConstantPolicy([0.0, 0.5], [0.25, -0.5], [0.1, 0.9])
        x = np.zeros(3)

        # when
        early = policy.controls(0, 0.2, x, x)
        late = policy.controls(0, 0.5, x, x)

        # then
        np.testing.assert_array_equal([0.25] * 3, early[0])
        np.testing.assert_array_equal([-0.5] * 3, late[0])
        np.testing.assert_array_equal([0.9] * 3, late[1])

    def test_should_require_matching_lengths(self):
        # when/then
        with self.assertRaises(ValueError):
            PiecewiseConstantPolicy([0.0, 0.5], [0.25], [0.1, 0.9])


class SimulateControlledTests(unittest.TestCase):

    def setUp(self):
        self.params = baseline_params(horizon=0.5)
        self.numerics = _small_numerics(n_time=10)
        self.mu = EmpiricalMeasure.uniform(*_uniform_cloud(40, seed=2))
        self.flow = MeasureFlow.constant(self.mu, MeasureFlow.uniform_grid(0.5, 10))

    def test_should_decay_capital_without_saving_or_noise(self):
        # given
        params = self.params.replace(chi=0.0, eps=0.0)

        # when
        bundle = simulate_controlled(self.mu.x, self.mu.h, ConstantPolicy(0.5, 0.0), self.flow, params,
                                     self.numerics)

        # then
        expected_h = self.mu.h[:, None] * np.exp(-params.zeta * bundle.times)[None, :]
        np.testing.assert_allclose(expected_h, bundle.h, rtol=1e-12)
        np.testing.assert_allclose(self.mu.x[:, None] + 0.5 * bundle.times[None, :], bundle.x, rtol=1e-12,
                                   atol=1e-12)

    def test_should_keep_zero_capital_at_zero(self):
        # when
        bundle = simulate_controlled(0.0, 0.0, ConstantPolicy(0.0, 1.0), self.flow, self.params, self.numerics,
                                     n_paths=25)

        # then
        self.assertEqual((25, 11), bundle.h.shape)
        np.testing.assert_array_equal(np.zeros((25, 11)), bundle.h)

    def test_should_share_noise_for_equal_labels(self):
        # given
        policy = ConstantPolicy(0.0, 0.5)

        # when
        first = simulate_controlled(0.0, 1.0, policy, self.flow, self.params, self.numerics, label='crn')
        second = simulate_controlled(0.0, 1.0, policy, self.flow, self.params, self.numerics, label='crn')
        other = simulate_controlled(0.0, 1.0, policy, self.flow, self.params, self.numerics, label='other')

        # then
        np.testing.assert_array_equal(first.h, second.h)
        self.assertFalse(np.array_equal(first.h, other.h))

    def test_should_refuse_velocity_outside_box(self):
        # when/then
        with self.assertRaises(ValueError):
            simulate_controlled(0.0, 1.0, ConstantPolicy(2.0, 0.0), self.flow, self.params, self.numerics)

    def test_should_start_late_on_the_grid(self):
        # when
        bundle = simulate_controlled(0.0, 1.0, ConstantPolicy(0.0, 0.0), self.flow, self.params, self.numerics,
                                     n_paths=5, start_index=6)

        # then
        np.testing.assert_array_equal(self.flow.times[6:], bundle.times)

    def test_should_stay_within_moment_bounds(self):
        # given
        bundle = simulate_controlled(self.mu.x, self.mu.h, ConstantPolicy(0.0, 0.3), self.flow, self.params,
                                     self.numerics)

        # when
        report = moment_bound_check(bundle, self.params, self.flow)

        # then
        self.assertTrue(report['ok'])
        self.assertGreaterEqual(report['min_slack'], 0.0)

    def test_should_pay_nothing_without_capital_or_movement(self):
        # given
        bundle = simulate_controlled(0.0, 0.0, ConstantPolicy(0.0, 0.0), self.flow, self.params, self.numerics,
                                     n_paths=10)

        # when
        payoffs = running_payoff(bundle, self.flow, self.params, self.numerics)

        # then
        np.testing.assert_array_equal(np.zeros(10), payoffs)

    def test_should_charge_movement_cost(self):
        # given
        params = self.params.replace(eps=0.0, chi=0.0)
        bundle = simulate_controlled(0.0, 0.0, ConstantPolicy(1.0, 0.0), self.flow, params, self.numerics,
                                     n_paths=3)

        # when
        payoffs = running_payoff(bundle, self.flow, params, self.numerics)

        # then
        expected = -(1.0 - math.exp(-params.rho * 0.5)) / params.rho
        np.testing.assert_allclose(np.full(3, expected), payoffs, rtol=1e-3)

    def test_should_not_separate_under_identical_flows(self):
        # when
        report = perturbation_check(self.flow, self.flow, self.mu, ConstantPolicy(0.0, 0.5), self.params,
                                    self.numerics)

        # then
        self.assertTrue(report['ok'])
        self.assertEqual(0.0, report['distance'])
        self.assertEqual(0.0, report['sup_gap_mean'])


class SimulateMkvTests(unittest.TestCase):

    def setUp(self):
        self.params = baseline_params(horizon=0.5).replace(chi=0.0, eps=0.0)
        self.numerics = _small_numerics(n_time=32)
        self.mu = EmpiricalMeasure.uniform(*_uniform_cloud(30, seed=5))

    def test_should_start_from_initial_measure(self):
        # when
        flow = simulate_mkv(ParticleEnsemble.from_measure(self.mu), ZeroGradients(), self.params, self.numerics)

        # then
        self.assertEqual(self.mu, flow.at(0))
        self.assertEqual(33, len(flow))
        self.assertTrue(flow.is_path_aligned())

    def test_should_decay_without_incentive_to_save(self):
        # when
        flow, diagnostics = simulate_mkv_with_diagnostics(ParticleEnsemble.from_measure(self.mu), ZeroGradients(),
                                                          self.params, self.numerics)

        # then
        np.testing.assert_allclose(self.mu.h * math.exp(-self.params.zeta * 0.5), flow.at(32).h, rtol=1e-12)
        np.testing.assert_allclose(self.mu.x, flow.at(32).x, rtol=0, atol=1e-15)
        self.assertEqual(32, diagnostics.steps)
        self.assertEqual(0, diagnostics.clamped_queries)

    def test_should_satisfy_weak_form(self):
        # given
        flow = simulate_mkv(ParticleEnsemble.from_measure(self.mu), ZeroGradients(), self.params, self.numerics)

        # when
        residuals = fp_weak_residual(flow, ZeroGradients(), self.params)

        # then
        self.assertEqual(4, len(residuals))
        self.assertEqual(0.0, residuals[0])
        self.assertLess(max(residuals), 5e-3)


class TestFunctionTests(unittest.TestCase):

    def test_should_peak_at_center(self):
        # given
        phi = BumpTestFunction(0.5, 1.0, 2.0, 0.5)

        # when
        d = phi.evaluate(0.0, np.array([0.5, 1.5, 5.0]), np.array([2.0, 2.0, 2.0]))

        # then
        np.testing.assert_array_equal([1.0, 0.0, 0.0], d['value'])
        self.assertEqual(0.0, d['dx'][0])

    def test_should_match_finite_differences(self):
        # given
        phi = BumpTestFunction(0.0, 1.5, 1.0, 0.8, t_center=0.5, t_radius=0.5)
        x, h, t, delta = np.array([0.3]), np.array([1.2]), 0.4, 1e-5

        # when
        d = phi.evaluate(t, x, h)

        # then
        value = lambda t_, x_, h_: float(phi.evaluate(t_, x_, h_)['value'][0])
        self.assertAlmostEqual((value(t + delta, x, h) - value(t - delta, x, h)) / (2 * delta), float(d['dt'][0]),
                               places=6)
        self.assertAlmostEqual((value(t, x + delta, h) - value(t, x - delta, h)) / (2 * delta), float(d['dx'][0]),
                               places=6)
        self.assertAlmostEqual((value(t, x, h + delta) - value(t, x, h - delta)) / (2 * delta), float(d['dh'][0]),
                               places=6)
        self.assertAlmostEqual((value(t, x, h + delta) - 2 * value(t, x, h) + value(t, x, h - delta)) / delta ** 2,
                               float(d['dhh'][0]), places=3)

    def test_should_include_constant_function(self):
        # when
        functions = default_test_functions(1.0)

        # then
        self.assertIsInstance(functions[0], ConstantTestFunction)
        self.assertEqual(4, len(functions))


class HorizonConstantsTests(unittest.TestCase):

    def setUp(self):
        self.params = baseline_params()
        self.mu = EmpiricalMeasure.uniform(*_uniform_cloud(50, seed=9))

    def test_should_evaluate_bdg_constant(self):
        # then
        self.assertEqual(4.0, B0(2))
        self.assertAlmostEqual((64.0 / 6.0) ** 2, B0(4), places=10)

    def test_should_evaluate_c_constants(self):
        # when
        constants = c_constants(1.0, 1.0, self.params, 2)

        # then
        self.assertAlmostEqual(16.0, constants['C1'], places=12)
        self.assertAlmostEqual(16.0 + 0.04 + 0.16, constants['C2'], places=12)

    def test_should_close_horizon_at_three_second_moments(self):
        # when
        t_max = t_max_formula(3.0 * 1.7, 1.7, self.params)

        # then
        self.assertAlmostEqual(0.0, t_max, places=12)

    def test_should_open_horizon_without_capital(self):
        # then
        self.assertTrue(math.isinf(t_max_formula(5.0, 0.0, self.params)))

    def test_should_shrink_horizon_with_capital_moment(self):
        # then
        self.assertGreater(t_max_formula(10.0, 0.5, self.params), t_max_formula(10.0, 1.0, self.params))

    def test_should_add_headroom_over_floor(self):
        # when
        constants = horizon_constants(self.mu, self.params)

        # then
        floor = 3.0 * moment_P2(self.mu) + 3.0 + 12.0 * self.params.eps
        self.assertAlmostEqual(floor, k1_floor(self.mu, self.params), places=12)
        self.assertAlmostEqual(1.1 * floor, constants.K1, places=12)
        self.assertEqual(moment_M2(self.mu), constants.second_moment_h)
        self.assertFalse(constants.t_max_infinite)
        self.assertGreater(constants.K2, 0.0)

    def test_should_render_infinite_horizon(self):
        # given
        mu = EmpiricalMeasure.uniform([0.0, 1.0], [0.0, 0.0])

        # when
        rendered = horizon_constants(mu, self.params).as_dict()

        # then
        self.assertEqual('inf', rendered['T_max'])

    def test_should_bound_moments_from_initial_state(self):
        # then
        self.assertAlmostEqual(3.0 * float(np.mean(self.mu.x ** 2)), x_moment_bound(0.0, self.mu, self.params),
                               places=12)
        self.assertEqual((0.0, 0.0), increment_bound(0.3, 0.3, 5.0, self.params))
