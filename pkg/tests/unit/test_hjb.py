import math
import unittest

import numpy as np

from capmfg.dynamics import ConstantPolicy
from capmfg.exceptions import CflViolationException, GridMismatchException
from capmfg.hamiltonian import H0
from capmfg.hjb import (ValueField, cfl_number, diffusion_operator, feedback_policy, gradients, mc_value, pde_residual,
                        solve_hjb, value_envelope, weighted_gradient_bound, x_hamiltonian, y_hamiltonian)
from capmfg.measures import EmpiricalMeasure, MeasureFlow
from capmfg.params import sample_initial_measure
from tests import _small_numerics, _small_params


def _log_linear_field(c: float, numerics, times) -> ValueField:
    (x_min, x_max), (y_min, y_max), n_x, n_y = numerics.grid
    x_nodes = np.linspace(x_min, x_max, n_x)
    y_nodes = np.linspace(y_min, y_max, n_y)
    w = np.broadcast_to(c * y_nodes, (len(times), n_x, n_y)).copy()
    return ValueField(times, x_nodes, y_nodes, w)


class ValueFieldTests(unittest.TestCase):

    def setUp(self):
        self.numerics = _small_numerics()
        self.times = MeasureFlow.uniform_grid(0.01, 8)

    def test_should_refuse_mismatched_values(self):
        # when/then
        with self.assertRaises(GridMismatchException):
            ValueField(self.times, np.zeros(3), np.zeros(4), np.zeros((9, 4, 3)))

    def test_should_convert_log_gradient_to_capital_gradient(self):
        # given
        field = _log_linear_field(2.0, self.numerics, self.times)
        h = np.array([0.1, 1.0, 7.0])

        # when
        dx, dh, clamped = field.grid_gradients(3, np.zeros(3), h)

        # then
        np.testing.assert_allclose(np.zeros(3), dx, atol=1e-12)
        np.testing.assert_allclose(2.0 / h, dh, rtol=1e-9)
        self.assertEqual(0, clamped)

    def test_should_count_clamped_queries(self):
        # given
        field = _log_linear_field(1.0, self.numerics, self.times)

        # when
        _, _, clamped = field.grid_gradients(0, np.array([0.0, 10.0, 0.0]), np.array([1.0, 1.0, 1e6]))

        # then
        self.assertEqual(2, clamped)

    def test_should_vanish_at_zero_capital(self):
        # given
        field = _log_linear_field(1.0, self.numerics, self.times)

        # then
        self.assertEqual(0.0, field.value(0.0, 0.3, 0.0))
        self.assertAlmostEqual(math.log(2.0), field.value(0.004, 0.3, 2.0), places=2)

    def test_should_interpolate_gradients_between_times(self):
        # given
        field = _log_linear_field(1.0, self.numerics, self.times)

        # when
        dx, dh = gradients(field, 0.0033, 0.0, 1.0)

        # then
        self.assertAlmostEqual(0.0, dx, places=12)
        self.assertAlmostEqual(1.0, dh, places=9)


class NumericalHamiltonianTests(unittest.TestCase):

    def setUp(self):
        self.params = _small_params()

    def test_should_reduce_to_hamiltonian_for_equal_differences(self):
        # given
        q = np.array([-3.0, -0.5, 0.0, 1.0, 4.0])

        # when
        flux = x_hamiltonian(q, q, self.params)

        # then
        np.testing.assert_array_equal(H0(q, self.params), flux)

    def test_should_take_minimum_across_rarefaction(self):
        # when
        flux = x_hamiltonian(np.array([1.0]), np.array([-1.0]), self.params)

        # then
        np.testing.assert_array_equal([0.0], flux)

    def test_should_take_maximum_across_shock(self):
        # when
        flux = x_hamiltonian(np.array([-1.0]), np.array([2.0]), self.params)

        # then
        np.testing.assert_array_equal([1.0], flux)

    def test_should_be_linear_without_interaction(self):
        # given
        q_minus, q_plus = np.array([1.0, -2.0]), np.array([1.0, 3.0])
        h = np.array([2.0, 2.0])

        # when
        flux = y_hamiltonian(q_minus, q_plus, 1.0, self.params.f_spec(h), 0.0, h, self.params)

        # then
        slope = -(self.params.zeta + 0.5 * self.params.chi ** 2)
        np.testing.assert_allclose([slope * 1.0, slope * -2.0], flux, rtol=1e-12)


class SolveHjbTests(unittest.TestCase):

    def setUp(self):
        self.params = _small_params()
        self.numerics = _small_numerics()
        self.times = MeasureFlow.uniform_grid(self.params.horizon, self.numerics.n_time)

    def test_should_stay_zero_for_zero_capital_population(self):
        # given
        flow = MeasureFlow.constant(EmpiricalMeasure.uniform([0.0, 1.0], [0.0, 0.0]), self.times)

        # when
        field = solve_hjb(flow, self.params, self.numerics)

        # then
        np.testing.assert_array_equal(np.zeros_like(field.w), field.w)
        self.assertEqual({'negative': 0, 'monotone': 0}, field.metadata['repairs'])
        self.assertEqual({'max': 0.0, 'rms': 0.0}, pde_residual(field, flow, self.params, self.numerics))

    def test_should_end_at_zero_and_stay_nonnegative(self):
        # given
        mu0 = sample_initial_measure(self.params, self.numerics)
        flow = MeasureFlow.constant(mu0, self.times)

        # when
        field = solve_hjb(flow, self.params, self.numerics)

        # then
        np.testing.assert_array_equal(np.zeros_like(field.w[-1]), field.w[-1])
        self.assertTrue(np.all(field.w >= 0.0))
        self.assertTrue(np.all(np.diff(field.w, axis=2) >= 0.0))
        self.assertGreater(float(field.w[0].max()), 0.0)
        self.assertLessEqual(field.metadata['cfl'], 0.9)
        self.assertTrue(math.isfinite(weighted_gradient_bound(field)))

    def test_should_stay_below_value_envelope(self):
        # given
        mu0 = sample_initial_measure(self.params, self.numerics)
        flow = MeasureFlow.constant(mu0, self.times)
        field = solve_hjb(flow, self.params, self.numerics)

        # when
        envelope = value_envelope(0.0, 1.0, flow, self.params)

        # then
        self.assertLessEqual(field.value(0.0, 0.0, 1.0), envelope)

    def test_should_name_required_steps_on_cfl_violation(self):
        # given
        params = _small_params(horizon=1.0)
        mu0 = sample_initial_measure(params, self.numerics)
        flow = MeasureFlow.constant(mu0, MeasureFlow.uniform_grid(1.0, 2))

        # when
        with self.assertRaises(CflViolationException) as context:
            solve_hjb(flow, params, self.numerics)

        # then
        x_nodes, y_nodes = np.linspace(-4.0, 4.0, 24), np.linspace(-6.0, 3.0, 24)
        _, rate = cfl_number(flow, x_nodes[1] - x_nodes[0], y_nodes[1] - y_nodes[0], params)
        self.assertEqual(int(math.ceil(rate / 0.9)), context.exception.required_n_time)
        self.assertGreater(context.exception.cfl, 0.9)

    def test_should_assemble_square_operator(self):
        # given
        x_nodes, y_nodes = np.linspace(0.0, 1.0, 5), np.linspace(0.0, 1.0, 4)

        # when
        operator = diffusion_operator(x_nodes, y_nodes, self.params)

        # then
        self.assertEqual((20, 20), operator.shape)
        np.testing.assert_allclose(np.zeros(20), operator @ np.ones(20), atol=1e-12)


class MonteCarloValueTests(unittest.TestCase):

    def setUp(self):
        self.params = _small_params()
        self.numerics = _small_numerics()
        self.mu0 = sample_initial_measure(self.params, self.numerics)
        self.flow = MeasureFlow.constant(self.mu0, MeasureFlow.uniform_grid(self.params.horizon, 8))

    def test_should_value_zero_capital_at_zero(self):
        # when
        mean, error = mc_value(0.0, 0.0, 0.0, self.flow, ConstantPolicy(0.0, 0.0), self.params, self.numerics,
                               n_paths=20)

        # then
        self.assertEqual((0.0, 0.0), (mean, error))

    def test_should_follow_feedback_of_solved_field(self):
        # given
        field = solve_hjb(self.flow, self.params, self.numerics)
        policy = feedback_policy(field, self.flow, self.params, self.numerics)

        # when
        v, s = policy(0.0, 0.0, 0.0)
        mean, error = mc_value(0.0, 0.0, 1.0, self.flow, policy, self.params, self.numerics, n_paths=100)

        # then
        self.assertEqual((0.0, 0.0), (v, s))
        self.assertGreater(mean, 0.0)
        self.assertGreaterEqual(error, 0.0)

    def test_should_refuse_field_on_other_grid(self):
        # given
        field = ValueField.zeros(MeasureFlow.uniform_grid(1.0, 4), self.numerics)

        # when/then
        with self.assertRaises(GridMismatchException):
            feedback_policy(field, self.flow, self.params, self.numerics)
