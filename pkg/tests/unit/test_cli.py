import contextlib
import io
import os
import tempfile
import unittest

from capmfg.cli import EXIT_HORIZON, EXIT_IO, EXIT_OK, EXIT_VALIDATION, _resolved, build_parser, main
from capmfg.measures import EmpiricalMeasure, shift
from capmfg.serde import MeasureCsvSerDe, write_bytes
from tests import _uniform_cloud


class CommandLineTests(unittest.TestCase):

    def setUp(self):
        self.directory = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.directory.cleanup()

    def _path(self, name: str) -> str:
        return os.path.join(self.directory.name, name)

    def _scenario(self, text: str) -> str:
        path = self._path('scenario.txt')
        write_bytes(path, text.encode('utf-8'))
        return path

    def _measure(self, name: str, mu: EmpiricalMeasure) -> str:
        path = self._path(name)
        write_bytes(path, MeasureCsvSerDe().serialize(mu))
        return path

    def _run(self, *argv):
        out, err = io.StringIO(), io.StringIO()
        with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
            code = main(list(argv))
        return code, out.getvalue(), err.getvalue()

    def test_should_accept_valid_scenario(self):
        # given
        path = self._scenario('rho = 0.2\n')

        # when
        code, out, _ = self._run('validate', path)

        # then
        self.assertEqual(EXIT_OK, code)
        self.assertEqual('ok\n', out)

    def test_should_list_violations(self):
        # given
        path = self._scenario('sigma = 1.5\ngamma = 0\n')

        # when
        code, _, err = self._run('validate', path)

        # then
        self.assertEqual(EXIT_VALIDATION, code)
        self.assertIn('sigma out of (0,1)', err)
        self.assertIn('gamma out of (0,1)', err)

    def test_should_report_missing_scenario_as_io_error(self):
        # when
        code, _, err = self._run('validate', self._path('missing.txt'))

        # then
        self.assertEqual(EXIT_IO, code)
        self.assertIn('cannot read scenario', err)

    def test_should_report_unknown_keys_as_io_error(self):
        # given
        path = self._scenario('omega = 1\n')

        # when
        code, _, _ = self._run('validate', path)

        # then
        self.assertEqual(EXIT_IO, code)

    def test_should_reject_bad_arguments(self):
        # when
        code, _, _ = self._run('no-such-command')

        # then
        self.assertEqual(EXIT_VALIDATION, code)

    def test_should_print_distance_between_measure_files(self):
        # given
        mu = EmpiricalMeasure.uniform(*_uniform_cloud(12))
        a = self._measure('a.csv', mu)
        b = self._measure('b.csv', shift(mu, 0.5))

        # when
        code, out, _ = self._run('wasserstein', a, b)

        # then
        self.assertEqual(EXIT_OK, code)
        self.assertAlmostEqual(0.5, float(out), places=9)

    def test_should_probe_hamiltonian_at_zero_capital(self):
        # given
        measure = self._measure('mu.csv', EmpiricalMeasure.uniform(*_uniform_cloud(12)))
        target = self._path('probe.csv')

        # when
        code, _, _ = self._run('hamiltonian-probe', '--h', '0', '--n', '3', '--p-max', '2', '--measure', measure,
                               '--out', target)

        # then
        self.assertEqual(EXIT_OK, code)
        with open(target) as f:
            lines = f.read().splitlines()
        self.assertEqual('p,p0,s_bar,H1,dpH1,dppH1', lines[0])
        self.assertEqual(['0', 'inf', '0', '0', '0', '0'], [c.lstrip('-') for c in lines[1].split(',')])
        self.assertEqual(4, len(lines))

    def test_should_sweep_interaction_within_bounds(self):
        # given
        measure = self._measure('mu.csv', EmpiricalMeasure.uniform(*_uniform_cloud(12)))

        # when
        code, out, _ = self._run('interaction-sweep', '--n', '5', '--measure', measure)

        # then
        self.assertEqual(EXIT_OK, code)
        lines = out.splitlines()
        self.assertEqual('x,F,lower,upper', lines[0])
        self.assertEqual(6, len(lines))
        for line in lines[1:]:
            _, value, lower, upper = (float(c) for c in line.split(','))
            self.assertTrue(lower <= value <= upper)

    def test_should_stop_at_horizon_guard(self):
        # given
        path = self._scenario('horizon = 10\n')

        # when
        code, _, err = self._run('solve-mfg', '--config', path, '--out', self._path('run'))

        # then
        self.assertEqual(EXIT_HORIZON, code)
        self.assertIn('horizon violation', err)
        self.assertFalse(os.path.exists(self._path('run')))

    def test_should_print_horizon_constants(self):
        # when
        code, out, _ = self._run('horizon')

        # then
        self.assertEqual(EXIT_OK, code)
        self.assertIn('"T_max"', out)
        self.assertIn('"K1"', out)

    def test_should_override_scenario_threads(self):
        # given
        path = self._scenario('numerics.threads = 1\n')
        args = build_parser().parse_args(['horizon', '--config', path, '--threads', '3'])

        # when
        _, numerics = _resolved(args)

        # then
        self.assertEqual(3, numerics.threads)

    def test_should_keep_scenario_threads_without_override(self):
        # given
        path = self._scenario('numerics.threads = 2\n')
        args = build_parser().parse_args(['horizon', '--config', path])

        # when
        _, numerics = _resolved(args)

        # then
        self.assertEqual(2, numerics.threads)

    def test_should_reject_non_positive_threads(self):
        # when
        code, _, err = self._run('horizon', '--threads', '0')

        # then
        self.assertEqual(EXIT_VALIDATION, code)
        self.assertIn('positive integer', err)
