import math

import numpy as np

from capmfg.params import NumericsParams, baseline_params


class AnyObject(object):
    def __eq__(self, o: object) -> bool:
        return True


def _assert_called_once_with(test_object, mock, args, kwargs):
    """Mock assertions do not support "any" placeholders. This method allows to use AnyObject as any argument."""
    calls_list = mock.call_args_list
    test_object.assertEqual(1, len(calls_list), 'Called {} times but expected only one call'.format(len(calls_list)))
    call_args, call_kwargs = calls_list[0]

    for arg_num in range(len(args)):
        expected = args[arg_num]
        got = call_args[arg_num]
        test_object.assertTrue(expected.__eq__(got), 'Arguments at position {} mismatch: {} != {}'
                               .format(arg_num, expected, got))

    for kwarg_key in set(kwargs.keys()).union(set(call_kwargs.keys())):
        expected = kwargs[kwarg_key]
        got = call_kwargs[kwarg_key]
        test_object.assertTrue(expected.__eq__(got), 'Arguments under key {} mismatch: {} != {}'
                               .format(kwarg_key, expected, got))


def _small_numerics(**changes) -> NumericsParams:
    """Desk-scale numerics shared by the heavier tests."""
    numerics = NumericsParams(n_particles=120, n_time=8, n_x=24, n_y=24, mc_paths=200, max_iter=6, ot_cap=512,
                              threads=1)
    return numerics.replace(**changes)


def _small_params(horizon: float = 0.01, **changes):
    return baseline_params(horizon=horizon).replace(**changes)


def _assert_close(test_object, expected: float, got: float, rel: float = 1e-9, abs_tol: float = 1e-12):
    test_object.assertTrue(math.isclose(expected, got, rel_tol=rel, abs_tol=abs_tol),
                           '{} != {} (rel={}, abs={})'.format(expected, got, rel, abs_tol))


def _uniform_cloud(n: int, seed: int = 0):
    generator = np.random.default_rng(seed)
    return generator.normal(0.0, 0.5, n), np.exp(generator.normal(0.0, 0.25, n))
