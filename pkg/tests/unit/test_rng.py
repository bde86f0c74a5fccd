import unittest

import numpy as np

from capmfg import rng


class CounterStreamTests(unittest.TestCase):

    def test_should_not_depend_on_the_number_of_particles(self):
        # given
        short = rng.normals(7, 'stream', 3, 1, 5)

        # when
        long = rng.normals(7, 'stream', 3, 1, 50)

        # then
        np.testing.assert_array_equal(short, long[:5])

    def test_should_separate_labels_steps_and_coordinates(self):
        # given
        base = rng.uniforms(7, 'stream', 0, 0, 16)

        # when
        others = [rng.uniforms(7, 'other', 0, 0, 16), rng.uniforms(7, 'stream', 1, 0, 16),
                  rng.uniforms(7, 'stream', 0, 1, 16), rng.uniforms(8, 'stream', 0, 0, 16)]

        # then
        for other in others:
            self.assertFalse(np.array_equal(base, other))

    def test_should_repeat_for_the_same_address(self):
        # when
        first = rng.normals(11, 'repeat', 2, 0, 32)
        second = rng.normals(11, 'repeat', 2, 0, 32)

        # then
        np.testing.assert_array_equal(first, second)

    def test_should_stay_in_open_unit_interval(self):
        # when
        draws = rng.uniforms(0, 'bounds', 0, 0, 100000)

        # then
        self.assertTrue(np.all(draws > 0.0))
        self.assertTrue(np.all(draws < 1.0))
        self.assertTrue(np.all(np.isfinite(rng.normals(0, 'bounds', 0, 0, 100000))))

    def test_should_derive_stable_seeds(self):
        # when
        seed = rng.derive_seed(1, 'label')

        # then
        self.assertEqual(seed, rng.derive_seed(1, 'label'))
        self.assertNotEqual(seed, rng.derive_seed(1, 'label2'))
        self.assertTrue(0 <= seed < 2 ** 64)

    def test_should_permute_all_indices(self):
        # when
        order = rng.permutation(5, 'perm', 10)

        # then
        self.assertEqual(list(range(10)), sorted(order.tolist()))
