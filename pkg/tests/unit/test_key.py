import unittest
from unittest.mock import Mock

import numpy as np

from tests import _assert_called_once_with, AnyObject
from capmfg.measures import EmpiricalMeasure
from capmfg.memo.configuration import MutableMemoConfiguration, DefaultInMemoryMemoConfiguration
from capmfg.memo.key import DigestKeyExtractor, array_digest
from capmfg.memo.wrapper import memoize


class KeyExtractorInteractionsTests(unittest.TestCase):

    def test_should_call_key_extractor_on_method_used(self):
        # given
        key_extractor = Mock()
        key_extractor.format_key = Mock(return_value='key')

        @memoize(
            configuration=MutableMemoConfiguration
                .initialized_with(DefaultInMemoryMemoConfiguration())
                .set_key_extractor(key_extractor)
        )
        def sample_method(arg, kwarg=None):
            return arg, kwarg

        # when
        sample_method('test', kwarg='args')

        # then
        _assert_called_once_with(self, key_extractor.format_key, (AnyObject(), ('test',), {'kwarg': 'args'},), {})

    def test_should_pass_extracted_key_to_storage_on_entry_added(self):
        # given
        key_extractor = Mock()
        key_extractor.format_key = Mock(return_value='key')
        storage = Mock()
        storage.get = Mock(return_value=None)

        @memoize(
            configuration=MutableMemoConfiguration
                .initialized_with(DefaultInMemoryMemoConfiguration())
                .set_key_extractor(key_extractor)
                .set_storage(storage)
        )
        def sample_method(arg, kwarg=None):
            return arg, kwarg

        # when
        sample_method('test', kwarg='args')

        # then
        storage.get.assert_called_once_with('key')
        _assert_called_once_with(self, storage.offer, ('key', AnyObject()), {})


class DigestKeyExtractorTests(unittest.TestCase):

    def helper_method(self, x, y, z='val'):
        pass

    def test_should_format_key_of_plain_arguments(self):
        # given
        key_extractor = DigestKeyExtractor()

        # when
        key = key_extractor.format_key(self.helper_method, ('a', 1.5), {'z': 'c'})

        # then
        self.assertEqual(key, "DigestKeyExtractorTests.helper_method|'a'|1.5|'c'")

    def test_should_key_equal_content_arrays_equally(self):
        # given
        key_extractor = DigestKeyExtractor()
        first = np.linspace(0.0, 1.0, 11)
        second = np.linspace(0.0, 1.0, 11)

        # when
        key1 = key_extractor.format_key(self.helper_method, (first,), {})
        key2 = key_extractor.format_key(self.helper_method, (second,), {})

        # then
        self.assertEqual(key1, key2)

    def test_should_distinguish_arrays_differing_in_one_value(self):
        # given
        first = np.zeros(5)
        second = np.zeros(5)
        second[3] = 1e-300

        # when/then
        self.assertNotEqual(array_digest(first), array_digest(second))

    def test_should_key_measures_by_fingerprint(self):
        # given
        key_extractor = DigestKeyExtractor()
        mu = EmpiricalMeasure.uniform([0.0, 1.0], [1.0, 2.0])
        same = EmpiricalMeasure.uniform([0.0, 1.0], [1.0, 2.0])
        other = EmpiricalMeasure.uniform([0.0, 1.0], [1.0, 2.5])

        # when
        key = key_extractor.format_key(self.helper_method, (mu,), {})

        # then
        self.assertEqual(key, key_extractor.format_key(self.helper_method, (same,), {}))
        self.assertNotEqual(key, key_extractor.format_key(self.helper_method, (other,), {}))
