import threading
import time
import unittest
from unittest.mock import Mock

from capmfg.exceptions import MemoizedComputationFailedException
from capmfg.memo.configuration import MutableMemoConfiguration, DefaultInMemoryMemoConfiguration
from capmfg.memo.storage import LocalInMemoryMemoStorage
from capmfg.memo.wrapper import memoize


class MemoizationTests(unittest.TestCase):

    def test_should_return_memoized_value_without_recomputing(self):
        # given
        calls = Mock()

        @memoize
        def square(x):
            calls()
            return x * x

        # when
        first = square(4)
        second = square(4)

        # then
        self.assertEqual(16, first)
        self.assertEqual(16, second)
        self.assertEqual(1, calls.call_count)

    def test_should_compute_once_for_concurrent_callers(self):
        # given
        calls = []
        gate = threading.Event()

        @memoize(configuration=DefaultInMemoryMemoConfiguration())
        def slow(x):
            calls.append(x)
            gate.wait(1.0)
            return x + 1

        results = []
        threads = [threading.Thread(target=lambda: results.append(slow(1))) for _ in range(4)]

        # when
        for thread in threads:
            thread.start()
        time.sleep(0.1)
        gate.set()
        for thread in threads:
            thread.join()

        # then
        self.assertEqual([2, 2, 2, 2], results)
        self.assertEqual([1], calls)

    def test_should_wrap_failure_and_store_nothing(self):
        # given
        storage = LocalInMemoryMemoStorage()

        @memoize(configuration=MutableMemoConfiguration
                 .initialized_with(DefaultInMemoryMemoConfiguration())
                 .set_storage(storage))
        def failing(x):
            raise RuntimeError('boom')

        # when
        with self.assertRaises(MemoizedComputationFailedException) as context:
            failing(1)

        # then
        self.assertIsInstance(context.exception.__cause__, RuntimeError)
        self.assertEqual(0, len(storage))

    def test_should_bypass_memo_when_not_configured(self):
        # given
        calls = Mock()

        @memoize(configuration=MutableMemoConfiguration
                 .initialized_with(DefaultInMemoryMemoConfiguration())
                 .set_configured(False))
        def identity(x):
            calls()
            return x

        # when
        identity(1)
        identity(1)

        # then
        self.assertEqual(2, calls.call_count)

    def test_should_expose_configuration(self):
        # given
        configuration = DefaultInMemoryMemoConfiguration(capacity=8)

        # when
        @memoize(configuration=configuration)
        def identity(x):
            return x

        # then
        self.assertIs(configuration, identity.memo_configuration)
