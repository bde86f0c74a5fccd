import datetime
import unittest
from unittest.mock import Mock, patch

from tests import _assert_called_once_with, AnyObject
from capmfg.memo.configuration import MutableMemoConfiguration, DefaultInMemoryMemoConfiguration
from capmfg.memo.entry import MemoEntry
from capmfg.memo.eviction import LeastRecentlyUpdatedEvictionStrategy
from capmfg.memo.statuses import UpdateStatuses
from capmfg.memo.storage import LocalInMemoryMemoStorage
from capmfg.memo.wrapper import memoize


class EvictionStrategyInteractionsTests(unittest.TestCase):

    def setUp(self):
        self.maxDiff = None
        super().setUp()

    def test_should_inform_eviction_strategy_on_entry_added(self):
        # given
        key_extractor = Mock()
        key_extractor.format_key = Mock(return_value='key')
        eviction_strategy = Mock()
        eviction_strategy.next_to_release = Mock(return_value=None)

        @memoize(
            configuration=MutableMemoConfiguration
                .initialized_with(DefaultInMemoryMemoConfiguration())
                .set_key_extractor(key_extractor)
                .set_eviction_strategy(eviction_strategy)
        )
        def sample_method(arg, kwarg=None):
            return arg, kwarg

        # when
        sample_method('test', kwarg='args')

        # then
        _assert_called_once_with(self, eviction_strategy.mark_written, ('key', AnyObject()), {})

    def test_should_inform_eviction_strategy_on_entry_read(self):
        # given
        key_extractor = Mock()
        key_extractor.format_key = Mock(return_value='key')
        eviction_strategy = Mock()
        eviction_strategy.next_to_release = Mock(return_value=None)

        @memoize(
            configuration=MutableMemoConfiguration
                .initialized_with(DefaultInMemoryMemoConfiguration())
                .set_key_extractor(key_extractor)
                .set_eviction_strategy(eviction_strategy)
        )
        def sample_method(arg, kwarg=None):
            return arg, kwarg

        # when
        sample_method('test', kwarg='args')
        sample_method('test', kwarg='args')

        # then
        eviction_strategy.mark_read.assert_called_once_with('key')
        _assert_called_once_with(self, eviction_strategy.mark_written, ('key', AnyObject()), {})

    def test_should_release_key_chosen_by_eviction_strategy(self):
        # given
        eviction_strategy = Mock()
        eviction_strategy.next_to_release = Mock(return_value='to-release')
        storage = Mock()
        storage.get = Mock(return_value=None)

        @memoize(
            configuration=MutableMemoConfiguration
                .initialized_with(DefaultInMemoryMemoConfiguration())
                .set_storage(storage)
                .set_eviction_strategy(eviction_strategy)
        )
        def sample_method(arg):
            return arg

        # when
        sample_method('test')

        # then
        storage.release.assert_called_once_with('to-release')
        eviction_strategy.mark_released.assert_called_once_with('to-release')

    def test_should_hand_back_key_held_by_recomputation(self):
        # given
        storage = LocalInMemoryMemoStorage()
        key_extractor = Mock()
        key_extractor.format_key = Mock(side_effect=lambda method, args, kwargs: str(args[0]))
        strategy = LeastRecentlyUpdatedEvictionStrategy(capacity=1)
        busy = set()

        class HeldStatuses(UpdateStatuses):
            def is_being_updated(self, key):
                return key in busy or super().is_being_updated(key)

        with patch('capmfg.memo.wrapper.UpdateStatuses', HeldStatuses):
            @memoize(
                configuration=MutableMemoConfiguration
                    .initialized_with(DefaultInMemoryMemoConfiguration())
                    .set_key_extractor(key_extractor)
                    .set_storage(storage)
                    .set_eviction_strategy(strategy)
            )
            def identity(x):
                return x

        # when
        identity(1)
        busy.add('1')
        identity(2)
        busy.clear()
        identity(3)
        identity(4)

        # then
        self.assertIsNone(storage.get('1'))
        self.assertIsNone(storage.get('2'))
        self.assertEqual(2, len(storage))


class LeastRecentlyUpdatedEvictionStrategyTests(unittest.TestCase):

    def test_should_release_oldest_written_key_above_capacity(self):
        # given
        strategy = LeastRecentlyUpdatedEvictionStrategy(capacity=2)
        entry = MemoEntry(datetime.datetime.now(), 'value')

        # when
        strategy.mark_written('a', entry)
        strategy.mark_written('b', entry)
        strategy.mark_written('a', entry)
        strategy.mark_written('c', entry)

        # then
        self.assertEqual('b', strategy.next_to_release())
        self.assertIsNone(strategy.next_to_release())

    def test_should_offer_deferred_key_after_newer_ones(self):
        # given
        strategy = LeastRecentlyUpdatedEvictionStrategy(capacity=1)
        entry = MemoEntry(datetime.datetime.now(), 'value')
        strategy.mark_written('a', entry)
        strategy.mark_written('b', entry)

        # when
        held = strategy.next_to_release()
        strategy.mark_deferred(held)

        # then
        self.assertEqual('a', held)
        self.assertEqual('b', strategy.next_to_release())
        self.assertIsNone(strategy.next_to_release())

    def test_should_not_release_below_capacity(self):
        # given
        strategy = LeastRecentlyUpdatedEvictionStrategy(capacity=2)

        # when
        strategy.mark_written('a', MemoEntry(datetime.datetime.now(), 'value'))

        # then
        self.assertIsNone(strategy.next_to_release())

    def test_should_keep_storage_within_capacity(self):
        # given
        storage = LocalInMemoryMemoStorage()

        @memoize(
            configuration=MutableMemoConfiguration
                .initialized_with(DefaultInMemoryMemoConfiguration())
                .set_storage(storage)
                .set_eviction_strategy(LeastRecentlyUpdatedEvictionStrategy(capacity=3))
        )
        def square(x):
            return x * x

        # when
        for x in range(10):
            square(x)

        # then
        self.assertEqual(3, len(storage))

