import datetime
import threading
import unittest

from capmfg.memo.entry import MemoEntry
from capmfg.memo.statuses import UpdateStatuses


class UpdateStatusesTests(unittest.TestCase):

    def setUp(self):
        super().setUp()
        self.update_statuses = UpdateStatuses()

    def test_should_not_be_updating(self):
        # given/when/then
        self.assertFalse(self.update_statuses.is_being_updated('key'))

    def test_should_be_updating(self):
        # given/when
        claimed = self.update_statuses.try_mark_being_updated('key')

        # then
        self.assertTrue(claimed)
        self.assertTrue(self.update_statuses.is_being_updated('key'))

    def test_should_refuse_second_claim_of_same_key(self):
        # given
        self.update_statuses.try_mark_being_updated('key')

        # when
        claimed = self.update_statuses.try_mark_being_updated('key')

        # then
        self.assertFalse(claimed)

    def test_should_raise_exception_during_be_mark_as_updated(self):
        # given/when/then
        with self.assertRaises(ValueError):
            self.update_statuses.mark_updated('key', None)

    def test_should_be_mark_as_updated(self):
        # given
        self.update_statuses.try_mark_being_updated('key')

        # when
        self.update_statuses.mark_updated('key', None)

        # then
        self.assertFalse(self.update_statuses.is_being_updated('key'))

    def test_should_raise_exception_during_mark_update_as_aborted(self):
        # given/when/then
        with self.assertRaises(ValueError):
            self.update_statuses.mark_update_aborted('key')

    def test_should_mark_update_as_aborted(self):
        # given
        self.update_statuses.try_mark_being_updated('key')

        # when
        self.update_statuses.mark_update_aborted('key')

        # then
        self.assertFalse(self.update_statuses.is_being_updated('key'))

    def test_should_return_none_when_awaiting_key_not_being_updated(self):
        # given/when
        result = self.update_statuses.await_updated('key')

        # then
        self.assertIsNone(result)

    def test_should_return_none_on_await_timeout(self):
        # given
        self.update_statuses = UpdateStatuses(update_lock_timeout=0.001)
        self.update_statuses.try_mark_being_updated('key')

        # when
        result = self.update_statuses.await_updated('key')

        # then
        self.assertIsNone(result)
        self.assertTrue(self.update_statuses.is_being_updated('key'))

    def test_should_await_updated_return_entry(self):
        # given
        entry = MemoEntry(datetime.datetime.now(), 'value')
        self.update_statuses.try_mark_being_updated('key')
        timer = threading.Timer(0.05, self.update_statuses.mark_updated, args=('key', entry))

        # when
        timer.start()
        result = self.update_statuses.await_updated('key')
        timer.join()

        # then
        self.assertIs(entry, result)
        self.assertFalse(self.update_statuses.is_being_updated('key'))
