import datetime
import unittest

from capmfg.memo.entry import MemoEntry
from capmfg.memo.storage import LocalInMemoryMemoStorage

MEMO_SAMPLE_ENTRY = MemoEntry(datetime.datetime.now(), "value")

MEMO_KEY = "key"


class LocalInMemoryMemoStorageTests(unittest.TestCase):
    def setUp(self):
        super().setUp()
        self.storage = LocalInMemoryMemoStorage()

    def test_offer_and_get_returns_same_object(self):
        # given
        self.storage.offer(MEMO_KEY, MEMO_SAMPLE_ENTRY)

        # when
        returned_value = self.storage.get(MEMO_KEY)

        # then
        self.assertEqual(returned_value.value, "value")

    def test_get_without_offer_returns_none(self):
        # given/when
        returned_value = self.storage.get(MEMO_KEY)

        # then
        self.assertIsNone(returned_value)

    def test_released_object_is_not_returned(self):
        # given
        self.storage.offer(MEMO_KEY, MEMO_SAMPLE_ENTRY)
        self.storage.release(MEMO_KEY)

        # when
        returned_value = self.storage.get(MEMO_KEY)

        # then
        self.assertIsNone(returned_value)
        self.assertEqual(0, len(self.storage))

    def test_release_of_unknown_key_is_ignored(self):
        # given/when
        self.storage.release('unknown')

        # then
        self.assertEqual(0, len(self.storage))
