"""
[API] Provides interface (and built-in implementations)
of storage for memo entries.
This interface is used in memo configuration.
"""

import threading
from abc import ABCMeta, abstractmethod

from typing import Optional, Dict

from capmfg.memo.entry import MemoKey, MemoEntry


class MemoStorage(metaclass=ABCMeta):
    @abstractmethod
    def get(self, key: MemoKey) -> Optional[MemoEntry]:
        """Request value for given key. If currently there is no such value, returns None."""
        raise NotImplementedError()

    @abstractmethod
    def offer(self, key: MemoKey, entry: MemoEntry) -> None:
        """Offer entry to be stored. If storage already has more relevant data, offer may be declined."""
        raise NotImplementedError()

    @abstractmethod
    def release(self, key: MemoKey) -> None:
        """Declare that current client does not need entry determined by given key."""
        raise NotImplementedError()


class LocalInMemoryMemoStorage(MemoStorage):
    """Implementation that stores all entries as-is in a dictionary residing solely in memory."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._data = {}  # type: Dict[MemoKey, MemoEntry]

    def offer(self, key: MemoKey, entry: MemoEntry) -> None:
        with self._lock:
            self._data[key] = entry

    def release(self, key: MemoKey) -> None:
        with self._lock:
            self._data.pop(key, None)

    def get(self, key: MemoKey) -> Optional[MemoEntry]:
        with self._lock:
            return self._data.get(key, None)

    def __len__(self) -> int:
        with self._lock:
            return len(self._data)
