"""
[API] Provides interface (and built-in implementation)
of the policy bounding how many interaction sweeps stay memoized.
A fixed-point run touches one measure per grid time and iteration, so sweeps of earlier
iterates go stale and are released in the order they were computed.
"""

import collections
import threading
from abc import ABCMeta, abstractmethod

from typing import Optional

from capmfg.memo.entry import MemoKey, MemoEntry


class EvictionStrategy(metaclass=ABCMeta):
    @abstractmethod
    def mark_read(self, key: MemoKey) -> None:
        """Called on a memo hit for given key."""
        raise NotImplementedError()

    @abstractmethod
    def mark_written(self, key: MemoKey, entry: MemoEntry) -> None:
        """Called once a sweep for given key has been computed and stored."""
        raise NotImplementedError()

    @abstractmethod
    def mark_released(self, key: MemoKey) -> None:
        """Called once the stored sweep for given key has been dropped."""
        raise NotImplementedError()

    @abstractmethod
    def mark_deferred(self, key: MemoKey) -> None:
        """Called when the key returned by `next_to_release` could not be dropped (a recomputation holds it);
        the strategy has to offer it again later."""
        raise NotImplementedError()

    @abstractmethod
    def next_to_release(self) -> Optional[MemoKey]:
        """Key whose sweep should be dropped now (or None). The key leaves the strategy's bookkeeping."""
        raise NotImplementedError()


class LeastRecentlyUpdatedEvictionStrategy(EvictionStrategy):
    """Keeps at most `capacity` sweeps; the one computed longest ago goes first. Hits do not refresh a key:
    sweeps are requested in bursts per iterate, not revisited."""

    def __init__(self, capacity: int = 256) -> None:
        self._capacity = capacity
        self._lock = threading.Lock()
        self._order = collections.OrderedDict()  # type: collections.OrderedDict

    def mark_read(self, key: MemoKey) -> None:
        pass

    def mark_released(self, key: MemoKey) -> None:
        with self._lock:
            self._order.pop(key, None)

    def mark_written(self, key: MemoKey, entry: MemoEntry) -> None:
        self.__append(key)

    def mark_deferred(self, key: MemoKey) -> None:
        self.__append(key)

    def next_to_release(self) -> Optional[MemoKey]:
        with self._lock:
            if len(self._order) <= self._capacity:
                return None
            oldest, _ = self._order.popitem(last=False)
            return oldest

    def __append(self, key: MemoKey) -> None:
        with self._lock:
            self._order.pop(key, None)
            self._order[key] = None

    def __str__(self) -> str:
        return self.__repr__()

    def __repr__(self) -> str:
        return "{name}[capacity={capacity}]".format(name=self.__class__.__name__, capacity=self._capacity)
