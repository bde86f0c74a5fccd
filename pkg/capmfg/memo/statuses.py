"""
[Internal use only] Encapsulates update state management.
"""
import logging
import threading
from typing import Optional, Dict

from capmfg.memo.entry import MemoKey, MemoEntry


class _PendingUpdate:
    def __init__(self) -> None:
        self.done = threading.Event()
        self.entry = None  # type: Optional[MemoEntry]


class UpdateStatuses:
    """Tracks computations in progress, so concurrent callers of the same key wait for one computation
    instead of repeating it."""

    def __init__(self, update_lock_timeout: float = 600.0) -> None:
        self.logger = logging.getLogger(__name__)
        self._update_lock_timeout = update_lock_timeout
        self._lock = threading.Lock()
        self._updates_in_progress = {}  # type: Dict[MemoKey, _PendingUpdate]

    def try_mark_being_updated(self, key: MemoKey) -> bool:
        """Atomically claims the update of given key. Returns False if another thread already holds it."""
        with self._lock:
            if key in self._updates_in_progress:
                return False
            self._updates_in_progress[key] = _PendingUpdate()
            return True

    def is_being_updated(self, key: MemoKey) -> bool:
        with self._lock:
            return key in self._updates_in_progress

    def mark_updated(self, key: MemoKey, entry: MemoEntry) -> None:
        """Informs that update has been finished and wakes up waiting callers."""
        with self._lock:
            if key not in self._updates_in_progress:
                raise ValueError('Key {} is not being updated'.format(key))
            update = self._updates_in_progress.pop(key)
        update.entry = entry
        update.done.set()

    def mark_update_aborted(self, key: MemoKey) -> None:
        """Informs that update failed to complete. Waiting callers receive None."""
        with self._lock:
            if key not in self._updates_in_progress:
                raise ValueError('Key {} is not being updated'.format(key))
            update = self._updates_in_progress.pop(key)
        update.done.set()

    def await_updated(self, key: MemoKey) -> Optional[MemoEntry]:
        """Blocks until update in progress has been finished.
        Returns updated entry or None if update failed/timed-out (or was already finished)."""
        with self._lock:
            update = self._updates_in_progress.get(key)
        if update is None:
            return None
        if not update.done.wait(self._update_lock_timeout):
            self.logger.debug('Update task timed out - giving up waiting for key %s', key)
            return None
        return update.entry
