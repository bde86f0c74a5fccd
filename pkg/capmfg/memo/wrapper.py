"""
[API] Provides an entry point to the memoization - a wrapper that is used to memoize pure computations.
"""

import datetime
import functools
import logging
from typing import Optional, Callable

from capmfg.exceptions import MemoizedComputationFailedException
from capmfg.memo.configuration import MemoConfiguration, DefaultInMemoryMemoConfiguration, \
    MutableMemoConfiguration
from capmfg.memo.entry import MemoKey, MemoEntry
from capmfg.memo.statuses import UpdateStatuses


def memoize(method: Optional[Callable] = None, configuration: MemoConfiguration = None):
    """Wraps a pure function with memoization.

    Entries never expire (wrapped computations are deterministic in their arguments);
    they are only released by the eviction strategy.
    Concurrent calls with the same key wait for the single computation in progress.

    Note: If wrapped method throws an exception nothing is stored and a failure occurs.

    Note: Failures are indicated by designated exceptions (not original ones).

    :param function method:                         function to be decorated
    :param MemoConfiguration configuration:         memo configuration; default: DefaultInMemoryMemoConfiguration

    :raises: MemoizedComputationFailedException     upon call: if memoized method has thrown an exception
    """

    if method is None:
        if configuration is None:
            configuration = DefaultInMemoryMemoConfiguration()
        return functools.partial(memoize, configuration=configuration)
    if configuration is None:
        configuration = DefaultInMemoryMemoConfiguration()

    logger = logging.getLogger('{}@{}'.format(memoize.__name__, method.__name__))
    logger.debug('wrapping %s with memoization - configuration: %s', method.__name__, configuration)

    update_statuses = UpdateStatuses()

    def try_release(key: MemoKey, configuration_snapshot: MemoConfiguration) -> bool:
        if update_statuses.is_being_updated(key):
            configuration_snapshot.eviction_strategy().mark_deferred(key)
            logger.debug('Deferred release of memo key %s (being recomputed)', key)
            return False
        configuration_snapshot.storage().release(key)
        configuration_snapshot.eviction_strategy().mark_released(key)
        logger.debug('Released memo key %s', key)
        return True

    def compute(key: MemoKey, args, kwargs, configuration_snapshot: MemoConfiguration) -> MemoEntry:
        if not update_statuses.try_mark_being_updated(key):
            logger.debug('Waiting for results of concurrent computation %s', key)
            entry = update_statuses.await_updated(key)
            if entry is None:
                entry = configuration_snapshot.storage().get(key)
            if entry is None:
                raise MemoizedComputationFailedException('Concurrent computation failed to complete')
            return entry
        try:
            value = method(*args, **kwargs)
        except Exception as e:
            logger.debug('Error while computing memo entry for %s: %s', key, e)
            update_statuses.mark_update_aborted(key)
            raise MemoizedComputationFailedException('Computation failed to complete', e) from e
        entry = MemoEntry(datetime.datetime.utcnow(), value)
        configuration_snapshot.storage().offer(key, entry)
        update_statuses.mark_updated(key, entry)
        logger.debug('Stored memo entry for key %s', key)

        eviction_strategy = configuration_snapshot.eviction_strategy()
        eviction_strategy.mark_written(key, entry)
        to_release = eviction_strategy.next_to_release()
        if to_release is not None:
            try_release(to_release, configuration_snapshot)
        return entry

    @functools.wraps(method)
    def wrapper(*args, **kwargs):
        if not configuration.configured():
            return method(*args, **kwargs)

        configuration_snapshot = MutableMemoConfiguration.initialized_with(configuration)
        key = configuration_snapshot.key_extractor().format_key(method, args, kwargs)

        current_entry = configuration_snapshot.storage().get(key)  # type: Optional[MemoEntry]
        if current_entry is not None:
            configuration_snapshot.eviction_strategy().mark_read(key)
            return current_entry.value

        return compute(key, args, kwargs, configuration_snapshot).value

    wrapper.memo_configuration = configuration  # type: ignore
    return wrapper
