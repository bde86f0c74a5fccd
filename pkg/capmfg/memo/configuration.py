"""
[API] Provides interface (and built-in implementations)
of full memo configuration.
"""

from abc import ABCMeta, abstractmethod

from capmfg.memo.eviction import EvictionStrategy, LeastRecentlyUpdatedEvictionStrategy
from capmfg.memo.key import KeyExtractor, DigestKeyExtractor
from capmfg.memo.storage import MemoStorage, LocalInMemoryMemoStorage


class MemoConfiguration(metaclass=ABCMeta):
    """ Provides configuration for memoization. """

    @abstractmethod
    def configured(self) -> bool:
        """ When false, memoized functions are called directly (no storage involved). """
        raise NotImplementedError()

    @abstractmethod
    def key_extractor(self) -> KeyExtractor:
        raise NotImplementedError()

    @abstractmethod
    def storage(self) -> MemoStorage:
        raise NotImplementedError()

    @abstractmethod
    def eviction_strategy(self) -> EvictionStrategy:
        raise NotImplementedError()

    def __str__(self) -> str:
        return self.__repr__()

    def __repr__(self) -> str:
        return "{name}[configured={configured}, key_extractor={key_extractor}, storage={storage}," \
               " eviction_strategy={eviction_strategy}]" \
            .format(name=self.__class__.__name__, configured=self.configured(), key_extractor=self.key_extractor(),
                    storage=self.storage(), eviction_strategy=self.eviction_strategy())


class MutableMemoConfiguration(MemoConfiguration):
    """ Mutable configuration which can be changed at runtime.
    May be also used to customize existing configuration (for example a default one, which is immutable)."""

    def __init__(self, configured: bool, storage: MemoStorage, key_extractor: KeyExtractor,
                 eviction_strategy: EvictionStrategy) -> None:
        self.__storage = storage
        self.__configured = configured
        self.__key_extractor = key_extractor
        self.__eviction_strategy = eviction_strategy

    @staticmethod
    def initialized_with(configuration: MemoConfiguration) -> 'MutableMemoConfiguration':
        return MutableMemoConfiguration(
            storage=configuration.storage(),
            configured=configuration.configured(),
            key_extractor=configuration.key_extractor(),
            eviction_strategy=configuration.eviction_strategy(),
        )

    def key_extractor(self) -> KeyExtractor:
        return self.__key_extractor

    def configured(self) -> bool:
        return self.__configured

    def storage(self) -> MemoStorage:
        return self.__storage

    def eviction_strategy(self) -> EvictionStrategy:
        return self.__eviction_strategy

    def set_key_extractor(self, value: KeyExtractor) -> 'MutableMemoConfiguration':
        self.__key_extractor = value
        return self

    def set_configured(self, value: bool) -> 'MutableMemoConfiguration':
        self.__configured = value
        return self

    def set_storage(self, value: MemoStorage) -> 'MutableMemoConfiguration':
        self.__storage = value
        return self

    def set_eviction_strategy(self, value: EvictionStrategy) -> 'MutableMemoConfiguration':
        self.__eviction_strategy = value
        return self


class DefaultInMemoryMemoConfiguration(MemoConfiguration):
    """ Default in-memory memoization keeping the most recently computed `capacity` results. """

    def __init__(self, capacity: int = 256) -> None:
        self.__storage = LocalInMemoryMemoStorage()
        self.__key_extractor = DigestKeyExtractor()
        self.__eviction_strategy = LeastRecentlyUpdatedEvictionStrategy(capacity=capacity)

    def configured(self) -> bool:
        return True

    def storage(self) -> LocalInMemoryMemoStorage:
        return self.__storage

    def eviction_strategy(self) -> LeastRecentlyUpdatedEvictionStrategy:
        return self.__eviction_strategy

    def key_extractor(self) -> DigestKeyExtractor:
        return self.__key_extractor
