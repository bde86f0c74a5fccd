"""
[API] Provides interface (and built-in implementations)
how memo keys are constructed.
This interface is used in memo configuration.
"""

import hashlib
from abc import abstractmethod, ABCMeta

import numpy as np
from typing import Tuple, Any, Dict


def array_digest(*arrays: np.ndarray) -> str:
    """Content digest of arrays (dtype, shape and raw bytes) - equal content gives equal digest."""
    digest = hashlib.blake2b(digest_size=16)
    for array in arrays:
        contiguous = np.ascontiguousarray(array)
        digest.update(str(contiguous.dtype).encode('ascii'))
        digest.update(str(contiguous.shape).encode('ascii'))
        digest.update(contiguous.tobytes())
    return digest.hexdigest()


class KeyExtractor(metaclass=ABCMeta):
    """ Provides logic of memo key construction. """

    @abstractmethod
    def format_key(self, method_reference, call_args: Tuple[Any, ...], call_kwargs: Dict[str, Any]) -> str:
        """Using wrapped method object, call args and call keyword args, prepare memo entry key."""
        raise NotImplementedError()


class DigestKeyExtractor(KeyExtractor):
    """Uses method name and a content digest of every argument as memo entry key.
    Objects exposing `fingerprint()` (measures) are keyed by it, arrays by their bytes,
    everything else by `repr`. Keys are therefore stable across equal-content objects."""

    def format_key(self, method_reference, call_args: Tuple[Any, ...], call_kwargs: Dict[str, Any]) -> str:
        parts = [getattr(method_reference, '__qualname__', str(method_reference))]
        for value in list(call_args) + [call_kwargs[k] for k in sorted(call_kwargs)]:
            parts.append(self._encode(value))
        return '|'.join(parts)

    @staticmethod
    def _encode(value: Any) -> str:
        if hasattr(value, 'fingerprint'):
            return value.fingerprint()
        if isinstance(value, np.ndarray):
            return array_digest(value)
        return repr(value)

    def __str__(self) -> str:
        return self.__repr__()

    def __repr__(self) -> str:
        return "{name}[]".format(name=self.__class__.__name__)
