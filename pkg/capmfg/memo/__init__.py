"""
[API] Thread-safe memoization of expensive pure computations (kernel sweeps over query grids).
"""

from capmfg.memo.configuration import MemoConfiguration, MutableMemoConfiguration, DefaultInMemoryMemoConfiguration
from capmfg.memo.wrapper import memoize

__all__ = ['MemoConfiguration', 'MutableMemoConfiguration', 'DefaultInMemoryMemoConfiguration', 'memoize']
