"""
[API] Provides global config of the library.
Translates environment variables into values used internally by the library.
"""

import logging
import os

log_level_name = os.environ.get('MFG_LOG', 'error').strip().lower()
default_threads = max(1, int(os.environ.get('MFG_THREADS', '1') or 1))

_LEVELS = {
    'error': logging.ERROR,
    'info': logging.INFO,
    'debug': logging.DEBUG,
}


def log_level(name: str = None) -> int:
    """Maps one of {error, info, debug} onto a logging level (unknown names fall back to error)."""
    return _LEVELS.get((name or log_level_name).lower(), logging.ERROR)
