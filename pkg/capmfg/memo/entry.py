"""
[Internal use only] Contains implementation of memo entry.
"""

import datetime

from typing import Any

MemoKey = str
MemoizedValue = Any


class MemoEntry:
    """Implementation of memo entry used internally"""

    def __init__(self, created: datetime.datetime, value: MemoizedValue) -> None:
        self.value = value
        self.created = created

    def __repr__(self) -> str:
        return "MemoEntry[created={created},value={value}]".format(created=self.created,
                                                                  value=type(self.value).__name__)

    def __str__(self) -> str:
        return self.__repr__()
