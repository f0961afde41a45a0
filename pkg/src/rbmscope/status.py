from __future__ import annotations

from enum import IntEnum
from os import EX_OK
from signal import SIGINT


class ExitStatus(IntEnum):
    OK = EX_OK
    VALIDATION_ERROR = 2
    ASSERTION_FAILURE = 3
    INTERRUPTED = 128 + SIGINT
