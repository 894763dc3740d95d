"""Process-wide warning counters.

Recoverable conditions (clamped tilts, skipped reflectors, rejected IMU
samples, truncated beamformer cells) are counted here instead of raised. The
first occurrence of each event is logged as a warning, later ones at debug
level. Tests and the CLI read the counters to report degradation.
"""

from __future__ import annotations

import logging
import threading
from collections import Counter

log = logging.getLogger("steadybeam")

_lock = threading.Lock()
_counts: Counter[str] = Counter()


def warn(event: str, message: str = "", amount: int = 1) -> None:
    if amount <= 0:
        return
    with _lock:
        first = _counts[event] == 0
        _counts[event] += amount
    if message:
        log.log(logging.WARNING if first else logging.DEBUG, "%s: %s", event, message)


def count(event: str) -> int:
    with _lock:
        return _counts[event]


def snapshot() -> dict[str, int]:
    with _lock:
        return dict(_counts)


def reset() -> None:
    with _lock:
        _counts.clear()
