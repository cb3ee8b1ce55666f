"""Ordered fan-out of independent solves."""

from __future__ import annotations

import logging
import pickle
from concurrent.futures import ProcessPoolExecutor

log = logging.getLogger(__name__)


def ordered_map(fn, items, jobs: int = 1):
    """``[fn(x) for x in items]``, optionally spread over ``jobs`` processes.

    Results come back in input order whatever the scheduling.  Exceptions
    are returned in place of results so one failing solve does not hide the
    others.  Falls back to serial execution when the work cannot be pickled.
    """
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [_call(fn, x) for x in items]
    try:
        pickle.dumps((fn, items))
    except Exception as exc:  # user-defined weights are not picklable
        log.info("running serially: %s", exc)
        return [_call(fn, x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_call, [fn] * len(items), items))


def _call(fn, x):
    try:
        return fn(x)
    except Exception as exc:
        return exc
