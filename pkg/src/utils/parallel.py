"""Ordered thread-parallel map used for per-k and per-z solves."""

import logging
from typing import Any, Callable, List, Sequence, Tuple

from joblib import Parallel, delayed

from src.utils.errors import AggregateSolveError, DbarError

logger = logging.getLogger(__name__)


def _guarded(fn: Callable[[Any], Any], item: Any) -> Tuple[bool, Any]:
    try:
        return True, fn(item)
    except DbarError as exc:
        return False, exc


def ordered_map(fn: Callable[[Any], Any], items: Sequence[Any], workers: int = 1,
                label: str = 'item') -> List[Any]:
    """
    Apply ``fn`` to every item and return results in input order.

    Results never depend on the worker count: each call is independent and the
    merge is positional. Failures of individual items are collected and raised
    together as an ``AggregateSolveError``.
    """
    items = list(items)
    if workers == 1 or len(items) < 2:
        outcomes = [_guarded(fn, item) for item in items]
    else:
        outcomes = Parallel(n_jobs=workers, prefer='threads')(
            delayed(_guarded)(fn, item) for item in items
        )

    failures = []
    results = []
    for item, (ok, value) in zip(items, outcomes):
        if ok:
            results.append(value)
        else:
            failures.append({label: item, 'error': value.to_dict()})
            results.append(None)

    if failures:
        logger.error(f"{len(failures)} of {len(items)} {label} solves failed")
        raise AggregateSolveError(
            f"{len(failures)} of {len(items)} {label} solves failed",
            failures=failures,
        )
    return results

