"""Order-preserving parallel map with a bounded submission window."""

from __future__ import annotations

from collections import deque
from concurrent.futures import Future, ThreadPoolExecutor
from typing import Callable, Iterable, Iterator, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def bounded_map(
    fn: Callable[[T], R],
    items: Iterable[T],
    workers: int,
    window: int | None = None,
) -> Iterator[R]:
    """Map ``fn`` over ``items`` with at most ``window`` tasks in flight.

    Results come back in input order. Unlike Executor.map, the input is
    consumed lazily, so streams far larger than memory work; peak state is
    one window of futures. A failing task propagates its exception after
    cancelling whatever had not started yet.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    if window is None:
        window = max(workers * 4, 1)
    if window < 1:
        raise ValueError("window must be >= 1")
    with ThreadPoolExecutor(max_workers=workers) as pool:
        pending: deque[Future] = deque()
        try:
            for item in items:
                pending.append(pool.submit(fn, item))
                if len(pending) >= window:
                    yield pending.popleft().result()
            while pending:
                yield pending.popleft().result()
        except BaseException:
            pool.shutdown(wait=True, cancel_futures=True)
            raise
