"""Ordered parallel map used for per-client work inside a round."""

from collections.abc import Callable, Iterable
from concurrent.futures import ThreadPoolExecutor
from typing import TypeVar

T = TypeVar("T")
R = TypeVar("R")


class ClientPool:
    """Maps a function over items on a thread pool, returning results in input order.

    With a single thread the map runs inline. Results never depend on the
    thread count because every task only reads shared immutable inputs.
    """

    def __init__(self, threads: int = 1) -> None:
        self.threads = max(1, int(threads))
        self._executor: ThreadPoolExecutor | None = None
        if self.threads > 1:
            self._executor = ThreadPoolExecutor(max_workers=self.threads)

    def map(self, fn: Callable[[T], R], items: Iterable[T]) -> list[R]:
        if self._executor is None:
            return [fn(item) for item in items]
        return list(self._executor.map(fn, items))

    def close(self) -> None:
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None

    def __enter__(self) -> "ClientPool":
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.close()


SERIAL = ClientPool(1)
