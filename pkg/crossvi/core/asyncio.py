from __future__ import annotations

import asyncio
from concurrent.futures import ThreadPoolExecutor

from typing import Any, Awaitable, Callable, Coroutine, TypeVar

T = TypeVar('T')

_executor: ThreadPoolExecutor|None = None
_executor_workers = 0


def executor(max_workers: int) -> ThreadPoolExecutor:
	global _executor
	global _executor_workers

	if _executor is None or _executor_workers != max_workers:
		if _executor:
			_executor.shutdown(wait=True)
		_executor = ThreadPoolExecutor(max_workers=max_workers, thread_name_prefix='crossvi')
		_executor_workers = max_workers

	return _executor

def run_in_executor(func: Callable[..., T], *args: Any, jobs: int = 4) -> Awaitable[T]:
	loop = asyncio.get_running_loop()
	return loop.run_in_executor(executor(jobs), lambda: func(*args))

def gather_results(*coros_or_futures: Awaitable[T]) -> Awaitable[list[T|BaseException]]:
	return asyncio.gather(*coros_or_futures, return_exceptions=True) #type: ignore

def run(value: Coroutine[Any, Any, T]) -> T:
	return asyncio.run(value)
