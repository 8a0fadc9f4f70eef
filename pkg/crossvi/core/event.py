from __future__ import annotations
from typing import Any, Callable, Generic, TypeVar

T = TypeVar('T')


class Handle(Generic[T]):
	def __init__(self, event: Event[T], listener: Callable[[T], Any]) -> None:
		self.event = event
		self.listener = listener

	def dispose(self) -> None:
		self.event.remove(self)

	def __enter__(self) -> Handle[T]:
		return self

	def __exit__(self, *args: Any) -> None:
		self.dispose()


class Event(Generic[T]):
	"""
	Listeners receive one payload. A listener returning a truthy value asks the emitter to stop; every listener still runs.
	"""
	def __init__(self) -> None:
		self.handles: list[Handle[T]] = []

	def add(self, listener: Callable[[T], Any]) -> Handle[T]:
		handle = Handle(self, listener)
		self.handles.append(handle)
		return handle

	def remove(self, handle: Handle[T]) -> None:
		if handle in self.handles:
			self.handles.remove(handle)

	def __bool__(self) -> bool:
		return bool(self.handles)

	def __call__(self, payload: T) -> bool:
		stop = False
		for handle in list(self.handles):
			stop = bool(handle.listener(payload)) or stop
		return stop
