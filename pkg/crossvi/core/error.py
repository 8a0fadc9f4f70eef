from __future__ import annotations
from typing import Any


class Error(Exception):
	def __init__(self, format: str, **details: Any):
		super().__init__(format)
		self.message = format
		self.details = details

	def into_json(self) -> dict[str, Any]:
		return {
			'error': type(self).__name__,
			'message': self.message,
			**self.details,
		}
