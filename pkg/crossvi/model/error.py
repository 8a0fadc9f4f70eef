from __future__ import annotations
from typing import Any

from ..import core


class SchemaError(core.Error):
	...

class ParseError(core.Error):
	...

class DomainError(core.Error):
	...

class RankError(core.Error):
	def __init__(self, format: str, rank: int, columns: int, **details: Any):
		super().__init__(format, rank=rank, columns=columns, **details)
		self.rank = rank
		self.columns = columns
