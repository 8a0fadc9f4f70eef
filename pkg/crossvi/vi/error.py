from __future__ import annotations
from typing import Any

from ..import core


class SingularityError(core.Error):
	def __init__(self, format: str, block: int|list[int]|None = None, **details: Any):
		super().__init__(format, block=block, **details)
		self.block = block

class StaleFactorsError(core.Error):
	...

class DimensionGuardError(core.Error):
	def __init__(self, parameters: int, guard: int):
		super().__init__(f'Refusing a dense computation over {parameters} parameters (guard is {guard}); raise guard_dimension to override', parameters=parameters, guard=guard)
