from __future__ import annotations

from ..import core


class GenerationError(core.Error):
	...
