from __future__ import annotations

from ..import core


class UnsupportedRestrictionError(core.Error):
	...

class PreconditionError(core.Error):
	...
