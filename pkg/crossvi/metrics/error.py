from __future__ import annotations

from ..import core


class SampleSizeError(core.Error):
	...

class DegenerateDensityError(core.Error):
	...
