from __future__ import annotations

from .util import *
from .event import Handle, Event
from .error import Error
from .json import json_encode, json_decode, JSON
from .log import *
from .asyncio import (
	run,
	run_in_executor,
	gather_results,
)
