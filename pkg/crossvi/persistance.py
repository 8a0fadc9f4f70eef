from __future__ import annotations
from typing import Any
from .import core

import os

VERSION_NUMBER = 1

def load(path: str) -> core.JSON:
	try:
		with open(path, 'r') as file:
			contents = file.read() or "{}"

		json = core.json_decode(contents)
		if json.get("_version") == VERSION_NUMBER:
			return json

	except FileNotFoundError:
		pass

	return core.JSON()

def save(path: str, data: dict[str, Any], config: Any = None):
	data['_version'] = VERSION_NUMBER
	if config is not None:
		data['config_hash'] = core.config_hash(config)

	directory = os.path.dirname(path)
	if directory:
		core.make_directory(directory)
	core.write(path, core.json_encode(data, pretty=True), overwrite_existing=True)
