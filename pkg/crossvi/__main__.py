from __future__ import annotations

import sys

from .import core
from .command import CommandsRegistry
from .settings import SettingsRegistery, Settings
from .import commands as _ # registers every command


def main(argv: list[str]|None = None) -> int:
	try:
		config = CommandsRegistry.parse(argv)
		SettingsRegistery.initialize(config.settings)
		if config.jobs:
			Settings.jobs = config.jobs
		return CommandsRegistry.run(config)

	except core.Error as e:
		print(core.json_encode(e.into_json()), file=sys.stderr)
		return 1

	except Exception as e:
		core.exception(e)
		print(core.json_encode({'error': type(e).__name__, 'message': str(e)}), file=sys.stderr)
		return 1


if __name__ == '__main__':
	sys.exit(main())
