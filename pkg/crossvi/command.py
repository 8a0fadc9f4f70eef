from __future__ import annotations
from typing import Any, Protocol

import argparse

from .import core
from .configuration import RunConfig, load_data, resolve_partition


class CommandAction(Protocol):
	def __call__(self, config: RunConfig) -> Any: ...


class Argument:
	def __init__(self, *names: str, **kwargs: Any):
		self.names = names
		self.kwargs = kwargs


class Command:
	requires_data = 1 << 0
	uses_partition = 1 << 1
	uses_seed = 1 << 2

	def __init__(self, name: str, key: str, action: CommandAction, help: str = '', arguments: list[Argument]|None = None, outputs: list[str]|None = None, flags: int = -1):
		self.name = name
		self.key = key
		self.action = action
		self.help = help
		self.arguments = arguments or []
		self.outputs = outputs or []

		if flags < 0:
			self.flags = Command.requires_data|Command.uses_partition
		else:
			self.flags = flags

		CommandsRegistry.register(self)

	def plan(self, config: RunConfig) -> dict[str, Any]:
		"""
		What `run` would do: loads and validates the inputs and resolves the partition without fitting anything.
		"""
		plan: dict[str, Any] = {
			'command': self.key,
			'config': config.into_json(),
			'config_hash': config.config_hash,
			'outputs': [config.output(o) for o in self.outputs],
		}
		if self.flags & Command.requires_data:
			data = load_data(config)
			plan['data'] = {
				'n': data.n,
				'fixed': data.fixed_columns,
				'factors': [{'name': f.name, 'levels': f.levels, 'effect_dim': f.effect_dim} for f in data.factors],
			}
			if self.flags & Command.uses_partition:
				plan['partition'] = resolve_partition(config.partition, data)
		return plan

	def run(self, config: RunConfig) -> int:
		if config.dry_run:
			print(core.json_encode(self.plan(config), pretty=True))
			return 0

		watch = core.stopwatch(self.key)
		self.action(config)
		core.info(f'{self.key} finished in {watch.elapsed():.2f}s')
		return 0


class CommandsRegistry:
	commands: list[Command] = []
	commands_by_action: dict[str, Command] = {}

	@staticmethod
	def register(command: Command):
		CommandsRegistry.commands.append(command)
		CommandsRegistry.commands_by_action[command.key] = command

	@staticmethod
	def common_arguments() -> argparse.ArgumentParser:
		parser = argparse.ArgumentParser(add_help=False)
		parser.add_argument('--data', help='long-format CSV, or a bundled dataset name (toy, nested)')
		parser.add_argument('--schema', help='JSON column-role map; defaults to <data>_schema.json')
		parser.add_argument('--likelihood', default='gaussian', choices=['gaussian', 'binomial'])
		parser.add_argument('--partition', default='pf:fixed', help='ff, uf, pf:fixed, pf:auto or a comma separated list of collapsed blocks')
		parser.add_argument('--tol', type=float, help='ELBO change below which a fit stops (default 1e-6)')
		parser.add_argument('--max-iter', type=int, dest='max_iter')
		parser.add_argument('--jobs', type=int)
		parser.add_argument('--out', default='.', help='output directory')
		parser.add_argument('--dry-run', action='store_true', dest='dry_run', help='validate inputs and print the resolved plan')
		parser.add_argument('--settings', help='JSON settings file')
		return parser

	@staticmethod
	def parser() -> argparse.ArgumentParser:
		common = CommandsRegistry.common_arguments()
		parser = argparse.ArgumentParser(prog='crossvi', description='Variational inference for crossed random effects models')
		subparsers = parser.add_subparsers(dest='command', required=True)

		for command in CommandsRegistry.commands:
			subparser = subparsers.add_parser(command.key, parents=[common], help=command.help, description=command.help)
			if command.flags & Command.uses_seed:
				subparser.add_argument('--seed', type=int, default=0, help='master seed of every random stream the command draws')
			for argument in command.arguments:
				subparser.add_argument(*argument.names, **argument.kwargs)

		return parser

	@staticmethod
	def parse(argv: list[str]|None = None) -> RunConfig:
		arguments = vars(CommandsRegistry.parser().parse_args(argv))
		common = {a.dest for a in CommandsRegistry.common_arguments()._actions} | {'seed'}
		options = {key: value for key, value in arguments.items() if key not in common and key != 'command'}
		return RunConfig(
			command=arguments['command'],
			options=options,
			**{key: value for key, value in arguments.items() if key in common},
		)

	@staticmethod
	def run(config: RunConfig) -> int:
		command = CommandsRegistry.commands_by_action[config.command]
		return command.run(config)


