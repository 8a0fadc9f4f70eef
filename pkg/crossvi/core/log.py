from __future__ import annotations
from typing import Any

import sys
import traceback

_enabled = {'debug': False, 'info': False, 'warn': True, 'error': True}
_tracebacks = True


def log_configure(log_info: bool, log_errors: bool, log_exceptions: bool):
	global _tracebacks
	_enabled['debug'] = _enabled['info'] = log_info
	_enabled['warn'] = _enabled['error'] = log_errors
	_tracebacks = log_exceptions

# stderr only, stdout carries --dry-run plans
def _emit(level: str, *args: Any):
	if not _enabled[level]:
		return
	if level in ('debug', 'info'):
		print('crossvi:', *args, file=sys.stderr)
	else:
		print(f'crossvi: {level}:', *args, file=sys.stderr)

def debug(*args: Any) -> None:
	_emit('debug', *args)

def info(*args: Any) -> None:
	_emit('info', *args)

def warn(*args: Any) -> None:
	_emit('warn', *args)

def error(*args: Any) -> None:
	_emit('error', *args)

def exception(*args: Any) -> None:
	if not _tracebacks:
		return
	if args:
		print('crossvi: error:', *args, file=sys.stderr)
	print(traceback.format_exc(), file=sys.stderr)


class Logger:
	"""
	Sink for the progress of a long running routine (grids, samplers).
	"""
	def log(self, level: str, text: str) -> None:
		raise NotImplementedError

	def info(self, text: str):
		self.log('info', text)

	def warn(self, text: str):
		self.log('warn', text)

	def error(self, text: str):
		self.log('error', text)


class StdioLogger(Logger):
	def __init__(self, prefix: str = '') -> None:
		self.prefix = prefix

	def log(self, level: str, text: str) -> None:
		_emit(level, f'{self.prefix}: {text}' if self.prefix else text)


class RecordingLogger(Logger):
	def __init__(self) -> None:
		self.records: list[tuple[str, str]] = []

	def log(self, level: str, text: str) -> None:
		self.records.append((level, text))

	def messages(self, level: str|None = None) -> list[str]:
		return [text for l, text in self.records if level is None or l == level]


stdio = StdioLogger()
