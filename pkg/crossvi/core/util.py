from __future__ import annotations
from typing import Any

import hashlib
import os
import time

import numpy as np

from .log import debug
from .json import json_encode


def write(path: str, data: str, overwrite_existing=False):
	if not overwrite_existing and os.path.exists(path):
		return

	with open(path, 'w') as f:
		f.write(data)

def make_directory(path: str):
	try:
		os.makedirs(path)
	except FileExistsError: ...

def config_hash(config: Any) -> str:
	encoded = json_encode(config).encode('utf-8')
	return hashlib.sha256(encoded).hexdigest()[:16]

def derive_seed(master: int, *keys: int) -> np.random.SeedSequence:
	# counter based: the same (master, keys) always yields the same stream
	return np.random.SeedSequence([int(master), *[int(k) for k in keys]])

def rng(master: int|np.random.SeedSequence, *keys: int) -> np.random.Generator:
	if isinstance(master, np.random.SeedSequence):
		return np.random.default_rng(master)
	return np.random.default_rng(derive_seed(master, *keys))


class stopwatch:
	def __init__(self, prefix: str = '') -> None:
		self.ts = time.perf_counter()
		self.prefix = prefix

	def __call__(self, postfix='') -> None:
		self.print(postfix)

	def print(self, postfix=''):
		debug('%s: %2.2f ms %s' % (self.prefix.rjust(8), self.elapsed() * 1000, postfix))

	def elapsed(self) -> float:
		return time.perf_counter() - self.ts
