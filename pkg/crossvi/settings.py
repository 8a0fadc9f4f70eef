from __future__ import annotations
from typing import Any, Generic, TypeVar

import os
import typing

from .import core

T = TypeVar('T')


class SettingsError(core.Error):
	...


class Setting(Generic[T], object):
	def __init__(self, key: str, default: T, description: str = '', schema: Any|None = None) -> None:
		self.key = key
		self.default = default
		self.description = description
		self.schema = schema

	def __get__(self, obj, objtype=None) -> T:
		return SettingsRegistery.settings.get(self.key, self.default)

	def __set__(self, obj, value: T):
		SettingsRegistery.settings[self.key] = value

	@property
	def value_type(self) -> type:
		return typing.get_args(self.__orig_class__)[0] #type: ignore

	def accepts(self, value: Any) -> bool:
		t = self.value_type
		if t == bool:
			return isinstance(value, bool)
		if t == int:
			return isinstance(value, int) and not isinstance(value, bool)
		if t == float:
			return isinstance(value, (int, float)) and not isinstance(value, bool)
		return True


class Settings:
	tolerance = Setting[float] (
		key='tolerance',
		default=1e-6,
		description='Absolute change in the ELBO below which a fit stops'
	)

	max_iter = Setting[int] (
		key='max_iter',
		default=500,
		description='Maximum number of coordinate ascent sweeps'
	)

	guard_dimension = Setting[int] (
		key='guard_dimension',
		default=2000,
		description='''
		Dense oracle paths (exact moments, exported precisions, Gibbs) refuse models with more parameters than this
		'''
	)

	gibbs_iters = Setting[int] (
		key='gibbs_iters',
		default=20000,
		description='Number of retained Gibbs iterations'
	)

	gibbs_burn_in = Setting[int] (
		key='gibbs_burn_in',
		default=1000,
		description='Number of Gibbs iterations discarded before recording draws'
	)

	gibbs_thin = Setting[int] (
		key='gibbs_thin',
		default=1,
		description='Keep every n-th Gibbs draw'
	)

	folds = Setting[int] (
		key='folds',
		default=5,
		description='Folds used by the split-sample UQF estimator'
	)

	top_eigenvectors = Setting[int] (
		key='top_eigenvectors',
		default=50,
		description='Eigenvectors kept per fold by the split-sample UQF estimator'
	)

	kde_bins = Setting[int] (
		key='kde_bins',
		default=401,
		description='Grid points of the binned kernel density estimate used for TV accuracy'
	)

	jobs = Setting[int] (
		key='jobs',
		default=4,
		description='Worker threads used by experiment grids'
	)

	log_info = Setting[bool] (
		key='log_info',
		default=False,
		description='Print progress messages (sweeps, grid replicates, sampler iterations) on stderr'
	)

	log_exceptions = Setting[bool] (
		key='log_exceptions',
		default=True,
		description='Print the traceback of unexpected exceptions'
	)

	log_errors = Setting[bool] (
		key='log_errors',
		default=True,
		description='Print warnings and errors'
	)

# Settings __set__ method will not get called on a class so just override the class with an instance of itself...
Settings = Settings() # type: ignore


class SettingsRegistery:
	settings: dict[str, Any] = {}
	default_path = 'crossvi.settings.json'

	@staticmethod
	def initialize(path: str|None = None):
		SettingsRegistery.settings = {}

		if path is None:
			if not os.path.exists(SettingsRegistery.default_path):
				return
			path = SettingsRegistery.default_path

		with open(path, 'r') as file:
			contents = core.json_decode(file.read() or '{}')

		SettingsRegistery.update(contents)

	@staticmethod
	def update(values: dict[str, Any]):
		known = { setting.key: setting for setting in SettingsRegistery.all() }
		for key, value in values.items():
			if key not in known:
				raise SettingsError(f'Unknown setting `{key}`', key=key)
			if value is None:
				continue
			if not known[key].accepts(value):
				raise SettingsError(f'Setting `{key}` expects {known[key].value_type.__name__}, got {value!r}', key=key)
			SettingsRegistery.settings[key] = value

		core.log_configure(
			log_info=Settings.log_info,
			log_errors=Settings.log_errors,
			log_exceptions=Settings.log_exceptions,
		)

	@staticmethod
	def keys() -> set[str]:
		return { setting.key for setting in SettingsRegistery.all() }

	@staticmethod
	def all() -> list[Setting[Any]]:
		return [value for value in vars(type(Settings)).values() if isinstance(value, Setting)]

	@staticmethod
	def schema():
		import textwrap

		properties = {}
		for setting in SettingsRegistery.all():
			t = setting.value_type

			schema: dict[str, Any] = {}
			if setting.schema:
				schema = setting.schema
			elif t == bool:
				schema = { 'type': 'boolean' }
			elif t == int:
				schema = { 'type': 'integer' }
			elif t == float:
				schema = { 'type': 'number' }
			elif t == str:
				schema = { 'type': 'string' }
			else:
				schema = { 'type': ['object', 'array'] }

			schema['description'] = textwrap.dedent(setting.description).strip().split('\n')[0]
			properties[setting.key] = schema

		return {
			'additionalProperties': False,
			'properties': properties
		}
