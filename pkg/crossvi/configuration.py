from __future__ import annotations
from typing import Any

from dataclasses import dataclass, field
import os

from .import core
from .model import LikelihoodKind, MixedModelData, PriorSpec, SchemaError, load_long_csv, load_schema
from .theory import DesignCounts, nested_pairs, weighted_counts
from .vi import Partition

COMMANDS = ('fit', 'simulate', 'uqf', 'bounds', 'gibbs', 'experiment', 'rs-lab')

BUNDLED_DATA = {
	'toy': ('toy.csv', 'toy_schema.json'),
	'nested': ('nested.csv', 'nested_schema.json'),
}


@dataclass
class RunConfig:
	command: str
	data: str|None = None
	schema: str|None = None
	likelihood: LikelihoodKind = LikelihoodKind.gaussian
	partition: str = 'pf:fixed'
	tol: float|None = None
	max_iter: int|None = None
	seed: int = 0
	jobs: int|None = None
	out: str = '.'
	dry_run: bool = False
	settings: str|None = None
	options: dict[str, Any] = field(default_factory=dict)

	def __post_init__(self):
		if self.command not in COMMANDS:
			raise SchemaError(f'Unknown command `{self.command}`', command=self.command)
		self.likelihood = LikelihoodKind.parse(self.likelihood)

	def output(self, name: str) -> str:
		return os.path.join(self.out, name)

	def into_json(self) -> dict[str, Any]:
		return {
			'command': self.command,
			'data': self.data,
			'schema': self.schema,
			'likelihood': self.likelihood.value,
			'partition': self.partition,
			'tol': self.tol,
			'max_iter': self.max_iter,
			'seed': self.seed,
			'jobs': self.jobs,
			'out': self.out,
			'options': self.options,
		}

	@property
	def config_hash(self) -> str:
		return core.config_hash(self.into_json())


def bundled_path(name: str) -> str:
	return os.path.join(os.path.dirname(os.path.abspath(__file__)), 'data', name)


def data_paths(data: str, schema: str|None) -> tuple[str, str]:
	"""
	`data` is a CSV path or the name of a bundled dataset. Without an explicit schema `<stem>_schema.json` next to the CSV is used.
	"""
	if data in BUNDLED_DATA and not os.path.exists(data):
		csv, bundled_schema = BUNDLED_DATA[data]
		return bundled_path(csv), schema or bundled_path(bundled_schema)

	if schema is None:
		stem, _ = os.path.splitext(data)
		schema = f'{stem}_schema.json'
		if not os.path.exists(schema):
			raise SchemaError(f'No --schema given and `{schema}` does not exist', data=data)
	return data, schema


def load_data(config: RunConfig) -> MixedModelData:
	if not config.data:
		raise SchemaError(f'`{config.command}` needs --data')
	csv, schema = data_paths(config.data, config.schema)
	return load_long_csv(csv, load_schema(schema), config.likelihood)


def default_prior(data: MixedModelData) -> PriorSpec:
	return PriorSpec.default(data)


def _block(token: str, data: MixedModelData) -> int:
	token = token.strip()
	if token in ('fixed', 'beta', '0'):
		return 0
	if token.isdigit():
		k = int(token)
		if k > data.K:
			raise SchemaError(f'Block {k} does not exist; the model has {data.K} factors', block=k)
		return k
	for k, factor in enumerate(data.factors, start=1):
		if factor.name == token:
			return k
	raise SchemaError(f'Unknown factor `{token}` in partition', factor=token, factors=[f.name for f in data.factors])


def resolve_partition(spec: str, data: MixedModelData, counts: DesignCounts|None = None) -> Partition:
	"""
	"ff", "uf", "pf:fixed", "pf:auto" or an explicit comma separated list of collapsed blocks (indices, factor names or `fixed`).

	pf:auto collapses β and every factor that has another factor nested inside it.
	"""
	spec = spec.strip()
	if spec.lower() in ('ff', 'uf', 'pf', 'pf:fixed', 'pf:auto'):
		spec = spec.lower()
	K = data.K

	if spec == 'ff':
		return Partition.fully_factorized(K)
	if spec == 'uf':
		return Partition.unfactorized(K)
	if spec in ('pf', 'pf:fixed'):
		return Partition.partially_factorized(K)
	if spec == 'pf:auto':
		counts = counts or weighted_counts(None, data, require_intercepts=False)
		outer = {k for k, _ in nested_pairs(counts)}
		return Partition.of({0, *outer}, K)

	tokens = [t for t in spec.removeprefix('pf:').split(',') if t.strip()]
	if not tokens:
		raise SchemaError(f'Empty partition `{spec}`')
	return Partition.of({_block(t, data) for t in tokens}, K)
