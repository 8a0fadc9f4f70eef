from __future__ import annotations
from typing import Any, Iterable

from dataclasses import dataclass, field
import enum

import numpy as np
import scipy.linalg

from ..import core
from .error import DomainError, ParseError, RankError, SchemaError


class LikelihoodKind(enum.Enum):
	gaussian = 'gaussian'
	binomial = 'binomial'

	@staticmethod
	def parse(value: str|LikelihoodKind) -> LikelihoodKind:
		if isinstance(value, LikelihoodKind):
			return value
		try:
			return LikelihoodKind(value.lower())
		except ValueError:
			raise SchemaError(f'Unknown likelihood `{value}`, expected one of gaussian, binomial', likelihood=value)


@dataclass
class FactorSpec:
	name: str
	levels: int
	effect_dim: int = 1
	slope_columns: list[str] = field(default_factory=lambda: ['1'])
	level_labels: list[str]|None = None

	def __post_init__(self):
		if self.levels < 1:
			raise SchemaError(f'Factor `{self.name}` must have at least one level', factor=self.name)
		if self.effect_dim < 1:
			raise SchemaError(f'Factor `{self.name}` must have a positive effect dimension', factor=self.name)
		if len(self.slope_columns) != self.effect_dim:
			raise SchemaError(f'Factor `{self.name}` declares {len(self.slope_columns)} slope columns for effect dimension {self.effect_dim}', factor=self.name)

	@property
	def size(self) -> int:
		return self.levels * self.effect_dim

	def into_json(self) -> dict[str, Any]:
		return {
			'name': self.name,
			'levels': self.levels,
			'effect_dim': self.effect_dim,
			'slope_columns': self.slope_columns,
			'level_labels': self.level_labels,
		}

	@staticmethod
	def from_json(json: dict[str, Any]) -> FactorSpec:
		return FactorSpec(
			name=json['name'],
			levels=json['levels'],
			effect_dim=json.get('effect_dim', 1),
			slope_columns=json.get('slope_columns') or ['1'],
			level_labels=json.get('level_labels'),
		)


@dataclass
class FactorSchema:
	name: str
	slopes: list[str] = field(default_factory=list)

	@property
	def slope_columns(self) -> list[str]:
		if self.slopes and self.slopes[0] == '1':
			return list(self.slopes)
		return ['1', *self.slopes]


@dataclass
class ModelSchema:
	"""
	Column roles of a long-format table.

	{"response": "y", "trials": null, "fixed": ["x"], "factors": [{"name": "grp", "slopes": ["x"]}], "intercept": true}
	"""
	response: str
	factors: list[FactorSchema]
	fixed: list[str] = field(default_factory=list)
	trials: str|None = None
	intercept: bool = True

	@staticmethod
	def from_json(json: dict[str, Any]) -> ModelSchema:
		if not isinstance(json, dict) or 'response' not in json:
			raise SchemaError('Schema must name a `response` column')

		factors: list[FactorSchema] = []
		for factor in json.get('factors') or []:
			if isinstance(factor, str):
				factors.append(FactorSchema(factor))
			elif 'name' in factor:
				factors.append(FactorSchema(factor['name'], list(factor.get('slopes') or [])))
			else:
				raise SchemaError('Every factor in the schema needs a `name`')

		return ModelSchema(
			response=json['response'],
			factors=factors,
			fixed=list(json.get('fixed') or []),
			trials=json.get('trials'),
			intercept=json.get('intercept', True),
		)

	def into_json(self) -> dict[str, Any]:
		return {
			'response': self.response,
			'trials': self.trials,
			'fixed': self.fixed,
			'factors': [{'name': f.name, 'slopes': f.slopes} for f in self.factors],
			'intercept': self.intercept,
		}

	def columns(self) -> list[str]:
		columns = [self.response, *self.fixed]
		if self.trials:
			columns.append(self.trials)
		for factor in self.factors:
			columns.append(factor.name)
			columns.extend(s for s in factor.slope_columns if s != '1')
		return list(dict.fromkeys(columns))


@dataclass
class MixedModelData:
	y: np.ndarray
	X: np.ndarray
	factors: list[FactorSpec]
	memberships: list[np.ndarray]
	slope_values: list[np.ndarray]
	trials: np.ndarray
	fixed_columns: list[str] = field(default_factory=list)
	metadata: dict[str, Any] = field(default_factory=dict)

	@property
	def n(self) -> int:
		return int(self.y.shape[0])

	@property
	def K(self) -> int:
		return len(self.factors)

	def levels(self, k: int) -> np.ndarray:
		"zero based level index of every observation for factor k (1..K)"
		return self.memberships[k - 1] - 1

	@staticmethod
	def from_arrays(
		y: Iterable[float],
		memberships: Iterable[Iterable[int]],
		X: np.ndarray|None = None,
		levels: Iterable[int]|None = None,
		slope_values: Iterable[np.ndarray]|None = None,
		trials: Iterable[int]|None = None,
		names: Iterable[str]|None = None,
		intercept: bool = True,
	) -> MixedModelData:
		"""
		Builds a model from in-memory arrays. Memberships are 1 based; `levels` defaults to the largest index observed. Unless `X` is given the fixed design is a column of ones.
		"""
		y = np.asarray(y, dtype=np.float64)
		n = y.shape[0]
		memberships = [np.asarray(m, dtype=np.int64) for m in memberships]
		names = list(names) if names is not None else [f'f{k+1}' for k in range(len(memberships))]
		levels = list(levels) if levels is not None else [int(m.max()) if m.size else 1 for m in memberships]

		if slope_values is None:
			slope_values = [np.ones((n, 1)) for _ in memberships]
		slope_values = [np.asarray(w, dtype=np.float64).reshape(n, -1) for w in slope_values]

		if X is None:
			X = np.ones((n, 1)) if intercept else np.zeros((n, 0))
		else:
			X = np.asarray(X, dtype=np.float64).reshape(n, -1)
			if intercept and not np.all(X[:, 0] == 1.0):
				X = np.column_stack([np.ones(n), X])

		fixed_columns = [f'x{j}' for j in range(X.shape[1])]
		if intercept and fixed_columns:
			fixed_columns[0] = '(intercept)'

		factors = []
		for name, G, w in zip(names, levels, slope_values):
			D = w.shape[1]
			slopes = ['1'] + [f'{name}.w{j}' for j in range(1, D)]
			factors.append(FactorSpec(name=name, levels=G, effect_dim=D, slope_columns=slopes))

		return MixedModelData(
			y=y,
			X=X,
			factors=factors,
			memberships=memberships,
			slope_values=slope_values,
			trials=np.ones(n, dtype=np.int64) if trials is None else np.asarray(trials, dtype=np.int64),
			fixed_columns=fixed_columns,
		)

	def into_json(self) -> dict[str, Any]:
		return {
			'n': self.n,
			'fixed_columns': self.fixed_columns,
			'factors': self.factors,
		}


@dataclass
class PriorSpec:
	iw_df: list[float]
	iw_scale: list[np.ndarray]

	@staticmethod
	def default(data: MixedModelData) -> PriorSpec:
		"""
		IW(D_k + 1, I) on every Σ_k. For random intercepts this is an InverseGamma(1, 0.5) on the variance.
		"""
		return PriorSpec(
			iw_df=[float(f.effect_dim + 1) for f in data.factors],
			iw_scale=[np.eye(f.effect_dim) for f in data.factors],
		)

	def into_json(self) -> dict[str, Any]:
		return {
			'iw_df': self.iw_df,
			'iw_scale': self.iw_scale,
		}

	@staticmethod
	def from_json(json: dict[str, Any]) -> PriorSpec:
		return PriorSpec(
			iw_df=[float(a) for a in json['iw_df']],
			iw_scale=[np.atleast_2d(np.asarray(s, dtype=np.float64)) for s in json['iw_scale']],
		)


@dataclass
class Issue:
	code: str
	message: str
	details: dict[str, Any] = field(default_factory=dict)

	def into_json(self) -> dict[str, Any]:
		return {'code': self.code, 'message': self.message, **self.details}


@dataclass
class ValidationReport:
	errors: list[Issue] = field(default_factory=list)
	warnings: list[Issue] = field(default_factory=list)

	@property
	def ok(self) -> bool:
		return not self.errors

	def __bool__(self) -> bool:
		return bool(self.errors or self.warnings)

	def error(self, code: str, message: str, **details: Any):
		self.errors.append(Issue(code, message, details))

	def warn(self, code: str, message: str, **details: Any):
		self.warnings.append(Issue(code, message, details))

	def raise_if_fatal(self):
		for warning in self.warnings:
			core.warn(warning.message)

		if not self.errors:
			return

		issue = self.errors[0]
		if issue.code == 'rank':
			raise RankError(issue.message, **issue.details)
		if issue.code == 'domain':
			raise DomainError(issue.message, **issue.details)
		if issue.code == 'parse':
			raise ParseError(issue.message, **issue.details)
		raise SchemaError(issue.message, **issue.details)

	def into_json(self) -> dict[str, Any]:
		return {
			'errors': self.errors,
			'warnings': self.warnings,
		}


def validate_model(data: MixedModelData, prior: PriorSpec|None, lik: LikelihoodKind) -> ValidationReport:
	report = ValidationReport()
	n = data.n

	if data.y.ndim != 1:
		report.error('schema', 'Response must be a vector')
	if not np.all(np.isfinite(data.y)):
		report.error('parse', 'Response contains missing or non-finite values')
	if data.X.shape[0] != n:
		report.error('schema', f'Fixed-effect design has {data.X.shape[0]} rows, expected {n}')
	if len(data.memberships) != data.K or len(data.slope_values) != data.K:
		report.error('schema', 'Every factor needs a membership vector and slope values')
		return report

	for k, factor in enumerate(data.factors):
		m = data.memberships[k]
		w = data.slope_values[k]
		if m.shape != (n,):
			report.error('schema', f'Factor `{factor.name}` has {m.shape[0]} memberships, expected {n}', factor=factor.name)
			continue
		if m.size and (m.min() < 1 or m.max() > factor.levels):
			report.error('domain', f'Factor `{factor.name}` has membership indices outside 1..{factor.levels}', factor=factor.name)
			continue
		if w.shape != (n, factor.effect_dim):
			report.error('schema', f'Factor `{factor.name}` slope values have shape {w.shape}, expected {(n, factor.effect_dim)}', factor=factor.name)
		if not np.all(np.isfinite(w)):
			report.error('parse', f'Factor `{factor.name}` slope values contain missing or non-finite values', factor=factor.name)

		observed = np.bincount(m - 1, minlength=factor.levels)
		empty = np.flatnonzero(observed == 0)
		if empty.size:
			report.warn('empty_level', f'Factor `{factor.name}` has {empty.size} levels with no observations', factor=factor.name, levels=(empty + 1).tolist())

	if lik == LikelihoodKind.binomial:
		if data.trials.shape != (n,) or np.any(data.trials < 1):
			report.error('domain', 'Binomial trials must be positive integers, one per observation')
		elif np.any(data.y < 0) or np.any(data.y > data.trials) or np.any(data.y != np.round(data.y)):
			bad = np.flatnonzero((data.y < 0) | (data.y > data.trials) | (data.y != np.round(data.y)))
			report.error('domain', f'Binomial responses must be integers in [0, n_i]; {bad.size} rows violate this', rows=bad[:10].tolist())

	if prior is not None:
		if len(prior.iw_df) != data.K or len(prior.iw_scale) != data.K:
			report.error('schema', 'Prior must give iw_df and iw_scale for every factor')
		else:
			for factor, a, scale in zip(data.factors, prior.iw_df, prior.iw_scale):
				D = factor.effect_dim
				if not a > D - 1:
					report.error('domain', f'Inverse Wishart degrees of freedom for `{factor.name}` must exceed {D - 1}', factor=factor.name)
				if scale.shape != (D, D) or not np.allclose(scale, scale.T):
					report.error('domain', f'Inverse Wishart scale for `{factor.name}` must be a symmetric {D}x{D} matrix', factor=factor.name)
					continue
				try:
					scipy.linalg.cholesky(scale)
				except np.linalg.LinAlgError:
					report.error('domain', f'Inverse Wishart scale for `{factor.name}` is not positive definite', factor=factor.name)

	if data.X.shape[0] == n and data.X.shape[1]:
		rank = int(np.linalg.matrix_rank(data.X))
		if rank < data.X.shape[1]:
			report.error('rank', f'Fixed-effect design has rank {rank} with {data.X.shape[1]} columns', rank=rank, columns=data.X.shape[1])

	return report
