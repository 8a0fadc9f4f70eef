from __future__ import annotations
from typing import Any

import numpy as np
import pandas as pd

from ..import core
from .data import FactorSpec, LikelihoodKind, MixedModelData, ModelSchema, PriorSpec, validate_model
from .error import ParseError, SchemaError


def load_schema(path: str) -> ModelSchema:
	try:
		with open(path, 'r') as file:
			return ModelSchema.from_json(core.json_decode(file.read()))
	except FileNotFoundError:
		raise SchemaError(f'Schema file `{path}` does not exist', path=path)
	except ValueError as e:
		raise SchemaError(f'Schema file `{path}` is not valid JSON: {e}', path=path)


def _numeric(frame: pd.DataFrame, column: str, role: str) -> np.ndarray:
	try:
		return pd.to_numeric(frame[column], errors='raise').to_numpy(dtype=np.float64)
	except (ValueError, TypeError):
		raise ParseError(f'Column `{column}` ({role}) is not numeric', column=column)


def load_long_csv(path: str, schema: ModelSchema|dict[str, Any], likelihood: LikelihoodKind|str = LikelihoodKind.gaussian, prior: PriorSpec|None = None) -> MixedModelData:
	"""
	Reads a long-format table, one observation per row.

	Factor levels are the sorted distinct observed values mapped to 1..G_k. An intercept column is prepended to the fixed effects unless the schema opts out.
	"""
	if isinstance(schema, dict):
		schema = ModelSchema.from_json(schema)
	likelihood = LikelihoodKind.parse(likelihood)

	try:
		frame = pd.read_csv(path)
	except FileNotFoundError:
		raise SchemaError(f'Data file `{path}` does not exist', path=path)

	missing = [c for c in schema.columns() if c not in frame.columns]
	if missing:
		raise SchemaError(f'Missing columns: {", ".join(missing)}', columns=missing)

	n = len(frame)
	y = _numeric(frame, schema.response, 'response')
	if np.any(np.isnan(y)):
		raise ParseError(f'Column `{schema.response}` (response) has missing values', column=schema.response)

	if schema.trials:
		trials = _numeric(frame, schema.trials, 'trials')
		if np.any(trials != np.round(trials)):
			raise ParseError(f'Column `{schema.trials}` (trials) must hold integers', column=schema.trials)
		trials = trials.astype(np.int64)
	else:
		trials = np.ones(n, dtype=np.int64)

	fixed_columns = ['(intercept)'] if schema.intercept else []
	columns = [np.ones(n)] if schema.intercept else []
	for column in schema.fixed:
		columns.append(_numeric(frame, column, 'fixed effect'))
		fixed_columns.append(column)
	X = np.column_stack(columns) if columns else np.zeros((n, 0))

	factors: list[FactorSpec] = []
	memberships: list[np.ndarray] = []
	slope_values: list[np.ndarray] = []
	for factor in schema.factors:
		codes, uniques = pd.factorize(frame[factor.name], sort=True)
		if np.any(codes < 0):
			raise ParseError(f'Column `{factor.name}` (factor) has missing values', column=factor.name)

		slopes = factor.slope_columns
		w = np.column_stack([np.ones(n) if s == '1' else _numeric(frame, s, 'slope') for s in slopes])

		factors.append(FactorSpec(
			name=factor.name,
			levels=len(uniques),
			effect_dim=len(slopes),
			slope_columns=slopes,
			level_labels=[str(u) for u in uniques],
		))
		memberships.append(codes.astype(np.int64) + 1)
		slope_values.append(w)

	data = MixedModelData(
		y=y,
		X=X,
		factors=factors,
		memberships=memberships,
		slope_values=slope_values,
		trials=trials,
		fixed_columns=fixed_columns,
	)

	core.info(f'loaded {n} rows from {path} with factors', ', '.join(f'{f.name}({f.levels})' for f in factors))
	validate_model(data, prior or PriorSpec.default(data), likelihood).raise_if_fatal()
	return data
