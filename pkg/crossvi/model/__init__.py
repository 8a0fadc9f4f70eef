from __future__ import annotations

from .error import SchemaError, ParseError, DomainError, RankError
from .data import FactorSpec, FactorSchema, ModelSchema, MixedModelData, PriorSpec, LikelihoodKind, Issue, ValidationReport, validate_model
from .loader import load_long_csv, load_schema
from .design import build_designs, build_design, memberships_from_design, ParamLayout, param_layout
