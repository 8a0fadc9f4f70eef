from __future__ import annotations

from .error import UnsupportedRestrictionError, PreconditionError
from .bounds import (
	DesignCounts,
	BoundsReport,

	weighted_counts,
	is_balanced,
	is_binary,
	ff_bound,
	lambda_aux,
	pf_uqf_balanced,
	rg_bound,
	nested_pairs,
	bounds_report,
)
