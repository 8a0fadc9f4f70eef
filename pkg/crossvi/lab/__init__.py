from __future__ import annotations

from .random_scan import (
	GaussianTarget,
	NormalizedMarginal,
	MeanFieldIterate,
	Trajectory,
	DualityReport,

	normalize,
	rs_cavi,
	v_gap,
	duality_check,
	expected_mean_decay,
)
