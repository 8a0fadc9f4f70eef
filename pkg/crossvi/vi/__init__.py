from __future__ import annotations

from .error import SingularityError, StaleFactorsError, DimensionGuardError
from .surrogate import (
	BlockDesign,
	GaussianSurrogate,
	CollapsedLaw,
	Partition,
	TargetMoments,

	block_designs,
	build_surrogate,
	collapse,
	apply_projector,
	exact_target_moments,
	joint_precision,
	pg_mean,
	check_guard,
)
from .state import Phi, BlockFactors, VariationalState
from .engine import (
	Moments,
	FitResult,
	SweepInfo,

	init_state,
	refresh,
	prepare_block,
	update_random_block,
	apply_lambda,
	extract_lambda_blocks,
	lambda_logdet,
	collapsed_mean,
	collapsed_cov,
	q_mean,
	eta_moments,
	compute_moments,
	update_phi,
	fit,
	export_q_precision,
	marginal_variances,
	variance_components,
	predict_eta,
	sample_q,
)
from .elbo import elbo
from .report import fit_report
