from __future__ import annotations
from typing import Any, TYPE_CHECKING

from ..model import param_layout
from .engine import compute_moments, marginal_variances, q_mean, variance_components

if TYPE_CHECKING:
	from .engine import FitResult


def fit_report(result: FitResult) -> dict[str, Any]:
	state = result.state
	assert state.surrogate
	s = state.surrogate

	mean = q_mean(state)
	variances = marginal_variances(state, compute_moments(state))
	layout = param_layout(state.data)

	blocks = []
	for k, block in enumerate(s.blocks):
		blocks.append({
			'block': k,
			'name': block.name,
			'levels': block.G,
			'effect_dim': block.D,
			'collapsed': k in state.part.collapsed,
			'offset': layout.slice(k).start,
			'mean': mean[layout.slice(k)],
			'variance': variances[k],
		})

	return {
		'likelihood': state.lik,
		'partition': state.part,
		'iterations': result.iterations,
		'converged': result.converged,
		'elbo': result.elbo_trace[-1],
		'elbo_trace': result.elbo_trace,
		'seconds_per_iteration': result.seconds_per_iteration,
		'blocks': blocks,
		'phi': state.phi,
		'variance_components': variance_components(state),
	}
