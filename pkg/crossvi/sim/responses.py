from __future__ import annotations
from typing import Any

import numpy as np
import scipy.special
import scipy.stats

from ..import core
from ..model import LikelihoodKind, MixedModelData, PriorSpec
from .designs import Design


def simulate_responses(
	design: Design,
	lik: LikelihoodKind|str,
	rng_seed: int,
	variances: list[float]|None = None,
	intercept: float = 0.0,
	sigma: float = 1.0,
	prior: PriorSpec|None = None,
) -> MixedModelData:
	"""
	Draws the variance of every factor from the prior, the effects from their normals and the responses from the model.

	`variances` fixes the factor variances instead of drawing them. Gaussian effects are scaled by σ², binomial rows use one trial.
	"""
	lik = LikelihoodKind.parse(lik)
	rng = core.rng(rng_seed)
	n = design.n

	names = [f'f{k+1}' for k in range(len(design.levels))]
	shell = MixedModelData.from_arrays(np.zeros(n), design.memberships, levels=design.levels, names=names)
	prior = prior or PriorSpec.default(shell)

	if variances is None:
		draws = []
		for df, scale in zip(prior.iw_df, prior.iw_scale):
			draws.append(float(np.squeeze(scipy.stats.invwishart.rvs(df=df, scale=scale, random_state=rng))))
		variances = draws

	scale = sigma ** 2 if lik == LikelihoodKind.gaussian else 1.0
	effects: list[np.ndarray] = []
	eta = np.full(n, float(intercept))
	for G, variance, membership in zip(design.levels, variances, design.memberships):
		alpha = rng.standard_normal(G) * np.sqrt(scale * variance)
		effects.append(alpha)
		eta += alpha[membership - 1]

	if lik == LikelihoodKind.gaussian:
		y = eta + sigma * rng.standard_normal(n)
	else:
		y = rng.binomial(1, scipy.special.expit(eta)).astype(np.float64)

	data = MixedModelData.from_arrays(y, design.memberships, levels=design.levels, names=names)
	data.metadata = {
		'design': design.into_json(),
		'likelihood': lik.value,
		'seed': int(rng_seed),
		'truth': {
			'intercept': intercept,
			'sigma': sigma if lik == LikelihoodKind.gaussian else None,
			'variances': list(variances),
			'effects': effects,
		},
	}
	return data


def truth(data: MixedModelData) -> dict[str, Any]:
	return data.metadata.get('truth', {})
