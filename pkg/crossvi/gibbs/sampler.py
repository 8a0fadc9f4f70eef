from __future__ import annotations
from typing import Any

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.stats

from ..import core
from ..metrics import SampleSizeError
from ..model import MixedModelData, PriorSpec
from ..settings import Settings
from ..vi import SingularityError, block_designs, check_guard


@dataclass
class FixedVariances:
	"""
	Holds (σ², Σ_k) fixed; the chain then draws θ independently from its exact conditional.
	"""
	sigma2: float
	Sigma: list[np.ndarray]


@dataclass
class GibbsDraws:
	theta_draws: np.ndarray
	sigma2_draws: np.ndarray
	sigma_k_draws: list[np.ndarray]
	seed: int
	burn_in: int
	thin: int
	names: list[str] = field(default_factory=list)

	@property
	def size(self) -> int:
		return int(self.theta_draws.shape[0])

	def into_json(self) -> dict[str, Any]:
		return {
			'rows': self.theta_draws.shape[0],
			'cols': self.theta_draws.shape[1],
			'seed': self.seed,
			'burn_in': self.burn_in,
			'thin': self.thin,
			'names': self.names,
		}


def parameter_names(data: MixedModelData) -> list[str]:
	names = list(data.fixed_columns) or [f'beta{j}' for j in range(data.X.shape[1])]
	for factor in data.factors:
		labels = factor.level_labels or [str(g + 1) for g in range(factor.levels)]
		for label in labels:
			for slope in factor.slope_columns:
				names.append(f'{factor.name}[{label}]' if slope == '1' else f'{factor.name}[{label}]:{slope}')
	return names


def _penalty(data: MixedModelData, Sigma: list[np.ndarray], p0: int) -> scipy.sparse.csr_matrix:
	parts = [scipy.sparse.csr_matrix((p0, p0))]
	for factor, S in zip(data.factors, Sigma):
		parts.append(scipy.sparse.kron(scipy.sparse.identity(factor.levels), np.linalg.inv(S)))
	return scipy.sparse.block_diag(parts, format='csr')


def gibbs_gaussian(
	data: MixedModelData,
	prior: PriorSpec,
	iters: int|None = None,
	burn_in: int|None = None,
	thin: int|None = None,
	rng_seed: int = 0,
	fixed: FixedVariances|None = None,
	init_sigma2: float|None = None,
	init_Sigma: list[np.ndarray]|None = None,
	guard: int|None = None,
	log: core.Logger = core.stdio,
) -> GibbsDraws:
	"""
	Blocked Gibbs sampler for the Gaussian model with effects scaled by σ²: θ jointly from its Gaussian conditional, σ² from an inverse gamma and every Σ_k from an inverse Wishart.
	"""
	iters = Settings.gibbs_iters if iters is None else iters
	burn_in = Settings.gibbs_burn_in if burn_in is None else burn_in
	thin = Settings.gibbs_thin if thin is None else thin

	blocks = block_designs(data)
	Z = scipy.sparse.hstack([b.Z for b in blocks], format='csr')
	p0 = data.X.shape[1]
	p = Z.shape[1]
	check_guard(p, guard)

	rng = core.rng(rng_seed)
	ZtZ = (Z.T @ Z).toarray()
	Zty = Z.T @ data.y
	effects = sum(f.size for f in data.factors)

	if fixed:
		sigma2 = fixed.sigma2
		Sigma = [np.atleast_2d(S).astype(np.float64) for S in fixed.Sigma]
	else:
		sigma2 = init_sigma2 if init_sigma2 is not None else float(np.var(data.y)) or 1.0
		Sigma = init_Sigma or [s / a for s, a in zip(prior.iw_scale, prior.iw_df)]

	kept = iters // thin
	theta_draws = np.zeros((kept, p))
	sigma2_draws = np.zeros(kept)
	sigma_k_draws = [np.zeros((kept, f.effect_dim, f.effect_dim)) for f in data.factors]

	offsets = np.r_[0, np.cumsum([b.size for b in blocks])]
	total = burn_in + iters
	saved = 0

	for iteration in range(total):
		precision = ZtZ + _penalty(data, Sigma, p0).toarray()
		try:
			L = scipy.linalg.cholesky(precision, lower=True)
		except np.linalg.LinAlgError:
			raise SingularityError('Conditional precision of θ is not positive definite', iteration=iteration)

		mean = scipy.linalg.cho_solve((L, True), Zty)
		theta = mean + np.sqrt(sigma2) * scipy.linalg.solve_triangular(L.T, rng.standard_normal(p), lower=False)

		alpha_outer: list[np.ndarray] = []
		quadratic = 0.0
		for k, factor in enumerate(data.factors, start=1):
			alpha = theta[offsets[k]:offsets[k + 1]].reshape(factor.levels, factor.effect_dim)
			outer = alpha.T @ alpha
			alpha_outer.append(outer)
			quadratic += float(np.trace(np.linalg.solve(Sigma[k - 1], outer)))

		if not fixed:
			residual = data.y - Z @ theta
			shape = 0.5 * (data.n + effects)
			rate = 0.5 * (float(residual @ residual) + quadratic)
			sigma2 = rate / rng.gamma(shape)

			for k, factor in enumerate(data.factors, start=1):
				scale = prior.iw_scale[k - 1] + alpha_outer[k - 1] / sigma2
				draw = scipy.stats.invwishart.rvs(df=prior.iw_df[k - 1] + factor.levels, scale=0.5 * (scale + scale.T), random_state=rng)
				Sigma[k - 1] = np.atleast_2d(draw)

		if iteration >= burn_in and (iteration - burn_in) % thin == 0 and saved < kept:
			theta_draws[saved] = theta
			sigma2_draws[saved] = sigma2
			for k in range(data.K):
				sigma_k_draws[k][saved] = Sigma[k]
			saved += 1

		if iteration and iteration % 5000 == 0:
			log.info(f'gibbs: {iteration}/{total} iterations')

	return GibbsDraws(theta_draws, sigma2_draws, sigma_k_draws, rng_seed, burn_in, thin, parameter_names(data))


def posterior_cov_estimate(draws: GibbsDraws|np.ndarray) -> np.ndarray:
	"unbiased sample covariance of the θ draws"
	theta = draws.theta_draws if isinstance(draws, GibbsDraws) else np.asarray(draws)
	S, p = theta.shape
	if S < p + 2:
		raise SampleSizeError(f'{S} draws are too few to estimate a {p}-dimensional covariance', samples=S, required=p + 2)

	constant = np.flatnonzero(np.ptp(theta, axis=0) == 0)
	if constant.size:
		core.warn(f'{constant.size} parameters have constant draws; the covariance estimate is rank deficient')

	return np.atleast_2d(np.cov(theta, rowvar=False))
