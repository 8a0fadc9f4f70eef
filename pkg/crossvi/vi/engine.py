from __future__ import annotations
from typing import Any

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse

from ..import core
from ..model import DomainError, LikelihoodKind, MixedModelData, PriorSpec, build_design
from ..settings import Settings
from .error import SingularityError, StaleFactorsError
from .state import BlockFactors, Phi, VariationalState
from .surrogate import (
	BlockDesign, Partition,
	apply_projector, block_designs, build_surrogate, cholesky, collapse, joint_precision, logdet,
)
from .elbo import elbo


def init_state(data: MixedModelData, lik: LikelihoodKind, prior: PriorSpec, part: Partition, phi: Phi|None = None) -> VariationalState:
	blocks = block_designs(data)
	return VariationalState(
		data=data,
		lik=lik,
		prior=prior,
		part=part,
		phi=phi.copy() if phi else Phi.initial(data, lik, prior),
		blocks=blocks,
		mu_blocks={k: np.zeros(blocks[k].size) for k in part.uncollapsed},
	)


def refresh(state: VariationalState):
	"""
	Rebuilds π(θ) for the current q(φ) and the collapsed law q(θ_C | θ_U). Every block factor becomes stale.
	"""
	state.revision += 1
	state.surrogate = build_surrogate(state.data, state.lik, state.phi, state.blocks, state.revision)
	state.collapsed_law = collapse(state.surrogate, state.part)
	state.factors = {}


def prepare_block(state: VariationalState, k: int) -> BlockFactors:
	s = state.surrogate
	if s is None:
		raise StaleFactorsError('No surrogate has been built for this state', block=k)

	factors = state.factors.get(k)
	if factors and factors.revision == s.revision:
		return factors

	block = s.blocks[k]
	H = s.gram_blocks[k] + s.T_blocks[k]
	try:
		L = np.linalg.cholesky(H)
	except np.linalg.LinAlgError:
		raise SingularityError(f'W_kᵀW_k + P_k is singular for block {k} ({block.name})', block=k)

	lam = np.linalg.inv(H)
	lam = 0.5 * (lam + np.swapaxes(lam, 1, 2))
	factors = BlockFactors(k=k, revision=s.revision, lambda_empty=lam, logdet_empty=-logdet(L))

	law = state.collapsed_law
	if law:
		B = (law.W.T @ s.W_blocks[k]).tocsr()
		B_lambda = factors.apply_empty(B.toarray().T).T
		S = B @ B_lambda.T
		J = law.A - 0.5 * (S + S.T)
		J_chol = cholesky(J, [k], f'inner matrix P_C + W_Cᵀ(I − W_kΛ_k^∅W_kᵀ)W_C of block {k}')
		factors.B = B
		factors.B_lambda = B_lambda
		factors.J_chol = J_chol
		factors.logdet_J = logdet(J_chol)
		factors.R = scipy.linalg.solve_triangular(J_chol, B_lambda, lower=True)

	state.factors[k] = factors
	return factors


def _factors(state: VariationalState, k: int) -> BlockFactors:
	factors = state.factors.get(k)
	if factors is None or state.surrogate is None or factors.revision != state.surrogate.revision:
		raise StaleFactorsError(f'Block {k} has not been updated since the surrogate was rebuilt', block=k)
	return factors


def apply_lambda(state: VariationalState, k: int, a: np.ndarray) -> np.ndarray:
	"Λ_k a without forming Λ_k"
	factors = _factors(state, k)
	result = factors.apply_empty(a)
	if factors.B_lambda is not None:
		result = result + factors.B_lambda.T @ factors.solve_J(factors.B_lambda @ a)
	return result


def extract_lambda_blocks(state: VariationalState, k: int) -> np.ndarray:
	"the G_k diagonal D_k×D_k blocks of Λ_k"
	factors = _factors(state, k)
	if factors.R is None:
		return factors.lambda_empty.copy()

	R = factors.R.reshape(factors.R.shape[0], factors.G, factors.D)
	return factors.lambda_empty + np.einsum('pgi,pgj->gij', R, R)


def lambda_logdet(state: VariationalState, k: int) -> float:
	"log|Λ_k| = log|Λ_k^∅| + log|W_CᵀW_C + P_C| − log|J_k|"
	factors = _factors(state, k)
	if state.collapsed_law is None:
		return factors.logdet_empty
	return factors.logdet_empty + state.collapsed_law.logdet - factors.logdet_J


def update_random_block(state: VariationalState, k: int) -> np.ndarray:
	"""
	μ_k = Λ_k W_kᵀ M_C (ν − Σ_{ℓ∈U, ℓ≠k} W_ℓ μ_ℓ)
	"""
	s = state.surrogate
	assert s
	prepare_block(state, k)
	r = s.nu - state.fitted(exclude=k)
	v = apply_projector(s, state.part, r, state.collapsed_law)
	state.mu_blocks[k] = apply_lambda(state, k, s.W_blocks[k].T @ v)
	return state.mu_blocks[k]


def collapsed_mean(state: VariationalState) -> np.ndarray:
	"E_q[θ_C] = A⁻¹W_Cᵀ(ν − Σ_{ℓ∈U} W_ℓ μ_ℓ)"
	law = state.collapsed_law
	assert state.surrogate
	if law is None:
		return np.zeros(0)
	return law.solve(law.W.T @ (state.surrogate.nu - state.fitted()))


def collapsed_cov(state: VariationalState) -> np.ndarray:
	"cov_q(θ_C) = A⁻¹ + Σ_{ℓ∈U} (J_ℓ⁻¹ − A⁻¹)"
	law = state.collapsed_law
	if law is None:
		return np.zeros((0, 0))

	identity = np.eye(law.size)
	inverse = law.inverse()
	cov = inverse.copy()
	for l in state.part.uncollapsed:
		cov += _factors(state, l).solve_J(identity) - inverse
	return 0.5 * (cov + cov.T)


def q_mean(state: VariationalState) -> np.ndarray:
	"joint mean of q(θ) in block order"
	assert state.surrogate
	s = state.surrogate
	mean = np.zeros(s.dimension())
	offsets = s.offsets
	for k in state.part.uncollapsed:
		mean[offsets[k]:offsets[k + 1]] = state.mu_blocks[k]
	if state.collapsed_law:
		mean[s.indices(state.part.collapsed)] = collapsed_mean(state)
	return mean


def _row_entries(blocks: list[BlockDesign], chosen: tuple[int, ...]) -> tuple[np.ndarray, np.ndarray]:
	"per row, the positions within the chosen blocks it touches and the design values there"
	offset = 0
	columns, values = [], []
	for k in chosen:
		block = blocks[k]
		columns.append(offset + block.columns())
		values.append(block.slopes)
		offset += block.size
	return np.concatenate(columns, axis=1), np.concatenate(values, axis=1)


@dataclass
class Moments:
	eta_mean: np.ndarray
	eta_variance: np.ndarray
	alpha_second: list[np.ndarray] = field(default_factory=list)
	cov_C: np.ndarray|None = None

	@property
	def eta_second(self) -> np.ndarray:
		return self.eta_mean ** 2 + self.eta_variance


def eta_moments(state: VariationalState, blocks: list[BlockDesign]|None = None, cov_C: np.ndarray|None = None) -> tuple[np.ndarray, np.ndarray]:
	"""
	E[η_i] and var(η_i) under the joint q(θ), using the covariance between U and C blocks through solves only.

	Passing `blocks` evaluates the linear predictor of other rows over the same levels.
	"""
	blocks = blocks or state.blocks
	part = state.part
	n = blocks[0].slopes.shape[0]
	mean = np.zeros(n)
	variance = np.zeros(n)

	for l in part.uncollapsed:
		block = blocks[l]
		mean += block.Z @ state.mu_blocks[l]
		factors = _factors(state, l)
		variance += np.einsum('ni,nij,nj->n', block.slopes, factors.lambda_empty[block.levels], block.slopes)

	law = state.collapsed_law
	if law is None:
		return mean, variance

	C = part.collapsed
	mean += _collapsed_design(blocks, C) @ collapsed_mean(state)

	if cov_C is None:
		cov_C = collapsed_cov(state)
	columns, values = _row_entries(blocks, C)
	variance += np.einsum('ni,nj,nij->n', values, values, cov_C[columns[:, :, None], columns[:, None, :]])

	if part.uncollapsed:
		Z_C = _collapsed_design(blocks, C).toarray().T
		for l in part.uncollapsed:
			factors = _factors(state, l)
			assert factors.R is not None and factors.J_chol is not None
			ZR = blocks[l].Z @ factors.R.T
			LZ = scipy.linalg.solve_triangular(factors.J_chol, Z_C, lower=True)
			variance += np.sum(ZR * ZR, axis=1) - 2.0 * np.einsum('ip,pi->i', ZR, LZ)

	return mean, np.maximum(variance, 0.0)


def _collapsed_design(blocks: list[BlockDesign], C: tuple[int, ...]):
	return scipy.sparse.hstack([blocks[k].Z for k in C], format='csr')


def compute_moments(state: VariationalState) -> Moments:
	cov_C = collapsed_cov(state) if state.collapsed_law else None
	mean, variance = eta_moments(state, cov_C=cov_C)

	s = state.surrogate
	assert s
	alpha_second: list[np.ndarray] = []
	mean_C = collapsed_mean(state) if state.collapsed_law else None
	C_offsets = np.r_[0, np.cumsum([s.sizes[k] for k in state.part.collapsed])]

	for k in range(1, state.data.K + 1):
		block = s.blocks[k]
		if k in state.mu_blocks:
			m = state.mu_blocks[k].reshape(block.G, block.D)
			V = extract_lambda_blocks(state, k)
		else:
			assert mean_C is not None and cov_C is not None
			i = state.part.collapsed.index(k)
			start = C_offsets[i]
			m = mean_C[start:start + block.size].reshape(block.G, block.D)
			index = start + np.arange(block.size).reshape(block.G, block.D)
			V = cov_C[index[:, :, None], index[:, None, :]]
		alpha_second.append(m.T @ m + V.sum(axis=0))

	return Moments(mean, variance, alpha_second, cov_C)


def update_phi(state: VariationalState, moments: Moments|None = None) -> Phi:
	"""
	Optimal q(φ) given the current q(θ). Σ_k is updated before σ², so the residual update sees the new E[Σ_k⁻¹].
	"""
	moments = moments or compute_moments(state)
	data, prior = state.data, state.prior
	phi = state.phi.copy()

	weight = phi.e_inv_sigma2() if state.lik == LikelihoodKind.gaussian else 1.0
	for k, factor in enumerate(data.factors, start=1):
		phi.a[k - 1] = prior.iw_df[k - 1] + factor.levels
		scale = prior.iw_scale[k - 1] + weight * moments.alpha_second[k - 1]
		phi.scale[k - 1] = 0.5 * (scale + scale.T)

	if state.lik == LikelihoodKind.gaussian:
		effects = sum(f.size for f in data.factors)
		residual = float(np.sum((data.y - moments.eta_mean) ** 2 + moments.eta_variance))
		penalty = sum(float(np.trace(phi.e_sigma_inv(k) @ moments.alpha_second[k - 1])) for k in range(1, data.K + 1))
		phi.a_sigma2 = (data.n + effects) / 2.0
		phi.b_sigma2 = 0.5 * residual + 0.5 * penalty
	else:
		phi.b = data.trials.astype(np.float64)
		phi.c = np.sqrt(moments.eta_second)

	return phi


@dataclass
class SweepInfo:
	iteration: int
	elbo: float
	delta: float
	seconds: float


@dataclass
class FitResult:
	state: VariationalState
	elbo_trace: list[float]
	iterations: int
	converged: bool
	sweep_seconds: list[float]

	@property
	def seconds_per_iteration(self) -> float:
		return float(np.mean(self.sweep_seconds)) if self.sweep_seconds else 0.0


def fit(
	data: MixedModelData,
	lik: LikelihoodKind,
	prior: PriorSpec,
	part: Partition,
	tol: float|None = None,
	max_iter: int|None = None,
	update_phi_enabled: bool = True,
	phi: Phi|None = None,
	on_sweep: core.Event[SweepInfo]|None = None,
) -> FitResult:
	"""
	Coordinate ascent: each sweep updates q(φ), rebuilds π(θ) and q(θ_C | θ_U), then every q(θ_k), k ∈ U, in ascending order.

	Stops when the absolute change of the ELBO falls below `tol`. Hitting `max_iter`, or an `on_sweep` listener asking to stop, returns converged=False.
	"""
	tol = Settings.tolerance if tol is None else tol
	max_iter = Settings.max_iter if max_iter is None else max_iter

	state = init_state(data, lik, prior, part, phi)
	refresh(state)
	for k in part.uncollapsed:
		prepare_block(state, k)

	moments = compute_moments(state)
	state.elbo_trace.append(elbo(state, moments))

	sweep_seconds: list[float] = []
	converged = False
	iterations = 0

	for iteration in range(1, max_iter + 1):
		watch = core.stopwatch('sweep')

		if update_phi_enabled:
			state.phi = update_phi(state, moments)
			refresh(state)

		for k in part.uncollapsed:
			update_random_block(state, k)

		moments = compute_moments(state)
		value = elbo(state, moments)
		delta = value - state.elbo_trace[-1]
		state.elbo_trace.append(value)

		sweep_seconds.append(watch.elapsed())
		iterations = iteration

		stop = on_sweep(SweepInfo(iteration, value, delta, sweep_seconds[-1])) if on_sweep else False

		if delta < -1e-6 * max(1.0, abs(value)):
			core.warn(f'ELBO decreased by {-delta:.3e} at sweep {iteration}')

		if abs(delta) < tol:
			converged = True
			break
		if stop:
			core.info(f'fit stopped by a sweep listener at sweep {iteration}')
			break

	core.info(f'{part.family} fit finished after {iterations} sweeps (converged={converged}, elbo={state.elbo_trace[-1]:.6f})')
	return FitResult(state, list(state.elbo_trace), iterations, converged, sweep_seconds)


def export_q_precision(state: VariationalState, guard: int|None = None) -> np.ndarray:
	"""
	Precision of q(θ): the target precision Q with the off-diagonal U blocks of the Schur complement Q_UU − Q_UC Q_CC⁻¹ Q_CU removed.
	"""
	s = state.surrogate
	assert s
	Q = joint_precision(s, guard)
	U, C = state.part.uncollapsed, state.part.collapsed
	iU, iC = s.indices(U), s.indices(C)

	schur = Q[np.ix_(iU, iU)]
	if C and U:
		Q_CC = Q[np.ix_(iC, iC)]
		L = cholesky(Q_CC, list(C), 'W_CᵀW_C + P_C', [s.sizes[k] for k in C])
		schur = schur - Q[np.ix_(iU, iC)] @ scipy.linalg.cho_solve((L, True), Q[np.ix_(iC, iU)])

	off_diagonal = schur.copy()
	start = 0
	for k in U:
		size = s.sizes[k]
		off_diagonal[start:start + size, start:start + size] = 0.0
		start += size

	precision = Q.copy()
	precision[np.ix_(iU, iU)] -= off_diagonal
	return 0.5 * (precision + precision.T)


def marginal_variances(state: VariationalState, moments: Moments|None = None) -> list[np.ndarray]:
	"per block, the marginal q variance of every coordinate"
	s = state.surrogate
	assert s
	cov_C = moments.cov_C if moments and moments.cov_C is not None else collapsed_cov(state)
	variances: list[np.ndarray] = []
	start = 0
	C_start = {}
	for k in state.part.collapsed:
		C_start[k] = start
		start += s.sizes[k]

	for k in range(len(s.blocks)):
		if k in state.mu_blocks:
			variances.append(np.diagonal(extract_lambda_blocks(state, k), axis1=1, axis2=2).reshape(-1))
		else:
			index = C_start[k] + np.arange(s.sizes[k])
			variances.append(np.diagonal(cov_C)[index])
	return variances


def variance_components(state: VariationalState) -> dict[str, Any]:
	"""
	Posterior means of the variance parameters under q(φ). In the Gaussian model the effects have covariance σ²Σ_k.
	"""
	components: dict[str, Any] = {}
	for k, factor in enumerate(state.data.factors, start=1):
		a, scale = state.phi.a[k - 1], state.phi.scale[k - 1]
		D = factor.effect_dim
		components[factor.name] = scale / (a - D - 1) if a > D + 1 else None

	if state.lik == LikelihoodKind.gaussian:
		a, b = state.phi.a_sigma2, state.phi.b_sigma2
		assert a is not None and b is not None
		components['sigma2'] = b / (a - 1.0) if a > 1.0 else None

	return components


def predict_eta(state: VariationalState, X: np.ndarray, memberships: list[np.ndarray], slope_values: list[np.ndarray]|None = None) -> tuple[np.ndarray, np.ndarray]:
	"""
	E[η] and var(η) for new rows. Memberships index training levels (1 based); a level without training observations raises DomainError.
	"""
	data = state.data
	X = np.atleast_2d(np.asarray(X, dtype=np.float64))
	n = X.shape[0]
	if X.shape[1] != data.X.shape[1]:
		raise DomainError(f'Expected {data.X.shape[1]} fixed-effect columns, got {X.shape[1]}')
	if len(memberships) != data.K:
		raise DomainError(f'Expected memberships for {data.K} factors, got {len(memberships)}')

	blocks = [BlockDesign('fixed', np.zeros(n, dtype=np.int64), X, 1, X.shape[1], scipy.sparse.csr_matrix(X))]
	for k, factor in enumerate(data.factors, start=1):
		m = np.asarray(memberships[k - 1], dtype=np.int64)
		seen = np.bincount(data.levels(k), minlength=factor.levels) > 0
		if m.shape != (n,) or np.any(m < 1) or np.any(m > factor.levels) or not np.all(seen[np.clip(m, 1, factor.levels) - 1]):
			raise DomainError(f'Factor `{factor.name}` has levels that were not seen in training; prediction for unseen levels is not supported', factor=factor.name)
		w = np.ones((n, 1)) if slope_values is None else np.asarray(slope_values[k - 1], dtype=np.float64).reshape(n, -1)
		if w.shape[1] != factor.effect_dim:
			raise DomainError(f'Factor `{factor.name}` needs {factor.effect_dim} slope values per row', factor=factor.name)
		blocks.append(BlockDesign(factor.name, m - 1, w, factor.levels, factor.effect_dim, build_design(m - 1, w, factor.levels)))

	return eta_moments(state, blocks)


def sample_q(state: VariationalState, size: int, seed: int = 0, guard: int|None = None) -> np.ndarray:
	"size×p draws from q(θ)"
	precision = export_q_precision(state, guard)
	L = scipy.linalg.cholesky(precision, lower=True)
	rng = core.rng(seed)
	z = rng.standard_normal((precision.shape[0], size))
	return q_mean(state)[None, :] + scipy.linalg.solve_triangular(L.T, z, lower=False).T
