from __future__ import annotations
from typing import Any, Iterable

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse

from ..model import LikelihoodKind, MixedModelData, DomainError, build_design
from ..settings import Settings
from .error import DimensionGuardError, SingularityError


@dataclass
class BlockDesign:
	"""
	One parameter block: block 0 is β (one level holding every row), block k the G_k levels of factor k.
	"""
	name: str
	levels: np.ndarray
	slopes: np.ndarray
	G: int
	D: int
	Z: scipy.sparse.csr_matrix

	@property
	def size(self) -> int:
		return self.G * self.D

	def columns(self) -> np.ndarray:
		"n×D matrix of the columns touched by each row"
		return self.levels[:, None] * self.D + np.arange(self.D)[None, :]


def block_designs(data: MixedModelData) -> list[BlockDesign]:
	n = data.n
	X = data.X
	blocks = [BlockDesign('fixed', np.zeros(n, dtype=np.int64), X, 1, X.shape[1], scipy.sparse.csr_matrix(X))]
	for k, factor in enumerate(data.factors, start=1):
		levels = data.levels(k)
		slopes = data.slope_values[k - 1]
		blocks.append(BlockDesign(factor.name, levels, slopes, factor.levels, factor.effect_dim, build_design(levels, slopes, factor.levels)))
	return blocks


@dataclass(frozen=True)
class Partition:
	collapsed: tuple[int, ...]
	uncollapsed: tuple[int, ...]

	@staticmethod
	def of(collapsed: Iterable[int], K: int) -> Partition:
		C = tuple(sorted(set(int(k) for k in collapsed)))
		for k in C:
			if k < 0 or k > K:
				raise DomainError(f'Block {k} is not one of 0..{K}', block=k)
		U = tuple(k for k in range(K + 1) if k not in C)
		return Partition(C, U)

	@staticmethod
	def fully_factorized(K: int) -> Partition:
		return Partition.of((), K)

	@staticmethod
	def partially_factorized(K: int) -> Partition:
		return Partition.of((0,), K)

	@staticmethod
	def unfactorized(K: int) -> Partition:
		return Partition.of(range(K + 1), K)

	@property
	def K(self) -> int:
		return len(self.collapsed) + len(self.uncollapsed) - 1

	@property
	def family(self) -> str:
		if not self.collapsed:
			return 'ff'
		if not self.uncollapsed:
			return 'uf'
		return 'pf'

	def into_json(self) -> dict[str, Any]:
		return {'collapsed': list(self.collapsed), 'uncollapsed': list(self.uncollapsed), 'family': self.family}


def pg_mean(b: np.ndarray, c: np.ndarray) -> np.ndarray:
	"E[ω] for ω ~ PG(b, c); c = 0 is the removable singularity b/4"
	b = np.asarray(b, dtype=np.float64)
	c = np.abs(np.asarray(c, dtype=np.float64))
	small = c < 1e-8
	safe = np.where(small, 1.0, c)
	return np.where(small, b / 4.0, b / (2.0 * safe) * np.tanh(safe / 2.0))


@dataclass
class GaussianSurrogate:
	nu: np.ndarray
	d_diag: np.ndarray
	blocks: list[BlockDesign]
	W_blocks: list[scipy.sparse.csr_matrix]
	T_blocks: list[np.ndarray]
	gram_blocks: list[np.ndarray] = field(repr=False)
	revision: int = 0

	@property
	def n(self) -> int:
		return int(self.nu.shape[0])

	@property
	def sizes(self) -> list[int]:
		return [b.size for b in self.blocks]

	@property
	def offsets(self) -> np.ndarray:
		return np.r_[0, np.cumsum(self.sizes)]

	@property
	def P_blocks(self) -> list[scipy.sparse.bsr_matrix]:
		return [self.penalty(k) for k in range(len(self.blocks))]

	def penalty(self, k: int) -> scipy.sparse.bsr_matrix:
		"P_k = I_{G_k} ⊗ T_k, identically zero for k = 0"
		b = self.blocks[k]
		data = np.broadcast_to(self.T_blocks[k], (b.G, b.D, b.D)).copy()
		return scipy.sparse.bsr_matrix((data, np.arange(b.G), np.arange(b.G + 1)), shape=(b.size, b.size))

	def W(self, blocks: Iterable[int]) -> scipy.sparse.csr_matrix:
		blocks = list(blocks)
		if not blocks:
			return scipy.sparse.csr_matrix((self.n, 0))
		return scipy.sparse.hstack([self.W_blocks[k] for k in blocks], format='csr')

	def P(self, blocks: Iterable[int]) -> scipy.sparse.csr_matrix:
		blocks = list(blocks)
		if not blocks:
			return scipy.sparse.csr_matrix((0, 0))
		return scipy.sparse.block_diag([self.penalty(k) for k in blocks], format='csr')

	def dimension(self, blocks: Iterable[int]|None = None) -> int:
		if blocks is None:
			return int(sum(self.sizes))
		return int(sum(self.sizes[k] for k in blocks))

	def indices(self, blocks: Iterable[int]) -> np.ndarray:
		offsets = self.offsets
		parts = [np.arange(offsets[k], offsets[k + 1]) for k in blocks]
		return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)


def _level_gram(levels: np.ndarray, scaled: np.ndarray, G: int) -> np.ndarray:
	D = scaled.shape[1]
	gram = np.zeros((G, D, D))
	np.add.at(gram, levels, np.einsum('ni,nj->nij', scaled, scaled))
	return gram


def build_surrogate(data: MixedModelData, lik: LikelihoodKind, q_phi: Any, blocks: list[BlockDesign]|None = None, revision: int = 0) -> GaussianSurrogate:
	"""
	π(θ) ∝ exp(E_q(φ) log p(y, θ, φ)) written as N-form ‖ν − Σ_k W_k θ_k‖² + Σ_k θ_kᵀ P_k θ_k.
	"""
	blocks = blocks or block_designs(data)
	K = data.K

	if lik == LikelihoodKind.gaussian:
		if not (q_phi.a_sigma2 > 0 and q_phi.b_sigma2 > 0):
			raise DomainError('Inverse gamma parameters of q(σ²) must be positive', a=q_phi.a_sigma2, b=q_phi.b_sigma2)
		precision = q_phi.a_sigma2 / q_phi.b_sigma2
		d2 = np.full(data.n, precision)
		nu = data.y * np.sqrt(precision)
		T = [precision * q_phi.e_sigma_inv(k) for k in range(1, K + 1)]
	else:
		if np.any(q_phi.c < 0) or np.any(q_phi.b <= 0):
			raise DomainError('Polya-Gamma parameters need b > 0 and c ≥ 0')
		d2 = pg_mean(q_phi.b, q_phi.c)
		nu = (data.y - data.trials / 2.0) / np.sqrt(d2)
		T = [q_phi.e_sigma_inv(k) for k in range(1, K + 1)]

	for k, a in enumerate(q_phi.a, start=1):
		if not a > 0:
			raise DomainError(f'Inverse Wishart degrees of freedom of q(Σ_{k}) must be positive', block=k)

	d = np.sqrt(d2)
	D = scipy.sparse.diags(d)
	W_blocks = [(D @ b.Z).tocsr() for b in blocks]
	gram = [_level_gram(b.levels, d[:, None] * b.slopes, b.G) for b in blocks]

	return GaussianSurrogate(
		nu=nu,
		d_diag=d,
		blocks=blocks,
		W_blocks=W_blocks,
		T_blocks=[np.zeros((blocks[0].D, blocks[0].D)), *T],
		gram_blocks=gram,
		revision=revision,
	)


def cholesky(matrix: np.ndarray, blocks: list[int], what: str, sizes: list[int]|None = None) -> np.ndarray:
	"""
	Lower Cholesky factor. On failure the offending block is located by factoring each diagonal block in turn.
	"""
	try:
		return scipy.linalg.cholesky(matrix, lower=True)
	except np.linalg.LinAlgError:
		pass

	offending: int|list[int] = blocks
	if sizes is not None:
		start = 0
		for k, size in zip(blocks, sizes):
			try:
				scipy.linalg.cholesky(matrix[start:start + size, start:start + size], lower=True)
			except np.linalg.LinAlgError:
				offending = k
				break
			start += size

	raise SingularityError(f'{what} is not positive definite (block {offending})', block=offending, matrix=what)


def logdet(L: np.ndarray) -> float:
	return float(2.0 * np.sum(np.log(np.diagonal(L, axis1=-2, axis2=-1))))


@dataclass
class CollapsedLaw:
	"""
	q(θ_C | θ_U) = N(A⁻¹W_Cᵀ(ν − W_U θ_U), A⁻¹) with A = W_CᵀW_C + P_C held as its lower Cholesky factor.
	"""
	blocks: tuple[int, ...]
	W: scipy.sparse.csr_matrix
	A: np.ndarray
	L: np.ndarray
	logdet: float
	revision: int

	@property
	def size(self) -> int:
		return int(self.A.shape[0])

	def solve(self, b: np.ndarray) -> np.ndarray:
		return scipy.linalg.cho_solve((self.L, True), b)

	def inverse(self) -> np.ndarray:
		return self.solve(np.eye(self.size))


def collapse(s: GaussianSurrogate, part: Partition) -> CollapsedLaw|None:
	if not part.collapsed:
		return None

	C = list(part.collapsed)
	W = s.W(C)
	A = (W.T @ W).toarray() + s.P(C).toarray()
	L = cholesky(A, C, 'W_CᵀW_C + P_C', [s.sizes[k] for k in C])
	return CollapsedLaw(tuple(C), W, A, L, logdet(L), s.revision)


def apply_projector(s: GaussianSurrogate, part: Partition, v: np.ndarray, law: CollapsedLaw|None = None) -> np.ndarray:
	"""
	M_C v = v − W_C (W_CᵀW_C + P_C)⁻¹ W_Cᵀ v without forming M_C.
	"""
	if not part.collapsed:
		return np.array(v, dtype=np.float64, copy=True)

	law = law or collapse(s, part)
	assert law
	return v - law.W @ law.solve(law.W.T @ v)


def check_guard(parameters: int, guard: int|None = None):
	guard = Settings.guard_dimension if guard is None else guard
	if parameters > guard:
		raise DimensionGuardError(parameters, guard)


def joint_precision(s: GaussianSurrogate, guard: int|None = None) -> np.ndarray:
	"Q = WᵀW + P over every block, dense"
	check_guard(s.dimension(), guard)
	W = s.W(range(len(s.blocks)))
	return (W.T @ W).toarray() + s.P(range(len(s.blocks))).toarray()


@dataclass
class TargetMoments:
	part: Partition
	mean_U: np.ndarray
	cov_U: np.ndarray
	cond_map: np.ndarray
	cond_offset: np.ndarray
	cond_cov: np.ndarray
	index_U: np.ndarray
	index_C: np.ndarray

	@property
	def mean(self) -> np.ndarray:
		"joint mean in block order"
		mean = np.zeros(self.index_U.size + self.index_C.size)
		mean[self.index_U] = self.mean_U
		mean[self.index_C] = self.cond_offset + self.cond_map @ self.mean_U
		return mean

	@property
	def cov(self) -> np.ndarray:
		p = self.index_U.size + self.index_C.size
		cov = np.zeros((p, p))
		U, C = self.index_U, self.index_C
		cross = self.cond_map @ self.cov_U
		cov[np.ix_(U, U)] = self.cov_U
		cov[np.ix_(C, U)] = cross
		cov[np.ix_(U, C)] = cross.T
		cov[np.ix_(C, C)] = self.cond_cov + cross @ self.cond_map.T
		return cov


def exact_target_moments(s: GaussianSurrogate, part: Partition, guard: int|None = None) -> TargetMoments:
	"""
	Dense moments of π(θ_U) and π(θ_C | θ_U). Oracle use only; refuses models above the guard dimension.
	"""
	check_guard(s.dimension(), guard)

	C, U = list(part.collapsed), list(part.uncollapsed)
	law = collapse(s, part)
	W_U = s.W(U).toarray()

	M_W_U = W_U - (law.W @ law.solve(law.W.T @ W_U) if law else 0.0)
	M_nu = apply_projector(s, part, s.nu, law)

	if U:
		precision_U = s.P(U).toarray() + W_U.T @ M_W_U
		L = cholesky(precision_U, U, 'P_U + W_UᵀM_C W_U', [s.sizes[k] for k in U])
		cov_U = scipy.linalg.cho_solve((L, True), np.eye(precision_U.shape[0]))
		mean_U = cov_U @ (W_U.T @ M_nu)
	else:
		cov_U = np.zeros((0, 0))
		mean_U = np.zeros(0)

	if law:
		cond_cov = law.inverse()
		cond_map = -law.solve(law.W.T @ W_U) if U else np.zeros((law.size, 0))
		cond_offset = law.solve(law.W.T @ s.nu)
	else:
		cond_cov = np.zeros((0, 0))
		cond_map = np.zeros((0, len(mean_U)))
		cond_offset = np.zeros(0)

	return TargetMoments(part, mean_U, cov_U, cond_map, cond_offset, cond_cov, s.indices(U), s.indices(C))
