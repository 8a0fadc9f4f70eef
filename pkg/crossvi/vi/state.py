from __future__ import annotations
from typing import Any

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse

from ..model import LikelihoodKind, MixedModelData, PriorSpec
from .surrogate import BlockDesign, CollapsedLaw, GaussianSurrogate, Partition, pg_mean


@dataclass
class Phi:
	"""
	Parameters of q(φ): IW(a_k, Φ_k) per factor, IG(a_σ², b_σ²) for the Gaussian residual, PG(b_i, c_i) per binomial observation.
	"""
	a: list[float]
	scale: list[np.ndarray]
	a_sigma2: float|None = None
	b_sigma2: float|None = None
	b: np.ndarray|None = None
	c: np.ndarray|None = None

	def e_sigma_inv(self, k: int) -> np.ndarray:
		"E[Σ_k⁻¹] = a_k Φ_k⁻¹ for k = 1..K"
		return self.a[k - 1] * np.linalg.inv(self.scale[k - 1])

	def e_inv_sigma2(self) -> float:
		assert self.a_sigma2 is not None and self.b_sigma2 is not None
		return self.a_sigma2 / self.b_sigma2

	def e_omega(self) -> np.ndarray:
		assert self.b is not None and self.c is not None
		return pg_mean(self.b, self.c)

	def copy(self) -> Phi:
		return Phi(
			a=list(self.a),
			scale=[s.copy() for s in self.scale],
			a_sigma2=self.a_sigma2,
			b_sigma2=self.b_sigma2,
			b=None if self.b is None else self.b.copy(),
			c=None if self.c is None else self.c.copy(),
		)

	def into_json(self) -> dict[str, Any]:
		json: dict[str, Any] = {
			'a': self.a,
			'scale': self.scale,
		}
		if self.a_sigma2 is not None:
			json['a_sigma2'] = self.a_sigma2
			json['b_sigma2'] = self.b_sigma2
		if self.c is not None:
			json['b'] = self.b
			json['c'] = self.c
		return json

	@staticmethod
	def point(sigma2: float, Sigma: list[np.ndarray]) -> Phi:
		"q(φ) whose expectations E[1/σ²] and E[Σ_k⁻¹] equal the given values"
		scale = [np.atleast_2d(S).astype(np.float64) for S in Sigma]
		return Phi([1.0] * len(scale), scale, a_sigma2=1.0, b_sigma2=float(sigma2))

	@staticmethod
	def initial(data: MixedModelData, lik: LikelihoodKind, prior: PriorSpec) -> Phi:
		a = [a0 + f.levels for a0, f in zip(prior.iw_df, data.factors)]
		scale = [s0 * (ak / a0) for s0, ak, a0 in zip(prior.iw_scale, a, prior.iw_df)]

		if lik == LikelihoodKind.gaussian:
			variance = float(np.var(data.y, ddof=1)) if data.n > 1 else 1.0
			if not variance > 0:
				variance = 1.0
			return Phi(a, scale, a_sigma2=data.n / 2.0, b_sigma2=data.n * variance / 2.0)

		return Phi(a, scale, b=data.trials.astype(np.float64), c=np.zeros(data.n))


@dataclass
class BlockFactors:
	"""
	Implicit Λ_k for one uncollapsed block: Λ_k = Λ_k^∅ + Λ_k^∅ B_kᵀ J_k⁻¹ B_k Λ_k^∅ with B_k = W_CᵀW_k and J_k = A_C − B_kΛ_k^∅B_kᵀ.
	"""
	k: int
	revision: int
	lambda_empty: np.ndarray
	logdet_empty: float
	B: scipy.sparse.csr_matrix|None = None
	B_lambda: np.ndarray|None = None
	J_chol: np.ndarray|None = None
	logdet_J: float = 0.0
	R: np.ndarray|None = None

	@property
	def G(self) -> int:
		return self.lambda_empty.shape[0]

	@property
	def D(self) -> int:
		return self.lambda_empty.shape[1]

	def apply_empty(self, a: np.ndarray) -> np.ndarray:
		shape = a.shape
		a = a.reshape(self.G, self.D, -1)
		return np.einsum('gij,gjm->gim', self.lambda_empty, a).reshape(shape)

	def solve_J(self, b: np.ndarray) -> np.ndarray:
		assert self.J_chol is not None
		return scipy.linalg.cho_solve((self.J_chol, True), b)


@dataclass
class VariationalState:
	data: MixedModelData
	lik: LikelihoodKind
	prior: PriorSpec
	part: Partition
	phi: Phi
	blocks: list[BlockDesign]
	mu_blocks: dict[int, np.ndarray]
	surrogate: GaussianSurrogate|None = None
	collapsed_law: CollapsedLaw|None = None
	factors: dict[int, BlockFactors] = field(default_factory=dict)
	elbo_trace: list[float] = field(default_factory=list)
	revision: int = 0

	@property
	def lambda_empty(self) -> dict[int, np.ndarray]:
		return {k: f.lambda_empty for k, f in self.factors.items()}

	def fitted(self, exclude: int|None = None) -> np.ndarray:
		"Σ_{ℓ∈U, ℓ≠exclude} W_ℓ μ_ℓ"
		assert self.surrogate
		total = np.zeros(self.data.n)
		for l in self.part.uncollapsed:
			if l != exclude:
				total += self.surrogate.W_blocks[l] @ self.mu_blocks[l]
		return total
