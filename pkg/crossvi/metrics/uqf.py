from __future__ import annotations
from typing import Any

from dataclasses import dataclass, field
import enum

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from ..import core
from ..model import DomainError
from ..settings import Settings
from .error import SampleSizeError


class UqfMethod(enum.Enum):
	analytic = 'analytic'
	split_sample = 'split_sample'


@dataclass
class UqfEstimate:
	value: float
	method: UqfMethod
	fold_values: list[float] = field(default_factory=list)
	eigvec_count: int = 0

	def into_json(self) -> dict[str, Any]:
		return {
			'value': self.value,
			'method': self.method.value,
			'folds': self.fold_values,
			'eigvec_count': self.eigvec_count,
		}


def _spd_cholesky(matrix: np.ndarray, name: str) -> np.ndarray:
	matrix = np.asarray(matrix, dtype=np.float64)
	if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
		raise DomainError(f'{name} must be a square matrix', shape=list(matrix.shape))
	if not np.allclose(matrix, matrix.T, rtol=1e-8, atol=1e-10 * max(1.0, float(np.abs(matrix).max(initial=0.0)))):
		raise DomainError(f'{name} must be symmetric')
	try:
		return scipy.linalg.cholesky(matrix, lower=True)
	except np.linalg.LinAlgError:
		raise DomainError(f'{name} must be positive definite')


def _largest_eigenvalue(matrix: np.ndarray) -> float:
	matrix = 0.5 * (matrix + matrix.T)
	if matrix.shape[0] > Settings.guard_dimension:
		return float(scipy.sparse.linalg.eigsh(matrix, k=1, which='LA', tol=1e-10, return_eigenvectors=False)[0])
	return float(scipy.linalg.eigvalsh(matrix)[-1])


def uqf_analytic(cov_pi: np.ndarray, q_precision: np.ndarray) -> float:
	"""
	Worst-case ratio of q to π variance over linear functionals: 1 / λ_max(cov_π · cov_q⁻¹), evaluated on Lᵀ cov_π L with L the Cholesky factor of the q precision.
	"""
	L = _spd_cholesky(q_precision, 'q precision')
	_spd_cholesky(cov_pi, 'π covariance')
	if L.shape != np.shape(cov_pi):
		raise DomainError('π covariance and q precision must have the same dimension')

	return 1.0 / _largest_eigenvalue(L.T @ cov_pi @ L)


def normalized_precision(pi_precision: np.ndarray, q_precision: np.ndarray) -> np.ndarray:
	"Q̄ = Q̃^{-1/2} Q Q̃^{-1/2}; its smallest eigenvalue is the UQF"
	values, vectors = scipy.linalg.eigh(q_precision)
	if values[0] <= 0:
		raise DomainError('q precision must be positive definite')
	root = (vectors / np.sqrt(values)) @ vectors.T
	q_bar = root @ pi_precision @ root
	return 0.5 * (q_bar + q_bar.T)


def uqf_pair_bound(q_bar: np.ndarray, v_k: np.ndarray, v_l: np.ndarray) -> float:
	"""
	Upper bound 1 − v_kᵀQ̄v_ℓ / (‖v_k‖‖v_ℓ‖) for vectors supported on two different blocks whose diagonal blocks of Q̄ are identities.
	"""
	return float(1.0 - v_k @ q_bar @ v_l / (np.linalg.norm(v_k) * np.linalg.norm(v_l)))


def block_eigen_identity(M: np.ndarray, split: int) -> float:
	"""
	1 − ρ(M₁₁⁻¹M₁₂M₂₂⁻¹M₂₁)^{1/2}: the smallest eigenvalue of M after normalizing both diagonal blocks to identities.
	"""
	M11, M12 = M[:split, :split], M[:split, split:]
	M21, M22 = M[split:, :split], M[split:, split:]
	product = np.linalg.solve(M11, M12) @ np.linalg.solve(M22, M21)
	rho = float(np.max(np.abs(scipy.linalg.eigvals(product))))
	return 1.0 - np.sqrt(rho)


def uqf_split_sample(pi_samples: np.ndarray, q_precision: np.ndarray, folds: int|None = None, top: int|None = None, rng_seed: int|None = None) -> UqfEstimate:
	"""
	Sampled UQF: for every fold, the leading directions of ĉov_π·cov_q⁻¹ are chosen on the other folds and the variance ratio along them is measured on the held-out fold.

	Folds are contiguous blocks of the sample stream; pass `rng_seed` to permute the rows first.
	"""
	folds = Settings.folds if folds is None else folds
	top = Settings.top_eigenvectors if top is None else top

	samples = np.asarray(pi_samples, dtype=np.float64)
	S, p = samples.shape
	top = min(top, p)
	if S < folds * (top + 2):
		raise SampleSizeError(f'{S} samples are too few for {folds} folds of {top} directions (need {folds * (top + 2)})', samples=S, required=folds * (top + 2))

	if rng_seed is not None:
		samples = samples[core.rng(rng_seed).permutation(S)]

	L = _spd_cholesky(q_precision, 'q precision')
	bounds = np.linspace(0, S, folds + 1).astype(int)

	values: list[float] = []
	for f in range(folds):
		held = samples[bounds[f]:bounds[f + 1]]
		train = np.concatenate([samples[:bounds[f]], samples[bounds[f + 1]:]])

		cov_train = np.atleast_2d(np.cov(train, rowvar=False))
		eigenvalues, eigenvectors = scipy.linalg.eigh(L.T @ cov_train @ L)
		V = L @ eigenvectors[:, ::-1][:, :top]

		cov_pi = np.atleast_2d(np.cov(held @ V, rowvar=False))
		cov_q = V.T @ scipy.linalg.cho_solve((L, True), V)
		ratios = scipy.linalg.eigh(cov_pi, 0.5 * (cov_q + cov_q.T), eigvals_only=True)
		values.append(1.0 / float(ratios[-1]))

	return UqfEstimate(float(np.mean(values)), UqfMethod.split_sample, values, top)
