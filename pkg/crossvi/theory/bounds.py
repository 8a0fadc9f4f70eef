from __future__ import annotations
from typing import Any, Sequence

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from ..model import MixedModelData
from ..settings import Settings
from ..vi import GaussianSurrogate
from .error import PreconditionError, UnsupportedRestrictionError


@dataclass
class DesignCounts:
	"""
	Weighted co-occurrence counts n_{g,h}^{(k,ℓ)} = Σ_i D_ii² m_{i,k,g} m_{i,ℓ,h} and their margins n_g^{(k)}.
	"""
	pair_counts: dict[tuple[int, int], np.ndarray]
	level_counts: list[np.ndarray]
	d_bar: float
	n: int

	@property
	def K(self) -> int:
		return len(self.level_counts)

	@property
	def levels(self) -> list[int]:
		return [c.shape[0] for c in self.level_counts]

	def pair(self, k: int, l: int) -> np.ndarray:
		"G_k×G_ℓ counts for factors k ≠ ℓ (1 based)"
		if (k, l) in self.pair_counts:
			return self.pair_counts[(k, l)]
		return self.pair_counts[(l, k)].T

	def into_json(self) -> dict[str, Any]:
		return {
			'n': self.n,
			'd_bar': self.d_bar,
			'level_counts': self.level_counts,
		}


def weighted_counts(s: GaussianSurrogate|None, data: MixedModelData, require_intercepts: bool = True) -> DesignCounts:
	"""
	Counts weighted by D_ii² of the surrogate (unit weights when `s` is None). Only random-intercept models are covered by the bounds.
	"""
	if require_intercepts:
		for factor in data.factors:
			if factor.effect_dim != 1:
				raise UnsupportedRestrictionError(f'Factor `{factor.name}` has random slopes; the bounds hold for random intercepts only', factor=factor.name)

	weights = np.ones(data.n) if s is None else s.d_diag ** 2
	level_counts = [np.bincount(data.levels(k), weights=weights, minlength=f.levels) for k, f in enumerate(data.factors, start=1)]

	pair_counts: dict[tuple[int, int], np.ndarray] = {}
	for k in range(1, data.K + 1):
		for l in range(k + 1, data.K + 1):
			shape = (data.factors[k - 1].levels, data.factors[l - 1].levels)
			pair_counts[(k, l)] = scipy.sparse.coo_matrix((weights, (data.levels(k), data.levels(l))), shape=shape).toarray()

	return DesignCounts(pair_counts, level_counts, float(np.mean(weights)), data.n)


def _require_two_factors(counts: DesignCounts):
	if counts.K != 2:
		raise UnsupportedRestrictionError(f'Only two crossed factors are supported, got {counts.K}', factors=counts.K)


def is_balanced(counts: DesignCounts, tol: float = 1e-9) -> bool:
	_require_two_factors(counts)
	for level_counts in counts.level_counts:
		mean = float(np.mean(level_counts))
		if np.max(np.abs(level_counts - mean)) > tol * mean:
			return False
	return True


def _shrinkage(counts: DesignCounts, T: Sequence[float], n: int) -> np.ndarray:
	"per factor, nD̄ / (G_k T_k + nD̄)"
	G = np.asarray(counts.levels, dtype=np.float64)
	T = np.asarray([float(np.squeeze(t)) for t in T])
	return n * counts.d_bar / (G * T + n * counts.d_bar)


def ff_bound(counts: DesignCounts, T: Sequence[float], n: int) -> float:
	"""
	Upper bound on the UQF of the fully factorized approximation: 1 − max_k (nD̄ / (G_k T_k + nD̄))^{1/2}.
	"""
	if not counts.level_counts:
		raise UnsupportedRestrictionError('The bound needs at least one random factor')
	return float(1.0 - np.sqrt(np.max(_shrinkage(counts, T, n))))


def lambda_aux(counts: DesignCounts) -> float:
	"""
	Second largest modulus eigenvalue of S₁₂S₂₁, computed on the symmetric similar matrix D₁^{-1/2} N D₂⁻¹ Nᵀ D₁^{-1/2}.
	"""
	_require_two_factors(counts)
	N = counts.pair(1, 2)
	n1, n2 = counts.level_counts
	if np.any(n1 <= 0) or np.any(n2 <= 0):
		raise PreconditionError('Every level needs a positive weighted count')

	scaled = N / np.sqrt(n1)[:, None] / np.sqrt(n2)[None, :]
	M = scaled @ scaled.T
	M = 0.5 * (M + M.T)

	if M.shape[0] < 2:
		return 0.0

	if M.shape[0] > Settings.guard_dimension:
		values = scipy.sparse.linalg.eigsh(M, k=2, which='LA', tol=1e-10, return_eigenvectors=False)
	else:
		values = scipy.linalg.eigvalsh(M)

	modulus = np.sort(np.abs(values))[::-1]
	return float(np.clip(modulus[1], 0.0, 1.0))


def pf_uqf_balanced(counts: DesignCounts, T: Sequence[float], n: int) -> tuple[float, float]:
	"""
	Exact UQF of the partially factorized approximation with only β collapsed, on a balanced two-factor design.

	Returns (uqf, λ_aux).
	"""
	_require_two_factors(counts)
	if not is_balanced(counts):
		raise PreconditionError('The design is not balanced; the closed form holds for balanced designs only')

	aux = lambda_aux(counts)
	uqf = 1.0 - float(np.prod(np.sqrt(_shrinkage(counts, T, n)))) * np.sqrt(aux)
	return float(uqf), aux


def rg_bound(n: int, G1: int, G2: int) -> float:
	"""
	Asymptotic lower bound on the partially factorized UQF for random biregular designs.
	"""
	if G1 < 1 or G2 < 1 or n % G1 or n % G2:
		raise PreconditionError('Both level counts must divide n for a biregular design', n=n, G1=G1, G2=G2)
	return float(max(0.0, 1.0 - np.sqrt(np.sqrt(G1 / n) + np.sqrt(G2 / n))))


def is_binary(counts: DesignCounts) -> bool:
	"every observed cell carries a single observation"
	return all(np.all(np.isin(N, (0.0, counts.d_bar))) for N in counts.pair_counts.values())


def nested_pairs(counts: DesignCounts) -> list[tuple[int, int]]:
	"""
	(k, k') pairs where k' is nested in k: every level of k' co-occurs with exactly one level of k.
	"""
	pairs: list[tuple[int, int]] = []
	for k in range(1, counts.K + 1):
		for l in range(1, counts.K + 1):
			if k == l:
				continue
			N = counts.pair(k, l)
			if np.all(np.count_nonzero(N, axis=0) == 1):
				pairs.append((k, l))
	return pairs


@dataclass
class BoundsReport:
	ff_upper: float
	balanced: bool
	pf_exact: float|None = None
	rg_lower: float|None = None
	lambda_aux: float|None = None
	laplacian_gap: float|None = None
	nested: list[tuple[int, int]]|None = None

	def into_json(self) -> dict[str, Any]:
		return {
			'ff_upper': self.ff_upper,
			'pf_exact': self.pf_exact,
			'rg_lower': self.rg_lower,
			'lambda_aux': self.lambda_aux,
			'balanced': self.balanced,
			'laplacian_gap': self.laplacian_gap,
			'nested': [list(p) for p in self.nested or []],
		}


def bounds_report(counts: DesignCounts, T: Sequence[float], n: int) -> BoundsReport:
	report = BoundsReport(
		ff_upper=float(np.clip(ff_bound(counts, T, n), 0.0, 1.0)),
		balanced=False,
		nested=nested_pairs(counts),
	)
	if counts.K != 2:
		return report

	report.balanced = is_balanced(counts)
	if np.all(counts.level_counts[0] > 0) and np.all(counts.level_counts[1] > 0):
		report.lambda_aux = lambda_aux(counts)
		report.laplacian_gap = float(1.0 - np.sqrt(report.lambda_aux))

	if report.balanced:
		uqf, _ = pf_uqf_balanced(counts, T, n)
		report.pf_exact = float(np.clip(uqf, 0.0, 1.0))
		if is_binary(counts):
			G1, G2 = counts.levels
			report.rg_lower = rg_bound(n, G1, G2)

	return report
