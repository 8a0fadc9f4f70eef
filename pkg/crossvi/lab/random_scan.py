from __future__ import annotations
from typing import Any, Literal

from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import scipy.linalg

from ..import core
from ..model import DomainError
from ..vi import Partition

Scan = Literal['random', 'systematic']


@dataclass
class GaussianTarget:
	mu: np.ndarray
	Q: np.ndarray
	block_sizes: list[int]

	def __post_init__(self):
		self.mu = np.asarray(self.mu, dtype=np.float64)
		self.Q = np.asarray(self.Q, dtype=np.float64)
		if sum(self.block_sizes) != self.Q.shape[0] or self.Q.shape[0] != self.Q.shape[1] or self.mu.shape != (self.Q.shape[0],):
			raise DomainError('Block sizes must partition the dimension of the target')
		if not np.allclose(self.Q, self.Q.T):
			raise DomainError('Target precision must be symmetric')
		try:
			scipy.linalg.cholesky(self.Q, lower=True)
		except np.linalg.LinAlgError:
			raise DomainError('Target precision must be positive definite')

	@property
	def offsets(self) -> np.ndarray:
		return np.r_[0, np.cumsum(self.block_sizes)]

	def indices(self, blocks: tuple[int, ...]) -> np.ndarray:
		offsets = self.offsets
		parts = [np.arange(offsets[k], offsets[k + 1]) for k in blocks]
		return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)

	@staticmethod
	def random(block_sizes: list[int], rng: np.random.Generator, condition: float = 10.0) -> GaussianTarget:
		"a random SPD precision with eigenvalues spread over [1, condition]"
		d = sum(block_sizes)
		basis, _ = np.linalg.qr(rng.standard_normal((d, d)))
		values = np.exp(rng.uniform(0.0, np.log(condition), d))
		Q = (basis * values) @ basis.T
		return GaussianTarget(rng.standard_normal(d), 0.5 * (Q + Q.T), list(block_sizes))


@dataclass
class NormalizedMarginal:
	"""
	π(θ_U) after collapsing C exactly, in coordinates where every diagonal block of the precision is the identity.
	"""
	part: Partition
	Q: np.ndarray
	mean: np.ndarray
	roots: list[np.ndarray]
	slices: list[slice]

	@property
	def blocks(self) -> int:
		return len(self.slices)

	@property
	def uqf(self) -> float:
		"λ_min of the normalized precision"
		return float(scipy.linalg.eigvalsh(self.Q)[0])

	def minimal_eigenvector(self) -> np.ndarray:
		values, vectors = scipy.linalg.eigh(self.Q)
		return vectors[:, 0]


def normalize(target: GaussianTarget, part: Partition) -> NormalizedMarginal:
	if not part.uncollapsed:
		raise DomainError('Random scan needs at least one uncollapsed block')

	iU, iC = target.indices(part.uncollapsed), target.indices(part.collapsed)
	M = target.Q[np.ix_(iU, iU)]
	if iC.size:
		M = M - target.Q[np.ix_(iU, iC)] @ np.linalg.solve(target.Q[np.ix_(iC, iC)], target.Q[np.ix_(iC, iU)])

	roots: list[np.ndarray] = []
	slices: list[slice] = []
	start = 0
	scale = np.zeros_like(M)
	for k in part.uncollapsed:
		size = target.block_sizes[k]
		block = slice(start, start + size)
		L = scipy.linalg.cholesky(M[block, block], lower=True)
		scale[block, block] = scipy.linalg.solve_triangular(L, np.eye(size), lower=True)
		roots.append(L)
		slices.append(block)
		start += size

	Q = scale @ M @ scale.T
	return NormalizedMarginal(part, 0.5 * (Q + Q.T), target.mu[iU], roots, slices)


@dataclass
class MeanFieldIterate:
	"""
	Means of q(θ_k), k ∈ U, in normalized coordinates centred at the optimum. The block precisions are the fixed diagonal blocks of the U-marginal precision.
	"""
	m_blocks: list[np.ndarray]
	precisions: list[np.ndarray]

	@property
	def m(self) -> np.ndarray:
		return np.concatenate(self.m_blocks)


def v_gap(marginal: NormalizedMarginal, iterate: MeanFieldIterate|np.ndarray) -> float:
	"V(q*‖π) − V(q‖π) = ½ mᵀQ̃m"
	m = iterate.m if isinstance(iterate, MeanFieldIterate) else np.asarray(iterate)
	return float(0.5 * m @ marginal.Q @ m)


@dataclass
class Trajectory:
	"""
	Gaps after every single-block update (runs × (|U|·sweeps + 1)) and the run-averaged iterate at every sweep boundary.
	"""
	gaps: np.ndarray
	mean_iterates: np.ndarray
	blocks: int
	seed: int

	@property
	def sweep_gaps(self) -> np.ndarray:
		return self.gaps[:, ::self.blocks]

	def frame(self) -> pd.DataFrame:
		gaps = self.sweep_gaps
		runs, sweeps = gaps.shape
		return pd.DataFrame({
			'run_id': np.repeat(np.arange(runs), sweeps),
			'sweep': np.tile(np.arange(sweeps), runs),
			'v_gap': gaps.reshape(-1),
		})


def rs_cavi(target: GaussianTarget, part: Partition, sweeps: int, rng_seed: int, start: np.ndarray|None = None, runs: int = 1, scan: Scan = 'random') -> Trajectory:
	"""
	Coordinate ascent on π(θ_U) with one block per update, chosen uniformly from U (or in ascending order for a systematic scan). One sweep is |U| updates.

	`start` is given in normalized coordinates and defaults to the eigenvector of the smallest eigenvalue.
	"""
	marginal = normalize(target, part)
	Q = marginal.Q
	blocks = marginal.blocks
	rng = core.rng(rng_seed)

	m0 = marginal.minimal_eigenvector() if start is None else np.asarray(start, dtype=np.float64)
	m = np.tile(m0, (runs, 1))

	steps = blocks * sweeps
	gaps = np.zeros((runs, steps + 1))
	mean_iterates = np.zeros((sweeps + 1, m0.size))
	gaps[:, 0] = 0.5 * np.einsum('ri,ij,rj->r', m, Q, m)
	mean_iterates[0] = m.mean(axis=0)

	for step in range(steps):
		if scan == 'systematic':
			chosen = np.full(runs, step % blocks)
		else:
			chosen = rng.integers(0, blocks, size=runs)

		for k, block in enumerate(marginal.slices):
			rows = np.flatnonzero(chosen == k)
			if not rows.size:
				continue
			# unit diagonal block: m_k ← m_k − (Q̃m)_k
			m[rows, block] -= m[rows] @ Q[:, block]

		gaps[:, step + 1] = 0.5 * np.einsum('ri,ij,rj->r', m, Q, m)
		if (step + 1) % blocks == 0:
			mean_iterates[(step + 1) // blocks] = m.mean(axis=0)

	return Trajectory(np.maximum(gaps, 0.0), mean_iterates, blocks, rng_seed)


def expected_mean_decay(target: GaussianTarget, part: Partition, steps: int|np.ndarray) -> np.ndarray:
	"(1 − λ_min/|U|)^s: the factor multiplying the expected iterate after s random updates from the minimal eigenvector"
	marginal = normalize(target, part)
	return np.power(1.0 - marginal.uqf / marginal.blocks, steps)


@dataclass
class DualityReport:
	uqf: float
	rate: float
	lower_rate: float
	upper_rate: float
	bracket_satisfied: bool
	rate_within: bool
	mean_gaps: np.ndarray = field(repr=False)

	def into_json(self) -> dict[str, Any]:
		return {
			'uqf': self.uqf,
			'rate': self.rate,
			'lower_rate': self.lower_rate,
			'upper_rate': self.upper_rate,
			'bracket_satisfied': self.bracket_satisfied,
			'rate_within': self.rate_within,
			'mean_gaps': self.mean_gaps,
		}


def duality_check(target: GaussianTarget, part: Partition, sweeps: int, runs: int, rng_seed: int) -> DualityReport:
	"""
	Runs random-scan ascent from the minimal eigenvector and compares the averaged gap with
	[(1 − λ/|U|)^{2|U|t}, (1 − λ/|U|)^{|U|t}] · gap₀, λ being the UQF. The bracket is checked at every sweep with 3σ Monte Carlo slack.
	"""
	marginal = normalize(target, part)
	uqf = marginal.uqf
	blocks = marginal.blocks

	trajectory = rs_cavi(target, part, sweeps, rng_seed, runs=runs)
	gaps = trajectory.sweep_gaps
	gap0 = gaps[0, 0]
	relative = gaps / gap0
	mean = relative.mean(axis=0)
	error = relative.std(axis=0, ddof=1) / np.sqrt(runs) if runs > 1 else np.zeros_like(mean)

	t = np.arange(sweeps + 1)
	factor = 1.0 - uqf / blocks
	with np.errstate(divide='ignore'):
		upper_rate = blocks * float(np.log(factor))
	lower_rate = 2.0 * upper_rate
	upper = factor ** (blocks * t)
	lower = factor ** (2 * blocks * t)

	slack = 3.0 * error + 1e-12
	satisfied = bool(np.all(mean <= upper + slack) and np.all(mean >= lower - slack))

	positive = mean > 1e-300
	if np.count_nonzero(positive[1:]) == 0:
		rate = -np.inf
	else:
		tt = t[positive]
		rate = float(np.sum(tt * np.log(mean[positive])) / np.sum(tt * tt))

	if np.isinf(upper_rate):
		rate_within = bool(np.isinf(rate))
	else:
		rate_within = bool(lower_rate * 1.05 <= rate <= upper_rate * 0.95) if upper_rate < 0 else bool(rate <= 0)

	core.info(f'duality check: uqf={uqf:.4f} rate={rate:.4f} bracket=[{lower_rate:.4f}, {upper_rate:.4f}] satisfied={satisfied}')
	return DualityReport(uqf, rate, lower_rate, upper_rate, satisfied, rate_within, mean)
