from __future__ import annotations
from typing import Any, Callable

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse
import scipy.sparse.csgraph

from ..import core
from .error import GenerationError

MCAR_ATTEMPTS = 100
BIREGULAR_ATTEMPTS = 1000
REPAIR_ROUNDS = 50


@dataclass
class Design:
	"""
	Two crossed factors, one observation per retained cell. `memberships` are 1 based.
	"""
	generator: str
	parameters: dict[str, Any]
	seed: int
	levels: list[int]
	memberships: list[np.ndarray]
	attempts: int = 1
	notes: list[str] = field(default_factory=list)

	@property
	def n(self) -> int:
		return int(self.memberships[0].shape[0])

	def incidence(self) -> scipy.sparse.csr_matrix:
		"G1×G2 cell counts"
		rows = self.memberships[0] - 1
		cols = self.memberships[1] - 1
		return scipy.sparse.csr_matrix((np.ones(self.n), (rows, cols)), shape=tuple(self.levels))

	def regenerate(self) -> Design:
		return GENERATORS[self.generator](**self.parameters, rng_seed=self.seed)

	def into_json(self) -> dict[str, Any]:
		return {
			'generator': self.generator,
			'parameters': self.parameters,
			'seed': self.seed,
			'levels': self.levels,
			'n': self.n,
			'attempts': self.attempts,
			'notes': self.notes,
		}


def is_connected(incidence: scipy.sparse.spmatrix) -> bool:
	G1, G2 = incidence.shape
	adjacency = scipy.sparse.bmat([[None, incidence], [incidence.T, None]], format='csr')
	count, _ = scipy.sparse.csgraph.connected_components(adjacency, directed=False)
	return count == 1


def _cells(mask: np.ndarray) -> list[np.ndarray]:
	rows, cols = np.nonzero(mask)
	return [rows + 1, cols + 1]


def gen_crossed_mcar(G1: int, G2: int, missing_prob: float, rng_seed: int) -> Design:
	"""
	Every cell of a G1×G2 table is kept independently with probability 1 − missing_prob. Tables leaving a level unobserved or splitting into disconnected pieces are redrawn.
	"""
	if G1 < 2 or G2 < 2:
		raise GenerationError('Crossed designs need at least two levels per factor', G1=G1, G2=G2)
	if not 0.0 <= missing_prob < 1.0:
		raise GenerationError('missing_prob must lie in [0, 1)', missing_prob=missing_prob)

	rng = core.rng(rng_seed)
	notes: list[str] = []

	for attempt in range(1, MCAR_ATTEMPTS + 1):
		mask = rng.random((G1, G2)) >= missing_prob

		if not (mask.any(axis=1).all() and mask.any(axis=0).all()):
			notes.append(f'attempt {attempt}: empty level')
			continue
		if not is_connected(scipy.sparse.csr_matrix(mask.astype(np.float64))):
			notes.append(f'attempt {attempt}: disconnected')
			continue

		return Design(
			generator='crossed_mcar',
			parameters={'G1': G1, 'G2': G2, 'missing_prob': missing_prob},
			seed=int(rng_seed),
			levels=[G1, G2],
			memberships=_cells(mask),
			attempts=attempt,
			notes=notes,
		)

	raise GenerationError(f'No connected design without empty levels after {MCAR_ATTEMPTS} attempts', G1=G1, G2=G2, missing_prob=missing_prob)


def _repeated_positions(a: np.ndarray, b: np.ndarray, G2: int) -> np.ndarray:
	codes = a * G2 + b
	_, first = np.unique(codes, return_index=True)
	repeated = np.ones(codes.shape[0], dtype=bool)
	repeated[first] = False
	return np.flatnonzero(repeated)


def _sparse_biregular(G1: int, G2: int, d1: int, d2: int, rng: np.random.Generator) -> tuple[np.ndarray, int]:
	"""
	G1×G2 binary mask with row sums d1 and column sums d2, for d1 ≤ G2/2.

	Each attempt draws a fresh stub matching and breaks up repeated cells by swapping their factor-2 stub with a random one for a bounded number of rounds.
	"""
	n = G1 * d1
	a = np.repeat(np.arange(G1), d1)

	for attempt in range(1, BIREGULAR_ATTEMPTS + 1):
		b = rng.permutation(np.repeat(np.arange(G2), d2))
		for _ in range(REPAIR_ROUNDS):
			repeated = _repeated_positions(a, b, G2)
			if repeated.size == 0:
				mask = np.zeros((G1, G2), dtype=bool)
				mask[a, b] = True
				return mask, attempt

			for i in repeated:
				j = rng.integers(n)
				b[i], b[j] = b[j], b[i]

	raise GenerationError(f'Could not draw a binary design after {BIREGULAR_ATTEMPTS} matchings', G1=G1, G2=G2, d1=d1, d2=d2)


def gen_biregular(n: int, d1: int, d2: int, rng_seed: int) -> Design:
	"""
	Uniform-ish binary design where every level of factor 1 is seen d1 times and every level of factor 2 d2 times.

	Built from random matchings of n factor-1 stubs to n factor-2 stubs. When more than half of the table is observed the sparser complement (degrees G2 − d1 and G1 − d2) is drawn instead and inverted; d1 = G2 gives the complete design.
	"""
	if d1 < 3 or d2 < 3:
		raise GenerationError('Biregular designs need d1, d2 ≥ 3', d1=d1, d2=d2)
	if n % d1 or n % d2:
		raise GenerationError('d1 and d2 must both divide n', n=n, d1=d1, d2=d2)

	G1, G2 = n // d1, n // d2
	if d1 > G2 or d2 > G1:
		raise GenerationError('Degrees exceed the number of levels on the other side; no binary design exists', n=n, d1=d1, d2=d2)

	rng = core.rng(rng_seed)
	attempts = 1
	notes: list[str] = []

	if d1 == G2:
		mask = np.ones((G1, G2), dtype=bool)
		notes.append('complete')
	elif 2 * d1 > G2:
		complement, attempts = _sparse_biregular(G1, G2, G2 - d1, G1 - d2, rng)
		mask = ~complement
		notes.append('complement')
	else:
		mask, attempts = _sparse_biregular(G1, G2, d1, d2, rng)

	return Design(
		generator='biregular',
		parameters={'n': n, 'd1': d1, 'd2': d2},
		seed=int(rng_seed),
		levels=[G1, G2],
		memberships=_cells(mask),
		attempts=attempts,
		notes=notes,
	)


def gen_nested(G1: int, r: int, rng_seed: int = 0) -> Design:
	"""
	Factor 2 nested in factor 1: G2 = r·G1 and cell (g, h) is observed iff r(g − 1) < h ≤ rg.
	"""
	if G1 < 1 or r < 1:
		raise GenerationError('Nested designs need G1 ≥ 1 and r ≥ 1', G1=G1, r=r)

	outer = np.repeat(np.arange(1, G1 + 1), r)
	inner = np.arange(1, G1 * r + 1)
	return Design(
		generator='nested',
		parameters={'G1': G1, 'r': r},
		seed=int(rng_seed),
		levels=[G1, G1 * r],
		memberships=[outer, inner],
	)


GENERATORS: dict[str, Callable[..., Design]] = {
	'crossed_mcar': gen_crossed_mcar,
	'biregular': gen_biregular,
	'nested': gen_nested,
}
