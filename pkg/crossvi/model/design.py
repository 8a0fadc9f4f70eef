from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse

from .data import MixedModelData


def make_zinds(n_ob: int, n_rv: int, cols: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
	z_rows = np.repeat(np.arange(n_ob), n_rv)
	z_cols = np.repeat(cols * n_rv, n_rv) + np.tile(np.arange(n_rv), n_ob)
	return z_rows, z_cols


def build_design(levels: np.ndarray, slopes: np.ndarray, G: int) -> scipy.sparse.csr_matrix:
	n, D = slopes.shape
	z_rows, z_cols = make_zinds(n, D, levels)
	return scipy.sparse.csr_matrix((slopes.reshape(-1, order='C'), (z_rows, z_cols)), shape=(n, G * D))


def build_designs(data: MixedModelData) -> list[scipy.sparse.csr_matrix]:
	"""
	Z_k for k = 1..K. Row i of Z_k holds w_{i,k} in the columns of level memberships[k][i].
	"""
	return [
		build_design(data.levels(k), data.slope_values[k - 1], factor.levels)
		for k, factor in enumerate(data.factors, start=1)
	]


def memberships_from_design(Z: scipy.sparse.csr_matrix, effect_dim: int) -> np.ndarray:
	Z = Z.tocsr()
	Z.sort_indices()
	first = Z.indices[Z.indptr[:-1]]
	return first // effect_dim + 1


@dataclass
class ParamLayout:
	sizes: list[int]

	@property
	def offsets(self) -> np.ndarray:
		return np.r_[0, np.cumsum(self.sizes)]

	@property
	def total(self) -> int:
		return int(sum(self.sizes))

	def slice(self, k: int) -> slice:
		offsets = self.offsets
		return slice(int(offsets[k]), int(offsets[k + 1]))

	def indices(self, blocks: list[int]) -> np.ndarray:
		if not blocks:
			return np.zeros(0, dtype=np.int64)
		return np.concatenate([np.arange(self.slice(k).start, self.slice(k).stop) for k in blocks])


def param_layout(data: MixedModelData) -> ParamLayout:
	"block 0 is β, block k is α_k flattened level-major"
	return ParamLayout([data.X.shape[1], *[f.size for f in data.factors]])
