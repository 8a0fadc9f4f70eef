from __future__ import annotations

import numpy as np
import pytest

from crossvi.model import LikelihoodKind, MixedModelData, PriorSpec
from crossvi.settings import SettingsRegistery
from crossvi.vi import Partition


def crossed(rng: np.random.Generator, G1: int, G2: int, n: int, binomial: bool = False, slope: bool = False) -> MixedModelData:
	"two crossed random-intercept factors, every level observed at least once"
	n = max(n, G1, G2)
	m1 = np.concatenate([np.arange(1, G1 + 1), rng.integers(1, G1 + 1, n - G1)])
	m2 = np.concatenate([np.arange(1, G2 + 1), rng.integers(1, G2 + 1, n - G2)])
	rng.shuffle(m2)

	x = rng.standard_normal(n)
	eta = 0.3 + 0.5 * x + rng.normal(0, 0.7, G1)[m1 - 1] + rng.normal(0, 0.5, G2)[m2 - 1]
	if binomial:
		y = rng.binomial(1, 1.0 / (1.0 + np.exp(-eta))).astype(np.float64)
	else:
		y = eta + rng.standard_normal(n)

	slope_values = None
	if slope:
		slope_values = [np.column_stack([np.ones(n), x]), np.ones((n, 1))]

	return MixedModelData.from_arrays(y, [m1, m2], X=np.column_stack([np.ones(n), x]), levels=[G1, G2], slope_values=slope_values, names=['a', 'b'])


@pytest.fixture(autouse=True)
def settings():
	SettingsRegistery.settings = {}
	yield
	SettingsRegistery.settings = {}


@pytest.fixture
def rng() -> np.random.Generator:
	return np.random.default_rng(20240611)


@pytest.fixture
def gaussian_data(rng) -> MixedModelData:
	return crossed(rng, 6, 5, 40)


@pytest.fixture
def binomial_data(rng) -> MixedModelData:
	return crossed(rng, 5, 4, 60, binomial=True)


@pytest.fixture
def prior(gaussian_data) -> PriorSpec:
	return PriorSpec.default(gaussian_data)


@pytest.fixture(params=['ff', 'pf', 'uf'])
def partition(request) -> Partition:
	return {
		'ff': Partition.fully_factorized(2),
		'pf': Partition.partially_factorized(2),
		'uf': Partition.unfactorized(2),
	}[request.param]


GAUSSIAN = LikelihoodKind.gaussian
BINOMIAL = LikelihoodKind.binomial
