from __future__ import annotations

import os
import threading
import time

import numpy as np
import pandas as pd
import pytest

from crossvi import core, vi
from crossvi.model import DomainError, PriorSpec
from crossvi.sim import (
	GenerationError, SimConfig,
	gen_biregular, gen_crossed_mcar, gen_nested, is_connected, replicate_seeds, run_grid, simulate_responses, summarize, truth, write_grid,
)

from conftest import BINOMIAL, GAUSSIAN


def test_complete_crossed_design():
	design = gen_crossed_mcar(5, 4, 0.0, rng_seed=1)
	assert design.n == 20
	assert design.attempts == 1
	assert np.array_equal(design.incidence().toarray(), np.ones((5, 4)))


def test_mcar_designs_are_reproducible_and_connected():
	a = gen_crossed_mcar(12, 10, 0.7, rng_seed=3)
	b = gen_crossed_mcar(12, 10, 0.7, rng_seed=3)
	assert all(np.array_equal(x, y) for x, y in zip(a.memberships, b.memberships))
	assert is_connected(a.incidence())

	counts = a.incidence().toarray()
	assert np.all(counts.sum(axis=1) > 0) and np.all(counts.sum(axis=0) > 0)
	assert len(a.notes) == a.attempts - 1

	again = a.regenerate()
	assert all(np.array_equal(x, y) for x, y in zip(a.memberships, again.memberships))


def test_mcar_gives_up():
	with pytest.raises(GenerationError):
		gen_crossed_mcar(30, 30, 0.999, rng_seed=0)
	with pytest.raises(GenerationError):
		gen_crossed_mcar(1, 4, 0.1, rng_seed=0)
	with pytest.raises(GenerationError):
		gen_crossed_mcar(4, 4, 1.0, rng_seed=0)


def test_biregular_degrees():
	design = gen_biregular(12, 3, 4, rng_seed=0)
	assert design.levels == [4, 3]
	counts = design.incidence().toarray()
	assert np.all(counts.sum(axis=1) == 3)
	assert np.all(counts.sum(axis=0) == 4)
	assert np.all(np.isin(counts, (0.0, 1.0)))


@pytest.mark.parametrize('seed', range(5))
def test_biregular_designs_are_binary(seed):
	design = gen_biregular(240, 6, 8, rng_seed=seed)
	counts = design.incidence().toarray()
	assert counts.max() == 1.0
	assert np.all(counts.sum(axis=1) == 6) and np.all(counts.sum(axis=0) == 8)


@pytest.mark.parametrize('d', range(4, 9))
def test_dense_biregular_designs(d):
	for seed in range(10):
		design = gen_biregular(8 * d, d, d, rng_seed=seed)
		counts = design.incidence().toarray()
		assert design.levels == [8, 8]
		assert np.all(np.isin(counts, (0.0, 1.0)))
		assert np.all(counts.sum(axis=1) == d) and np.all(counts.sum(axis=0) == d)

	assert gen_biregular(64, 8, 8, rng_seed=0).notes == ['complete']
	assert gen_biregular(56, 7, 7, rng_seed=3).regenerate().memberships[1].tolist() == gen_biregular(56, 7, 7, rng_seed=3).memberships[1].tolist()


@pytest.mark.parametrize('n, d1, d2', [(12, 2, 3), (13, 3, 3), (12, 3, 6), (12, 6, 3)])
def test_biregular_rejects_impossible_degrees(n, d1, d2):
	with pytest.raises(GenerationError):
		gen_biregular(n, d1, d2, rng_seed=0)


def test_nested_design():
	design = gen_nested(3, 2)
	assert design.levels == [3, 6]
	assert list(design.memberships[0]) == [1, 1, 2, 2, 3, 3]
	assert list(design.memberships[1]) == [1, 2, 3, 4, 5, 6]
	assert design.regenerate().n == 6


def test_responses_without_random_effects():
	design = gen_crossed_mcar(40, 40, 0.0, rng_seed=0)
	data = simulate_responses(design, GAUSSIAN, rng_seed=1, variances=[0.0, 0.0])
	assert data.n == 1600
	assert abs(np.mean(data.y)) < 0.1
	assert np.std(data.y) == pytest.approx(1.0, abs=0.05)
	assert truth(data)['variances'] == [0.0, 0.0]
	assert np.all(truth(data)['effects'][0] == 0.0)


def test_binomial_responses():
	design = gen_crossed_mcar(30, 30, 0.0, rng_seed=0)
	data = simulate_responses(design, BINOMIAL, rng_seed=2, variances=[0.0, 0.0])
	assert set(np.unique(data.y)) <= {0.0, 1.0}
	assert np.mean(data.y) == pytest.approx(0.5, abs=0.05)
	assert data.metadata['likelihood'] == 'binomial'
	assert truth(data)['sigma'] is None


def test_responses_are_reproducible():
	design = gen_crossed_mcar(6, 6, 0.3, rng_seed=0)
	a = simulate_responses(design, GAUSSIAN, rng_seed=5)
	b = simulate_responses(design, GAUSSIAN, rng_seed=5)
	assert np.array_equal(a.y, b.y)
	assert [f.name for f in a.factors] == ['f1', 'f2']
	assert a.metadata['design']['generator'] == 'crossed_mcar'


def test_replicate_seeds_do_not_depend_on_order():
	config = SimConfig(G_grid=[8, 16], replicates=3, rng_seed=7)
	assert replicate_seeds(config, 16, 2) == replicate_seeds(config, 16, 2)
	assert replicate_seeds(config, 16, 2) != replicate_seeds(config, 16, 1)
	assert replicate_seeds(config, 8, 0) != replicate_seeds(config, 16, 0)


def test_invalid_configs():
	with pytest.raises(DomainError):
		SimConfig(G_grid=[])
	with pytest.raises(DomainError):
		SimConfig(missing_prob=1.0)
	with pytest.raises(DomainError):
		SimConfig(replicates=0)

	config = SimConfig.from_json({'likelihood': 'binomial', 'G_grid': [8], 'unknown': 1})
	assert config.likelihood == BINOMIAL and config.G_grid == [8]
	assert SimConfig.full_scale().G_grid[-1] == 1024


def test_grid_end_to_end(tmp_path):
	config = SimConfig(G_grid=[32], missing_prob=0.7, replicates=1, split_sample=False, rng_seed=1, jobs=1)
	log = core.RecordingLogger()
	result = run_grid(config, log)

	assert len(result.replicates) == 3
	assert result.replicates['error'].isna().all()
	assert list(result.table['family']) == ['ff', 'pf', 'uf']
	assert result.table['uqf_fixed_phi'].between(0.0, 1.0 + 1e-9).all()
	assert result.table.set_index('family').loc['uf', 'uqf_fixed_phi'] == pytest.approx(1.0, abs=1e-6)
	assert result.manifest['failures'] == 0
	assert any('grid finished' in message for message in log.messages('info'))

	write_grid(result, str(tmp_path))
	table = pd.read_csv(os.path.join(tmp_path, 'experiment.csv'))
	assert list(table['partition']) == ['{}', '{0}', '{0,1,2}']
	assert os.path.exists(os.path.join(tmp_path, 'manifest.json'))


def test_summary_skips_failed_replicates():
	rows = pd.DataFrame([
		{'G': 8, 'replicate': 0, 'family': 'pf', 'partition': [0], 'uqf_fixed_phi': 0.5, 'uqf_split_sample': np.nan, 'seconds_per_iteration': 0.1, 'iterations': 4, 'error': None},
		{'G': 8, 'replicate': 1, 'error': 'SingularityError: boom'},
	])
	table = summarize(rows)
	assert len(table) == 1
	assert table.loc[0, 'replicates'] == 1
	assert table.loc[0, 'partition'] == '{0}'


def test_grid_fits_never_overlap(monkeypatch):
	fit = vi.fit
	lock = threading.Lock()
	running, most = [0], [0]

	def counting_fit(*args, **kwargs):
		with lock:
			running[0] += 1
			most[0] = max(most[0], running[0])
		time.sleep(0.01)
		try:
			return fit(*args, **kwargs)
		finally:
			with lock:
				running[0] -= 1

	monkeypatch.setattr(vi, 'fit', counting_fit)
	config = SimConfig(G_grid=[8], missing_prob=0.3, replicates=4, split_sample=False, rng_seed=2, jobs=4)
	result = run_grid(config, core.RecordingLogger())

	assert result.manifest['failures'] == 0
	assert most[0] == 1
	assert (result.replicates['seconds_per_iteration'] > 0).all()


def median_sweep_seconds(G: int, part: vi.Partition) -> float:
	design = gen_crossed_mcar(G, G, 1.0 - 16.0 / G, rng_seed=G)
	data = simulate_responses(design, GAUSSIAN, rng_seed=G)
	result = vi.fit(data, GAUSSIAN, PriorSpec.default(data), part, tol=0.0, max_iter=5)
	return float(np.median(result.sweep_seconds))


@pytest.mark.slow
def test_sweep_cost_scaling():
	ratios = {}
	for family, part in (('ff', vi.Partition.fully_factorized(2)), ('pf', vi.Partition.partially_factorized(2)), ('uf', vi.Partition.unfactorized(2))):
		ratios[family] = median_sweep_seconds(512, part) / median_sweep_seconds(256, part)

	# n doubles with G here: linear cost predicts 2
	assert ratios['ff'] <= 3.0
	assert ratios['pf'] <= 3.0
	assert ratios['uf'] > ratios['pf']
