from __future__ import annotations

import numpy as np
import pytest

from crossvi.metrics import uqf_analytic
from crossvi.model import MixedModelData, PriorSpec
from crossvi.sim import gen_biregular, gen_crossed_mcar, gen_nested, simulate_responses
from crossvi.theory import (
	PreconditionError, UnsupportedRestrictionError,
	bounds_report, ff_bound, is_balanced, is_binary, lambda_aux, nested_pairs, pf_uqf_balanced, rg_bound, weighted_counts,
)
from crossvi.vi import Partition, VariationalState, export_q_precision, init_state, joint_precision, prepare_block, refresh

from conftest import GAUSSIAN, crossed


def fixed_phi_state(data: MixedModelData, part: Partition) -> VariationalState:
	state = init_state(data, GAUSSIAN, PriorSpec.default(data), part)
	refresh(state)
	for k in part.uncollapsed:
		prepare_block(state, k)
	return state


def analytic_uqf(state: VariationalState) -> float:
	assert state.surrogate
	return uqf_analytic(np.linalg.inv(joint_precision(state.surrogate)), export_q_precision(state))


def penalties(state: VariationalState) -> list[float]:
	assert state.surrogate
	return [float(np.squeeze(t)) for t in state.surrogate.T_blocks[1:]]


def test_balanced_closed_form_is_exact():
	rng = np.random.default_rng(8)
	for replicate in range(20):
		d = int(rng.integers(4, 9))
		G = int(rng.choice([8, 16, 32, 64]))
		design = gen_biregular(d * G, d, d, rng_seed=replicate)
		data = simulate_responses(design, GAUSSIAN, rng_seed=replicate)
		state = fixed_phi_state(data, Partition.partially_factorized(2))
		assert state.surrogate

		counts = weighted_counts(state.surrogate, data)
		assert is_balanced(counts)
		uqf, aux = pf_uqf_balanced(counts, penalties(state), data.n)
		assert 0.0 <= aux <= 1.0
		assert analytic_uqf(state) == pytest.approx(uqf, abs=1e-8)


def test_fully_factorized_bound_holds():
	rng = np.random.default_rng(9)
	for replicate in range(50):
		if replicate % 2:
			d = int(rng.integers(3, 7))
			design = gen_biregular(d * 12, d, d, rng_seed=replicate)
		else:
			G1, G2 = rng.integers(3, 13, size=2)
			design = gen_crossed_mcar(int(G1), int(G2), 0.5, rng_seed=replicate)
		data = simulate_responses(design, GAUSSIAN, rng_seed=replicate)
		state = fixed_phi_state(data, Partition.fully_factorized(2))
		assert state.surrogate

		bound = ff_bound(weighted_counts(state.surrogate, data), penalties(state), data.n)
		assert analytic_uqf(state) <= bound + 1e-10


def test_partial_factorization_settles_above_random_graph_bound():
	d = 8
	pf, ff = [], []
	for G in (16, 32, 64, 128):
		design = gen_biregular(d * G, d, d, rng_seed=G)
		data = simulate_responses(design, GAUSSIAN, rng_seed=G)
		pf_state = fixed_phi_state(data, Partition.partially_factorized(2))
		ff_state = fixed_phi_state(data, Partition.fully_factorized(2))
		assert ff_state.surrogate

		pf.append(analytic_uqf(pf_state))
		ff.append(analytic_uqf(ff_state))
		assert ff[-1] <= ff_bound(weighted_counts(ff_state.surrogate, data), penalties(ff_state), data.n) + 1e-10
		assert pf[-1] >= rg_bound(d * G, G, G) - 0.05

	# fixed degree: PF drifts down towards its random-graph limit, FF stays put
	assert all(abs(later - earlier) <= 0.1 for earlier, later in zip(pf, pf[1:]))
	assert max(ff) - min(ff) <= 0.01
	assert all(f < p for f, p in zip(ff, pf))


def test_rg_bound_needs_divisible_levels():
	with pytest.raises(PreconditionError):
		rg_bound(100, 8, 10)
	with pytest.raises(PreconditionError):
		rg_bound(16, 0, 8)


def test_nested_design_has_unit_auxiliary_eigenvalue():
	design = gen_nested(5, 3)
	data = MixedModelData.from_arrays(np.zeros(design.n), design.memberships, levels=design.levels)
	counts = weighted_counts(None, data)
	assert lambda_aux(counts) == pytest.approx(1.0)
	assert nested_pairs(counts) == [(1, 2)]

	report = bounds_report(counts, [1.0, 1.0], data.n)
	assert report.lambda_aux == pytest.approx(1.0)
	assert report.laplacian_gap == pytest.approx(0.0, abs=1e-12)


def test_complete_design_has_no_auxiliary_correlation():
	design = gen_crossed_mcar(4, 5, 0.0, rng_seed=0)
	data = MixedModelData.from_arrays(np.zeros(design.n), design.memberships, levels=design.levels)
	counts = weighted_counts(None, data)
	assert is_balanced(counts, tol=0.0)
	assert is_binary(counts)
	assert lambda_aux(counts) == pytest.approx(0.0, abs=1e-12)


def test_rg_bound_value():
	assert rg_bound(400, 25, 25) == pytest.approx(1.0 - np.sqrt(0.5))
	assert rg_bound(16, 8, 8) == 0.0


def test_bounds_report_on_biregular_design():
	design = gen_biregular(48, 4, 4, rng_seed=1)
	data = MixedModelData.from_arrays(np.zeros(design.n), design.memberships, levels=design.levels)
	report = bounds_report(weighted_counts(None, data), [0.5, 0.5], data.n)
	assert report.balanced
	assert report.pf_exact is not None and report.rg_lower is not None
	assert 0.0 <= report.ff_upper <= 1.0
	assert report.into_json()['nested'] == []


def test_restrictions(rng):
	with pytest.raises(UnsupportedRestrictionError):
		weighted_counts(None, crossed(rng, 3, 3, 12, slope=True))

	data = crossed(rng, 4, 3, 30)
	counts = weighted_counts(None, data)
	if not is_balanced(counts):
		with pytest.raises(PreconditionError):
			pf_uqf_balanced(counts, [1.0, 1.0], data.n)

	three = MixedModelData.from_arrays(np.zeros(6), [[1, 2, 1, 2, 1, 2], [1, 1, 2, 2, 3, 3], [1, 2, 3, 1, 2, 3]])
	with pytest.raises(UnsupportedRestrictionError):
		lambda_aux(weighted_counts(None, three))
