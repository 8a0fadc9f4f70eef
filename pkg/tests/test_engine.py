from __future__ import annotations

import numpy as np
import pytest

from crossvi import core
from crossvi.model import DomainError, MixedModelData, PriorSpec
from crossvi.vi import (
	Partition, StaleFactorsError, SweepInfo, VariationalState,
	apply_lambda, collapsed_cov, compute_moments, eta_moments, exact_target_moments, export_q_precision, extract_lambda_blocks, fit, fit_report,
	init_state, joint_precision, lambda_logdet, marginal_variances, predict_eta, prepare_block, q_mean, refresh, sample_q,
	update_phi, update_random_block, variance_components,
)

from conftest import BINOMIAL, GAUSSIAN, crossed


def prepared(data: MixedModelData, lik, part: Partition) -> VariationalState:
	state = init_state(data, lik, PriorSpec.default(data), part)
	refresh(state)
	for k in part.uncollapsed:
		prepare_block(state, k)
	return state


def ascend(state: VariationalState, sweeps: int = 5000, tol: float = 1e-13) -> VariationalState:
	"block updates at fixed φ until the means stop moving"
	for _ in range(sweeps):
		before = q_mean(state)
		for k in state.part.uncollapsed:
			update_random_block(state, k)
		if np.max(np.abs(q_mean(state) - before)) < tol:
			break
	return state


def dense_lambda(state: VariationalState, k: int) -> np.ndarray:
	s = state.surrogate
	assert s
	C = state.part.collapsed
	W_k = s.W_blocks[k].toarray()
	precision = W_k.T @ W_k + s.penalty(k).toarray()
	if C:
		W_C = s.W(C).toarray()
		A = W_C.T @ W_C + s.P(C).toarray()
		precision -= W_k.T @ W_C @ np.linalg.solve(A, W_C.T @ W_k)
	return np.linalg.inv(precision)


def random_instances(count: int, seed: int) -> list[MixedModelData]:
	rng = np.random.default_rng(seed)
	instances = []
	for _ in range(count):
		G1, G2 = rng.integers(2, 9, size=2)
		instances.append(crossed(rng, int(G1), int(G2), int(rng.integers(20, 61))))
	return instances


@pytest.mark.parametrize('family', ['ff', 'pf', 'uf'])
def test_fixed_phi_means_are_exact(family):
	for data in random_instances(20, seed=1):
		part = {'ff': Partition.fully_factorized(2), 'pf': Partition.partially_factorized(2), 'uf': Partition.unfactorized(2)}[family]
		state = ascend(prepared(data, GAUSSIAN, part))
		assert state.surrogate
		exact = exact_target_moments(state.surrogate, Partition.unfactorized(2))
		np.testing.assert_allclose(q_mean(state), exact.mean, atol=1e-8)


def test_unfactorized_covariance_is_exact(gaussian_data):
	state = ascend(prepared(gaussian_data, GAUSSIAN, Partition.unfactorized(2)))
	assert state.surrogate
	cov = np.linalg.inv(joint_precision(state.surrogate))
	np.testing.assert_allclose(collapsed_cov(state), cov, atol=1e-8)
	np.testing.assert_allclose(np.linalg.inv(export_q_precision(state)), cov, atol=1e-8)


@pytest.mark.parametrize('lik', [GAUSSIAN, BINOMIAL])
def test_implicit_lambda_matches_dense(lik, partition, rng):
	data = crossed(rng, 6, 5, 40, binomial=lik == BINOMIAL)
	state = prepared(data, lik, partition)

	for k in partition.uncollapsed:
		Lambda = dense_lambda(state, k)
		a = rng.standard_normal(Lambda.shape[0])
		np.testing.assert_allclose(apply_lambda(state, k, a), Lambda @ a, rtol=1e-8, atol=1e-12)

		block = state.blocks[k]
		blocks = extract_lambda_blocks(state, k)
		for g in range(block.G):
			index = slice(g * block.D, (g + 1) * block.D)
			np.testing.assert_allclose(blocks[g], Lambda[index, index], rtol=1e-8, atol=1e-12)

		sign, value = np.linalg.slogdet(Lambda)
		assert sign > 0
		assert lambda_logdet(state, k) == pytest.approx(value, rel=1e-8)


def test_implicit_lambda_with_random_slopes(rng):
	data = crossed(rng, 5, 4, 36, slope=True)
	state = prepared(data, GAUSSIAN, Partition.of((0, 2), 2))
	Lambda = dense_lambda(state, 1)
	np.testing.assert_allclose(extract_lambda_blocks(state, 1).reshape(5, 2, 2)[3], Lambda[6:8, 6:8], rtol=1e-8)
	assert lambda_logdet(state, 1) == pytest.approx(np.linalg.slogdet(Lambda)[1], rel=1e-8)


def test_factors_go_stale_after_refresh(gaussian_data):
	state = prepared(gaussian_data, GAUSSIAN, Partition.partially_factorized(2))
	refresh(state)
	with pytest.raises(StaleFactorsError):
		apply_lambda(state, 1, np.zeros(6))
	prepare_block(state, 1)
	assert apply_lambda(state, 1, np.zeros(6)).shape == (6,)


def test_moments_match_dense_q_covariance(partition, rng):
	data = crossed(rng, 6, 5, 40)
	state = ascend(prepared(data, GAUSSIAN, partition), sweeps=50)
	cov_q = np.linalg.inv(export_q_precision(state))
	Z = np.hstack([b.Z.toarray() for b in state.blocks])

	moments = compute_moments(state)
	np.testing.assert_allclose(moments.eta_mean, Z @ q_mean(state), rtol=1e-8, atol=1e-10)
	np.testing.assert_allclose(moments.eta_variance, np.einsum('ij,jk,ik->i', Z, cov_q, Z), rtol=1e-8, atol=1e-10)
	np.testing.assert_allclose(np.concatenate(marginal_variances(state, moments)), np.diagonal(cov_q), rtol=1e-8, atol=1e-12)

	assert state.surrogate
	C = state.surrogate.indices(partition.collapsed)
	if C.size:
		np.testing.assert_allclose(moments.cov_C, cov_q[np.ix_(C, C)], rtol=1e-8, atol=1e-10)

	offsets = state.surrogate.offsets
	mean = q_mean(state)
	for k in range(1, 3):
		block = mean[offsets[k]:offsets[k + 1]]
		expected = block @ block + np.trace(cov_q[offsets[k]:offsets[k + 1], offsets[k]:offsets[k + 1]])
		assert moments.alpha_second[k - 1][0, 0] == pytest.approx(expected, rel=1e-8)


def test_fully_factorized_eta_moments_need_no_collapsed_law(rng):
	data = crossed(rng, 5, 4, 30)
	state = ascend(prepared(data, GAUSSIAN, Partition.fully_factorized(2)), sweeps=20)
	assert state.collapsed_law is None

	cov_q = np.linalg.inv(export_q_precision(state))
	Z = np.hstack([b.Z.toarray() for b in state.blocks])
	mean, variance = eta_moments(state)
	np.testing.assert_allclose(mean, Z @ q_mean(state), rtol=1e-8, atol=1e-10)
	np.testing.assert_allclose(variance, np.einsum('ij,jk,ik->i', Z, cov_q, Z), rtol=1e-8, atol=1e-10)


def test_gaussian_phi_update(gaussian_data, prior):
	state = ascend(prepared(gaussian_data, GAUSSIAN, Partition.partially_factorized(2)), sweeps=20)
	moments = compute_moments(state)
	weight = state.phi.e_inv_sigma2()
	phi = update_phi(state, moments)

	assert phi.a == [2.0 + 6, 2.0 + 5]
	for k in (1, 2):
		np.testing.assert_allclose(phi.scale[k - 1], prior.iw_scale[k - 1] + weight * moments.alpha_second[k - 1])

	assert phi.a_sigma2 == (40 + 11) / 2.0
	residual = np.sum((gaussian_data.y - moments.eta_mean) ** 2 + moments.eta_variance)
	penalty = sum(np.trace(phi.e_sigma_inv(k) @ moments.alpha_second[k - 1]) for k in (1, 2))
	assert phi.b_sigma2 == pytest.approx(0.5 * residual + 0.5 * penalty)
	assert state.phi.a_sigma2 != phi.a_sigma2 or state.phi.b_sigma2 != phi.b_sigma2


def test_binomial_phi_update_tilts_by_second_moment(binomial_data):
	state = ascend(prepared(binomial_data, BINOMIAL, Partition.partially_factorized(2)), sweeps=20)
	moments = compute_moments(state)
	phi = update_phi(state, moments)
	np.testing.assert_allclose(phi.c, np.sqrt(moments.eta_second))
	np.testing.assert_array_equal(phi.b, binomial_data.trials)
	assert phi.a_sigma2 is None


@pytest.mark.parametrize('lik', [GAUSSIAN, BINOMIAL])
def test_elbo_never_decreases(lik, partition, rng):
	data = crossed(rng, 6, 5, 50, binomial=lik == BINOMIAL)
	result = fit(data, lik, PriorSpec.default(data), partition, tol=0.0, max_iter=200)
	assert len(result.elbo_trace) == 201
	assert np.all(np.diff(result.elbo_trace) >= -1e-9)


def test_fit_reports_sweeps(gaussian_data, prior):
	events: list[SweepInfo] = []
	on_sweep = core.Event[SweepInfo]()
	on_sweep.add(events.append)

	result = fit(gaussian_data, GAUSSIAN, prior, Partition.partially_factorized(2), on_sweep=on_sweep)
	assert result.converged
	assert len(result.elbo_trace) == result.iterations + 1
	assert [e.iteration for e in events] == list(range(1, result.iterations + 1))
	assert abs(events[-1].delta) < 1e-6
	assert result.seconds_per_iteration > 0

	limited = fit(gaussian_data, GAUSSIAN, prior, Partition.fully_factorized(2), tol=0.0, max_iter=3)
	assert not limited.converged
	assert limited.iterations == 3


def test_sweep_listener_can_stop_a_fit(gaussian_data, prior):
	on_sweep = core.Event[SweepInfo]()
	on_sweep.add(lambda info: info.iteration >= 2)

	result = fit(gaussian_data, GAUSSIAN, prior, Partition.fully_factorized(2), tol=0.0, on_sweep=on_sweep)
	assert result.iterations == 2
	assert not result.converged
	assert len(result.elbo_trace) == 3


def test_fixed_phi_mode_keeps_phi(gaussian_data, prior):
	result = fit(gaussian_data, GAUSSIAN, prior, Partition.fully_factorized(2), update_phi_enabled=False, max_iter=50)
	initial = init_state(gaussian_data, GAUSSIAN, prior, Partition.fully_factorized(2)).phi
	assert result.state.phi.b_sigma2 == initial.b_sigma2
	np.testing.assert_array_equal(result.state.phi.scale[0], initial.scale[0])


def test_report_is_serializable(gaussian_data, prior):
	result = fit(gaussian_data, GAUSSIAN, prior, Partition.partially_factorized(2))
	report = core.json_decode(core.json_encode(fit_report(result)))
	assert report.converged
	assert report.partition.family == 'pf'
	assert [b['name'] for b in report.blocks] == ['fixed', 'a', 'b']
	assert len(report.blocks[1]['mean']) == 6
	assert [b['offset'] for b in report.blocks] == [0, 2, 8]
	assert report.variance_components['sigma2'] > 0


def test_variance_components(gaussian_data, prior):
	state = fit(gaussian_data, GAUSSIAN, prior, Partition.partially_factorized(2)).state
	components = variance_components(state)
	assert set(components) == {'a', 'b', 'sigma2'}
	assert components['a'][0, 0] == pytest.approx(state.phi.scale[0][0, 0] / (state.phi.a[0] - 2.0))


def test_prediction_on_training_rows(gaussian_data, prior):
	state = fit(gaussian_data, GAUSSIAN, prior, Partition.partially_factorized(2)).state
	mean, variance = predict_eta(state, gaussian_data.X, gaussian_data.memberships)
	moments = compute_moments(state)
	np.testing.assert_allclose(mean, moments.eta_mean, rtol=1e-10)
	np.testing.assert_allclose(variance, moments.eta_variance, rtol=1e-10)


def test_prediction_refuses_unseen_levels(rng):
	data = crossed(rng, 4, 3, 20)
	data.factors[0].levels = 5
	state = fit(data, GAUSSIAN, PriorSpec.default(data), Partition.partially_factorized(2), max_iter=20).state
	with pytest.raises(DomainError):
		predict_eta(state, np.ones((1, 2)), [np.array([5]), np.array([1])])


def test_samples_from_q(gaussian_data, prior):
	state = fit(gaussian_data, GAUSSIAN, prior, Partition.partially_factorized(2)).state
	draws = sample_q(state, 40000, seed=3)
	cov = np.linalg.inv(export_q_precision(state))
	se = np.sqrt(np.diagonal(cov) / draws.shape[0])
	assert np.all(np.abs(draws.mean(axis=0) - q_mean(state)) < 5 * se)
	np.testing.assert_allclose(np.var(draws, axis=0), np.diagonal(cov), rtol=0.05)
	np.testing.assert_array_equal(draws[:3], sample_q(state, 40000, seed=3)[:3])


def test_infinite_tolerance_stops_after_one_sweep(gaussian_data, prior):
	result = fit(gaussian_data, GAUSSIAN, prior, Partition.partially_factorized(2), tol=np.inf)
	assert result.iterations == 1
	assert result.converged
	assert len(result.elbo_trace) == 2


def test_elbo_grows_with_the_collapsed_set(rng):
	data = crossed(rng, 6, 5, 40)
	prior = PriorSpec.default(data)
	values = []
	for part in (Partition.fully_factorized(2), Partition.partially_factorized(2), Partition.unfactorized(2)):
		result = fit(data, GAUSSIAN, prior, part, tol=1e-10, max_iter=5000, update_phi_enabled=False)
		assert result.converged
		values.append(result.elbo_trace[-1])

	ff, pf, uf = values
	assert ff <= pf + 1e-9
	assert pf <= uf + 1e-9


@pytest.mark.parametrize('K, collapsed', [(1, (0,)), (2, (0, 1)), (2, (0, 2))])
def test_single_uncollapsed_block_is_exact_after_one_sweep(K, collapsed, rng):
	data = crossed(rng, 6, 5, 40)
	if K == 1:
		data = MixedModelData.from_arrays(data.y, data.memberships[:1], X=data.X, levels=[6])
	part = Partition.of(collapsed, K)
	assert len(part.uncollapsed) == 1

	first = fit(data, GAUSSIAN, PriorSpec.default(data), part, tol=0.0, max_iter=1, update_phi_enabled=False).state
	assert first.surrogate
	exact = exact_target_moments(first.surrogate, Partition.unfactorized(K))
	np.testing.assert_allclose(q_mean(first), exact.mean, rtol=1e-10, atol=1e-12)

	second = fit(data, GAUSSIAN, PriorSpec.default(data), part, tol=0.0, max_iter=2, update_phi_enabled=False).state
	np.testing.assert_allclose(q_mean(second), q_mean(first), rtol=1e-10, atol=1e-12)
