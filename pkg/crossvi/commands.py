from __future__ import annotations
from typing import Any

import numpy as np
import pandas as pd

from .import core
from .import persistance
from .import vi
from .command import Argument, Command
from .configuration import RunConfig, default_prior, load_data, resolve_partition
from .gibbs import export_csv, gibbs_gaussian, load_draws, save_draws
from .lab import GaussianTarget, duality_check
from .metrics import tv_accuracy, uqf_analytic, uqf_split_sample
from .model import DomainError, LikelihoodKind, MixedModelData
from .sim import SimConfig, gen_biregular, gen_crossed_mcar, gen_nested, run_grid, simulate_responses, write_grid
from .theory import bounds_report, weighted_counts


def model_hash(data: MixedModelData) -> str:
	return core.config_hash({'y': data.y, 'X': data.X, 'memberships': data.memberships})


def _fit(config: RunConfig, data: MixedModelData) -> vi.FitResult:
	part = resolve_partition(config.partition, data)
	on_sweep = core.Event[vi.SweepInfo]()
	on_sweep.add(lambda info: core.debug(f'sweep {info.iteration}: elbo={info.elbo:.8f} Δ={info.delta:.3e}'))
	return vi.fit(data, config.likelihood, default_prior(data), part, tol=config.tol, max_iter=config.max_iter, on_sweep=on_sweep)


def fixed_phi_uqf(result: vi.FitResult) -> float:
	"UQF of q(θ) against π(θ) at the converged q(φ)"
	state = result.state
	assert state.surrogate
	Q = vi.joint_precision(state.surrogate)
	return uqf_analytic(np.linalg.inv(Q), vi.export_q_precision(state))


def fit(config: RunConfig):
	data = load_data(config)
	result = _fit(config, data)
	report = vi.fit_report(result)
	report['config'] = config.into_json()
	persistance.save(config.output('fit.json'), report, config=config.into_json())


def uqf(config: RunConfig):
	data = load_data(config)
	result = _fit(config, data)
	state = result.state

	metrics: dict[str, Any] = {
		'partition': state.part,
		'converged': result.converged,
		'uqf_fixed_phi': fixed_phi_uqf(result),
	}

	theta = None
	if draws := config.options.get('draws'):
		theta, sidecar = load_draws(draws)
		if sidecar.get('model_hash') not in (None, model_hash(data)):
			core.warn(f'draws in `{draws}` were produced for a different model')
	elif config.options.get('gibbs'):
		if config.likelihood != LikelihoodKind.gaussian:
			raise DomainError('The Gibbs oracle supports the Gaussian likelihood only')
		theta = gibbs_gaussian(data, default_prior(data), rng_seed=config.seed).theta_draws

	if theta is not None:
		q_precision = vi.export_q_precision(state)
		if theta.shape[1] != q_precision.shape[0]:
			raise DomainError(f'Draws have {theta.shape[1]} columns, the model has {q_precision.shape[0]} parameters')

		metrics['uqf_split_sample'] = uqf_split_sample(theta, q_precision, rng_seed=config.seed)
		q_draws = vi.sample_q(state, theta.shape[0], seed=config.seed)
		accuracy = [tv_accuracy(theta[:, j], q_draws[:, j]) for j in range(theta.shape[1])]
		metrics['tv_accuracy'] = {'mean': float(np.mean(accuracy)), 'min': float(np.min(accuracy)), 'per_parameter': accuracy}

	persistance.save(config.output('metrics.json'), metrics, config=config.into_json())


def bounds(config: RunConfig):
	data = load_data(config)
	result = _fit(config, data)
	s = result.state.surrogate
	assert s

	counts = weighted_counts(s, data)
	T = [float(np.squeeze(t)) for t in s.T_blocks[1:]]
	report = bounds_report(counts, T, data.n).into_json()
	report['partition'] = result.state.part
	report['pf_auto'] = resolve_partition('pf:auto', data)
	report['uqf_fixed_phi'] = fixed_phi_uqf(result)
	report['T'] = T
	persistance.save(config.output('bounds.json'), report, config=config.into_json())


def gibbs(config: RunConfig):
	if config.likelihood != LikelihoodKind.gaussian:
		raise DomainError('The Gibbs oracle supports the Gaussian likelihood only')

	data = load_data(config)
	options = config.options
	draws = gibbs_gaussian(data, default_prior(data), iters=options.get('iters'), burn_in=options.get('burn_in'), thin=options.get('thin'), rng_seed=config.seed)
	save_draws(config.output('draws.bin'), draws, model_hash(data))
	if options.get('csv'):
		export_csv(config.output('draws.csv'), draws)


def simulate(config: RunConfig):
	options = config.options
	generator = options.get('generator') or 'mcar'

	if generator == 'mcar':
		G1, G2 = options.get('levels') or [32, 32]
		design = gen_crossed_mcar(G1, G2, options.get('missing_prob', 0.9), config.seed)
	elif generator == 'biregular':
		d1, d2 = options.get('degrees') or [4, 4]
		design = gen_biregular(options.get('n') or 64, d1, d2, config.seed)
	else:
		G1 = (options.get('levels') or [8])[0]
		design = gen_nested(G1, options.get('ratio') or 2, config.seed)

	data = simulate_responses(design, config.likelihood, config.seed + 1)

	frame = pd.DataFrame({'y': data.y, **{f.name: m for f, m in zip(data.factors, data.memberships)}})
	core.make_directory(config.out)
	frame.to_csv(config.output('simulated.csv'), index=False)
	persistance.save(config.output('simulated_schema.json'), {'response': 'y', 'factors': [f.name for f in data.factors], 'intercept': True})
	persistance.save(config.output('simulated.json'), data.metadata, config=config.into_json())


def experiment(config: RunConfig):
	options = config.options
	if options.get('full_scale'):
		sim = SimConfig.full_scale(config.likelihood, config.seed)
	else:
		sim = SimConfig(
			likelihood=config.likelihood,
			G_grid=options.get('grid') or [32, 64, 128, 256],
			missing_prob=options.get('missing_prob', 0.9),
			replicates=options.get('replicates') or 20,
			rng_seed=config.seed,
			tol=config.tol,
			max_iter=config.max_iter,
			split_sample=not options.get('no_split_sample'),
			gibbs_iters=options.get('gibbs_iters'),
			gibbs_burn_in=options.get('gibbs_burn_in'),
			jobs=config.jobs,
		)
	write_grid(run_grid(sim), config.out)


def rs_lab(config: RunConfig):
	options = config.options
	sizes = options.get('blocks') or [2, 2, 2]
	target = GaussianTarget.random(sizes, core.rng(config.seed), options.get('condition') or 10.0)
	part = vi.Partition.of(options.get('collapsed') or [], len(sizes) - 1)

	report = duality_check(target, part, options.get('sweeps') or 20, options.get('runs') or 10000, config.seed)
	frame = pd.DataFrame({'sweep': np.arange(report.mean_gaps.shape[0]), 'mean_relative_gap': report.mean_gaps})
	core.make_directory(config.out)
	frame.to_csv(config.output('rs_lab.csv'), index=False)
	persistance.save(config.output('rs_lab.json'), report.into_json(), config=config.into_json())


class Commands:
	fit = Command(
		name='Fit',
		key='fit',
		action=fit,
		help='Fit q(θ)q(φ) by coordinate ascent and write fit.json',
		outputs=['fit.json'],
	)
	uqf = Command(
		name='UQF',
		key='uqf',
		action=uqf,
		help='Fixed-φ UQF of a fit, plus the split-sample estimate and TV accuracy against posterior draws',
		arguments=[
			Argument('--draws', help='draws.bin written by the gibbs command'),
			Argument('--gibbs', action='store_true', help='run the Gibbs oracle instead of reading draws'),
		],
		outputs=['metrics.json'],
		flags=Command.requires_data|Command.uses_partition|Command.uses_seed,
	)
	bounds = Command(
		name='Bounds',
		key='bounds',
		action=bounds,
		help='Theoretical UQF bounds at the fitted q(φ)',
		outputs=['bounds.json'],
	)
	gibbs = Command(
		name='Gibbs',
		key='gibbs',
		action=gibbs,
		help='Blocked Gibbs sampler for the Gaussian model',
		arguments=[
			Argument('--iters', type=int),
			Argument('--burn-in', type=int, dest='burn_in'),
			Argument('--thin', type=int),
			Argument('--csv', action='store_true', help='also write draws.csv'),
		],
		outputs=['draws.bin', 'draws.json'],
		flags=Command.requires_data|Command.uses_seed,
	)
	simulate = Command(
		name='Simulate',
		key='simulate',
		action=simulate,
		help='Generate a design and responses from the model',
		arguments=[
			Argument('--generator', choices=['mcar', 'biregular', 'nested'], default='mcar'),
			Argument('--levels', type=int, nargs='+'),
			Argument('--missing-prob', type=float, default=0.9, dest='missing_prob'),
			Argument('--n', type=int),
			Argument('--degrees', type=int, nargs=2),
			Argument('--ratio', type=int),
		],
		outputs=['simulated.csv', 'simulated_schema.json', 'simulated.json'],
		flags=Command.uses_seed,
	)
	experiment = Command(
		name='Experiment',
		key='experiment',
		action=experiment,
		help='UQF and time per iteration of every family over a grid of level counts',
		arguments=[
			Argument('--grid', type=int, nargs='+'),
			Argument('--replicates', type=int),
			Argument('--missing-prob', type=float, default=0.9, dest='missing_prob'),
			Argument('--no-split-sample', action='store_true', dest='no_split_sample'),
			Argument('--gibbs-iters', type=int, dest='gibbs_iters'),
			Argument('--gibbs-burn-in', type=int, dest='gibbs_burn_in'),
			Argument('--full-scale', action='store_true', dest='full_scale'),
		],
		outputs=['experiment.csv', 'replicates.csv', 'manifest.json'],
		flags=Command.uses_seed,
	)
	rs_lab = Command(
		name='Random-scan lab',
		key='rs-lab',
		action=rs_lab,
		help='Random-scan ascent on a random Gaussian target against the UQF rate bracket',
		arguments=[
			Argument('--blocks', type=int, nargs='+'),
			Argument('--collapsed', type=int, nargs='*'),
			Argument('--sweeps', type=int),
			Argument('--runs', type=int),
			Argument('--condition', type=float),
		],
		outputs=['rs_lab.json', 'rs_lab.csv'],
		flags=Command.uses_seed,
	)
