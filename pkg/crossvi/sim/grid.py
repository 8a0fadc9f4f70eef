from __future__ import annotations
from typing import Any

from dataclasses import dataclass, field
import os
import threading

import numpy as np
import pandas as pd

from ..import core
from ..import persistance
from ..import vi
from ..gibbs import gibbs_gaussian
from ..metrics import uqf_analytic, uqf_split_sample
from ..model import DomainError, LikelihoodKind, MixedModelData, PriorSpec, param_layout
from ..settings import Settings
from .designs import gen_crossed_mcar
from .responses import simulate_responses

FAMILIES = ('ff', 'pf', 'uf')

# held around every fit so sweep timings never overlap; Gibbs chains still run concurrently
_fit_lock = threading.Lock()


@dataclass
class SimConfig:
	likelihood: LikelihoodKind = LikelihoodKind.gaussian
	G_grid: list[int] = field(default_factory=lambda: [2 ** e for e in range(5, 9)])
	missing_prob: float = 0.9
	replicates: int = 20
	true_sigma: float = 1.0
	rng_seed: int = 0
	tol: float|None = None
	max_iter: int|None = None
	split_sample: bool = True
	gibbs_iters: int|None = None
	gibbs_burn_in: int|None = None
	jobs: int|None = None

	def __post_init__(self):
		self.likelihood = LikelihoodKind.parse(self.likelihood)
		if not self.G_grid:
			raise DomainError('The level grid is empty')
		if any(G < 2 for G in self.G_grid):
			raise DomainError('Every grid entry needs at least two levels', G_grid=self.G_grid)
		if not 0.0 <= self.missing_prob < 1.0:
			raise DomainError('missing_prob must lie in [0, 1)', missing_prob=self.missing_prob)
		if self.replicates < 1:
			raise DomainError('At least one replicate is required', replicates=self.replicates)

	@staticmethod
	def full_scale(likelihood: LikelihoodKind|str = LikelihoodKind.gaussian, rng_seed: int = 0) -> SimConfig:
		return SimConfig(LikelihoodKind.parse(likelihood), [2 ** e for e in range(5, 11)], replicates=100, rng_seed=rng_seed)

	def into_json(self) -> dict[str, Any]:
		return {
			'likelihood': self.likelihood.value,
			'G_grid': self.G_grid,
			'missing_prob': self.missing_prob,
			'replicates': self.replicates,
			'true_sigma': self.true_sigma,
			'rng_seed': self.rng_seed,
			'tol': self.tol,
			'max_iter': self.max_iter,
			'split_sample': self.split_sample,
			'gibbs_iters': self.gibbs_iters,
			'gibbs_burn_in': self.gibbs_burn_in,
		}

	@staticmethod
	def from_json(json: dict[str, Any]) -> SimConfig:
		known = SimConfig.__dataclass_fields__.keys()
		return SimConfig(**{key: value for key, value in json.items() if key in known})


@dataclass
class GridResult:
	replicates: pd.DataFrame
	table: pd.DataFrame
	manifest: dict[str, Any]


def replicate_seeds(config: SimConfig, G: int, replicate: int) -> list[int]:
	"design, response and sampler seeds of one replicate, independent of scheduling order"
	return [int(s) for s in core.derive_seed(config.rng_seed, G, replicate).generate_state(3)]


def _partition(family: str, K: int) -> vi.Partition:
	if family == 'ff':
		return vi.Partition.fully_factorized(K)
	if family == 'uf':
		return vi.Partition.unfactorized(K)
	return vi.Partition.partially_factorized(K)


def _fit_row(config: SimConfig, data: MixedModelData, prior: PriorSpec, family: str, pi_samples: np.ndarray|None, seed: int) -> dict[str, Any]:
	part = _partition(family, data.K)
	with _fit_lock:
		result = vi.fit(data, config.likelihood, prior, part, tol=config.tol, max_iter=config.max_iter)
	state = result.state
	assert state.surrogate

	Q = vi.joint_precision(state.surrogate)
	q_precision = vi.export_q_precision(state)
	row: dict[str, Any] = {
		'family': family,
		'partition': list(part.collapsed),
		'iterations': result.iterations,
		'converged': result.converged,
		'elbo': result.elbo_trace[-1],
		'seconds_per_iteration': result.seconds_per_iteration,
		'uqf_fixed_phi': uqf_analytic(np.linalg.inv(Q), q_precision),
		'uqf_split_sample': np.nan,
	}
	if pi_samples is not None:
		row['uqf_split_sample'] = uqf_split_sample(pi_samples, q_precision, rng_seed=seed).value
	return row


def run_replicate(config: SimConfig, G: int, replicate: int) -> list[dict[str, Any]]:
	design_seed, response_seed, chain_seed = replicate_seeds(config, G, replicate)
	design = gen_crossed_mcar(G, G, config.missing_prob, design_seed)
	data = simulate_responses(design, config.likelihood, response_seed, sigma=config.true_sigma)
	prior = PriorSpec.default(data)

	pi_samples = None
	parameters = param_layout(data).total
	if config.split_sample and config.likelihood == LikelihoodKind.gaussian and parameters <= Settings.guard_dimension:
		draws = gibbs_gaussian(data, prior, iters=config.gibbs_iters, burn_in=config.gibbs_burn_in, rng_seed=chain_seed)
		pi_samples = draws.theta_draws

	common = {
		'G': G,
		'replicate': replicate,
		'n': data.n,
		'parameters': parameters,
		'design_seed': design_seed,
		'response_seed': response_seed,
		'design_attempts': design.attempts,
	}
	return [{**common, **_fit_row(config, data, prior, family, pi_samples, chain_seed)} for family in FAMILIES]


def summarize(replicates: pd.DataFrame) -> pd.DataFrame:
	"one row per (G, family): mean UQF, mean time per iteration and mean iterations to converge"
	ok = replicates[replicates['error'].isna()] if 'error' in replicates else replicates
	if ok.empty:
		return pd.DataFrame(columns=['G', 'family', 'partition', 'uqf_fixed_phi', 'uqf_split_sample', 'seconds_per_iteration', 'iterations', 'replicates'])

	table = ok.groupby(['G', 'family'], sort=True).agg(
		partition=('partition', 'first'),
		uqf_fixed_phi=('uqf_fixed_phi', 'mean'),
		uqf_split_sample=('uqf_split_sample', 'mean'),
		seconds_per_iteration=('seconds_per_iteration', 'mean'),
		iterations=('iterations', 'mean'),
		replicates=('replicate', 'count'),
	).reset_index()
	table['partition'] = table['partition'].map(lambda c: '{' + ','.join(str(k) for k in c) + '}')
	return table


async def _run_all(config: SimConfig, log: core.Logger) -> list[dict[str, Any]]:
	jobs = config.jobs or Settings.jobs
	cells = [(G, r) for G in config.G_grid for r in range(config.replicates)]
	results = await core.gather_results(*[core.run_in_executor(run_replicate, config, G, r, jobs=jobs) for G, r in cells])

	rows: list[dict[str, Any]] = []
	for (G, r), result in zip(cells, results):
		if isinstance(result, BaseException):
			log.error(f'replicate {r} at G={G} failed: {result}')
			rows.append({'G': G, 'replicate': r, 'error': f'{type(result).__name__}: {result}'})
			continue
		rows.extend(result)
	return rows


def run_grid(config: SimConfig, log: core.Logger = core.stdio) -> GridResult:
	"""
	Fits every family on every replicate of every grid entry. A failed replicate is recorded with its error and left out of the summary.
	"""
	watch = core.stopwatch('grid')
	rows = core.run(_run_all(config, log))

	replicates = pd.DataFrame(rows)
	if 'error' not in replicates:
		replicates['error'] = None
	replicates = replicates.sort_values(['G', 'replicate'], kind='stable').reset_index(drop=True)

	table = summarize(replicates)
	manifest = {
		'config': config.into_json(),
		'config_hash': core.config_hash(config.into_json()),
		'uqf_fixed_phi': 'fixed-φ UQF: q(θ) against π(θ) at the converged q(φ)',
		'uqf_split_sample': 'split-sample UQF against Gibbs draws of the full posterior' if config.likelihood == LikelihoodKind.gaussian else None,
		'failures': int(replicates['error'].notna().sum()),
		'seconds_per_iteration': 'wall clock per sweep, fits timed one at a time',
		'seconds': watch.elapsed(),
		'versions': {'numpy': np.__version__, 'pandas': pd.__version__},
	}
	log.info(f'grid finished in {manifest["seconds"]:.1f}s with {manifest["failures"]} failures')
	return GridResult(replicates, table, manifest)


def write_grid(result: GridResult, directory: str):
	core.make_directory(directory)
	result.table.to_csv(os.path.join(directory, 'experiment.csv'), index=False)
	result.replicates.to_csv(os.path.join(directory, 'replicates.csv'), index=False)
	persistance.save(os.path.join(directory, 'manifest.json'), result.manifest, config=result.manifest['config'])
