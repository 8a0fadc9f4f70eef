from __future__ import annotations

import os

import numpy as np
import pandas as pd

from ..import core
from ..import persistance
from .sampler import GibbsDraws


def sidecar_path(path: str) -> str:
	root, _ = os.path.splitext(path)
	return root + '.json'


def save_draws(path: str, draws: GibbsDraws, model_hash: str|None = None):
	"""
	θ draws as little-endian float64 in column-major order, with a JSON sidecar next to it.
	"""
	directory = os.path.dirname(path)
	if directory:
		core.make_directory(directory)

	draws.theta_draws.T.astype('<f8').tofile(path)
	sidecar = draws.into_json()
	sidecar['order'] = 'F'
	sidecar['dtype'] = '<f8'
	sidecar['model_hash'] = model_hash
	persistance.save(sidecar_path(path), sidecar)


def load_draws(path: str) -> tuple[np.ndarray, core.JSON]:
	sidecar = persistance.load(sidecar_path(path))
	if not sidecar:
		raise core.Error(f'Missing or outdated sidecar for `{path}`', path=path)

	values = np.fromfile(path, dtype='<f8')
	theta = values.reshape((sidecar.rows, sidecar.cols), order='F')
	return theta, sidecar


def draws_frame(draws: GibbsDraws) -> pd.DataFrame:
	columns = draws.names if len(draws.names) == draws.theta_draws.shape[1] else [f'theta{j}' for j in range(draws.theta_draws.shape[1])]
	frame = pd.DataFrame(draws.theta_draws, columns=columns)
	frame.insert(0, 'sigma2', draws.sigma2_draws)
	return frame


def export_csv(path: str, draws: GibbsDraws):
	draws_frame(draws).to_csv(path, index_label='draw')
