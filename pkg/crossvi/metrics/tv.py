from __future__ import annotations

import numpy as np
import scipy.integrate
import scipy.signal

from ..settings import Settings
from .error import DegenerateDensityError, SampleSizeError


def bw_silverman(x: np.ndarray) -> float:
	x_std = float(np.std(x))
	q75, q25 = np.percentile(x, [75, 25])
	x_iqr = q75 - q25
	a = min(x_std, x_iqr / 1.34) if x_iqr > 0 else x_std
	return 0.9 * a * len(x) ** (-0.2)


def binned_kde(x: np.ndarray, bw: float, grid_edges: np.ndarray) -> np.ndarray:
	"""
	Gaussian kernel density on the bin centres: binned relative frequencies convolved with a Gaussian filter.
	"""
	grid_counts, _ = np.histogram(x, bins=grid_edges)
	bin_width = grid_edges[1] - grid_edges[0]
	f = grid_counts / bin_width / len(x)

	# bandwidth in bins
	bw = bw / bin_width
	half = max(1, int(np.ceil(4.0 * bw)))
	kernel = scipy.signal.windows.gaussian(2 * half + 1, bw)

	pdf = scipy.signal.convolve(f, kernel, mode='same', method='direct')
	pdf /= bw * (2 * np.pi) ** 0.5
	return pdf


def tv_accuracy(samples_a: np.ndarray, samples_b: np.ndarray, bins: int|None = None) -> float:
	"""
	1 − ½∫|p_a − p_b| between kernel density estimates of two scalar sample sets, clipped to [0, 1].
	"""
	bins = Settings.kde_bins if bins is None else bins
	a = np.asarray(samples_a, dtype=np.float64).ravel()
	b = np.asarray(samples_b, dtype=np.float64).ravel()
	if a.size == 0 or b.size == 0:
		raise SampleSizeError('Both sample sets must be nonempty')

	bw_a, bw_b = bw_silverman(a), bw_silverman(b)
	if not (bw_a > 0 and bw_b > 0):
		raise DegenerateDensityError('Samples are constant, no density can be estimated', bandwidths=[bw_a, bw_b])

	pooled = np.concatenate([a, b])
	bw_pooled = bw_silverman(pooled)
	lower = pooled.min() - 3.0 * bw_pooled
	upper = pooled.max() + 3.0 * bw_pooled

	grid_edges = np.linspace(lower, upper, bins + 1)
	grid = 0.5 * (grid_edges[1:] + grid_edges[:-1])

	density_a = binned_kde(a, bw_a, grid_edges)
	density_b = binned_kde(b, bw_b, grid_edges)
	density_a /= scipy.integrate.trapezoid(density_a, grid)
	density_b /= scipy.integrate.trapezoid(density_b, grid)

	distance = 0.5 * scipy.integrate.trapezoid(np.abs(density_a - density_b), grid)
	return float(np.clip(1.0 - distance, 0.0, 1.0))
