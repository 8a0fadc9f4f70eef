from __future__ import annotations
from typing import TYPE_CHECKING

import numpy as np
from scipy.special import digamma, gammaln, multigammaln

from ..model import LikelihoodKind

if TYPE_CHECKING:
	from .engine import Moments
	from .state import VariationalState

LOG_2 = float(np.log(2.0))
LOG_2PI = float(np.log(2.0 * np.pi))


def _logdet(matrix: np.ndarray) -> float:
	sign, value = np.linalg.slogdet(matrix)
	return float(value)


def iw_expected_logdet(a: float, scale: np.ndarray) -> float:
	"E[log|Σ|] for Σ ~ IW(a, Φ)"
	D = scale.shape[0]
	return _logdet(scale) - D * LOG_2 - float(np.sum(digamma((a - np.arange(D)) / 2.0)))


def iw_entropy(a: float, scale: np.ndarray) -> float:
	D = scale.shape[0]
	return (
		-0.5 * a * _logdet(scale)
		+ 0.5 * a * D * LOG_2
		+ float(multigammaln(a / 2.0, D))
		+ 0.5 * (a + D + 1) * iw_expected_logdet(a, scale)
		+ 0.5 * a * D
	)


def iw_expected_logpdf(a0: float, scale0: np.ndarray, e_logdet: float, e_inv: np.ndarray) -> float:
	"E_q[log IW(Σ; a0, Φ0)] given E_q[log|Σ|] and E_q[Σ⁻¹]"
	D = scale0.shape[0]
	return (
		0.5 * a0 * _logdet(scale0)
		- 0.5 * a0 * D * LOG_2
		- float(multigammaln(a0 / 2.0, D))
		- 0.5 * (a0 + D + 1) * e_logdet
		- 0.5 * float(np.trace(scale0 @ e_inv))
	)


def ig_entropy(a: float, b: float) -> float:
	return float(a + np.log(b) + gammaln(a) - (1.0 + a) * digamma(a))


def log_cosh(x: np.ndarray) -> np.ndarray:
	return np.logaddexp(x, -x) - LOG_2


def q_theta_logdet(state: VariationalState) -> float:
	"log|cov_q(θ)| = Σ_{k∈U} log|Λ_k| − log|W_CᵀW_C + P_C|"
	from .engine import lambda_logdet

	value = sum(lambda_logdet(state, k) for k in state.part.uncollapsed)
	if state.collapsed_law:
		value -= state.collapsed_law.logdet
	return float(value)


def elbo(state: VariationalState, moments: Moments) -> float:
	"""
	Evidence lower bound up to a constant fixed by the model (improper priors and the binomial coefficients are dropped).
	"""
	data = state.data
	phi = state.phi
	prior = state.prior

	p = sum(b.size for b in state.blocks)
	entropy = 0.5 * q_theta_logdet(state) + 0.5 * p * (1.0 + LOG_2PI)

	value = 0.0
	weight = 1.0

	if state.lik == LikelihoodKind.gaussian:
		assert phi.a_sigma2 is not None and phi.b_sigma2 is not None
		a, b = phi.a_sigma2, phi.b_sigma2
		weight = a / b
		e_log_sigma2 = float(np.log(b) - digamma(a))
		effects = sum(f.size for f in data.factors)

		residual = float(np.sum((data.y - moments.eta_mean) ** 2 + moments.eta_variance))
		value += -(0.5 * data.n + 0.5 * effects + 1.0) * e_log_sigma2 - 0.5 * weight * residual
		entropy += ig_entropy(a, b)
	else:
		assert phi.b is not None and phi.c is not None
		omega = phi.e_omega()
		y, trials, c = data.y, data.trials, phi.c
		value += float(np.sum(
			(y - trials / 2.0) * moments.eta_mean
			- 0.5 * omega * moments.eta_second
			- trials * LOG_2
			+ 0.5 * c * c * omega
			- trials * log_cosh(c / 2.0)
		))

	for k, factor in enumerate(data.factors, start=1):
		a_k, scale_k = phi.a[k - 1], phi.scale[k - 1]
		e_inv = phi.e_sigma_inv(k)
		e_logdet = iw_expected_logdet(a_k, scale_k)

		value += -0.5 * factor.levels * e_logdet - 0.5 * weight * float(np.trace(e_inv @ moments.alpha_second[k - 1]))
		value += iw_expected_logpdf(prior.iw_df[k - 1], prior.iw_scale[k - 1], e_logdet, e_inv)
		entropy += iw_entropy(a_k, scale_k)

	return float(value + entropy)
