from __future__ import annotations

import numpy as np
import pytest
import scipy.stats
from scipy.special import digamma

from crossvi.vi.elbo import ig_entropy, iw_entropy, iw_expected_logdet, iw_expected_logpdf, log_cosh


@pytest.mark.parametrize('a, b', [(1.0, 0.5), (3.5, 2.0), (40.0, 17.0)])
def test_inverse_gamma_entropy(a, b):
	assert ig_entropy(a, b) == pytest.approx(scipy.stats.invgamma(a, scale=b).entropy(), rel=1e-10)


def test_one_dimensional_inverse_wishart_is_inverse_gamma():
	a, s = 5.0, 3.0
	assert iw_entropy(a, np.array([[s]])) == pytest.approx(scipy.stats.invgamma(a / 2, scale=s / 2).entropy(), rel=1e-10)
	assert iw_expected_logdet(a, np.array([[s]])) == pytest.approx(np.log(s / 2) - digamma(a / 2), rel=1e-10)


def test_inverse_wishart_expectations_by_monte_carlo():
	rng = np.random.default_rng(5)
	a, scale = 7.0, np.array([[2.0, 0.3], [0.3, 1.0]])
	draws = scipy.stats.invwishart.rvs(df=a, scale=scale, size=4000, random_state=rng)

	logdets = np.linalg.slogdet(draws)[1]
	assert iw_expected_logdet(a, scale) == pytest.approx(logdets.mean(), abs=4 * logdets.std() / np.sqrt(len(draws)))

	a0, scale0 = 3.0, np.eye(2)
	logpdf = np.array([scipy.stats.invwishart.logpdf(d, df=a0, scale=scale0) for d in draws])
	expected = iw_expected_logpdf(a0, scale0, iw_expected_logdet(a, scale), a * np.linalg.inv(scale))
	assert expected == pytest.approx(logpdf.mean(), abs=4 * logpdf.std() / np.sqrt(len(draws)))


def test_log_cosh_is_stable():
	x = np.array([0.0, 0.5, -3.0, 800.0])
	np.testing.assert_allclose(log_cosh(x[:3]), np.log(np.cosh(x[:3])), rtol=1e-12, atol=1e-15)
	assert log_cosh(x)[3] == pytest.approx(800.0 - np.log(2.0))
