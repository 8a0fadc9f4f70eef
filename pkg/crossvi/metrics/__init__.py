from __future__ import annotations

from .error import SampleSizeError, DegenerateDensityError
from .uqf import UqfEstimate, UqfMethod, uqf_analytic, uqf_split_sample, uqf_pair_bound, block_eigen_identity, normalized_precision
from .tv import tv_accuracy, bw_silverman, binned_kde
