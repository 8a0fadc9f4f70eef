from __future__ import annotations

from .sampler import GibbsDraws, FixedVariances, gibbs_gaussian, posterior_cov_estimate, parameter_names
from .draws import save_draws, load_draws, export_csv, draws_frame
