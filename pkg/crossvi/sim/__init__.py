from __future__ import annotations

from .error import GenerationError
from .designs import Design, gen_crossed_mcar, gen_biregular, gen_nested, is_connected
from .responses import simulate_responses, truth
from .grid import SimConfig, GridResult, run_grid, run_replicate, replicate_seeds, summarize, write_grid
