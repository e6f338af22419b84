"""Stationary DPP kernels, their repulsiveness, compact optima and simulation."""

from .kernels import (KernelSpec, RadialKernel, ValidityReport, make_kernel, alpha_max,
                      lg_alpha_max_limit, validate, limit_check)
from .metrics import (pcf, global_repulsiveness, local_repulsiveness, compare, count_variance,
                      LocalFlag)
from .compact import (constant_M, optimal_CR, family_u, compact_u_kernel, alpha_max_search,
                      most_locally_repulsive, smoothed_truncation)
from .sampler import Window, PointPattern, sample_dpp, sample_poisson, sample_matern2

__version__ = "0.1.0"
