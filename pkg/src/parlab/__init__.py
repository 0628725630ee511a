"""Numerical laboratory for degenerate parabolic problems.

The package provides the constructive machinery used in quantitative
regularity theory for p-Laplacian-type evolutions on uniform space-time
lattices: variational p-capacity, Steklov averages, negative Sobolev
norms, strong and dual-space parabolic maximal operators, intrinsic
Whitney coverings with partitions of unity, the parabolic Lipschitz
truncation operator, an implicit solver for u_t - div A(x,t,grad u) = 0,
and end-to-end verification pipelines for the associated a priori,
Caccioppoli, reverse Hoelder and higher-integrability inequalities.
"""

from parlab.errors import ParlabError
from parlab.report import EstimateReport

__version__ = "0.1.0"

__all__ = ["ParlabError", "EstimateReport", "__version__"]
