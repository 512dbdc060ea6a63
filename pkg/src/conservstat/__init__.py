"""Numerical laboratory for normalized conservative statistical structures on surfaces.

Moduli data ``(w dz, q dz^3)`` on a conformal chart determine, through the
scalar Tzitzeica equation, a metric ``g = exp(u)|dz|^2`` and an Amari-Chentsov
tensor ``C``; every identity linking them is checked as a discrete residual.
"""

from .chart import Chart, ContractViolation, OneForm
from .higgs import (HiggsPointData, adjoint_A, build_C_from_moduli, build_higgs,
                    build_nabla, check_statistical_connection, commutator,
                    higgs_route_nabla)
from .solver import (SolveReport, SolverConfig, jacobian_apply, manufactured_solve,
                     newton_solve, pde_residual)
from .tensors import (ConformalMetric, Connection, Sym3Tensor, Tensor2, christoffel,
                      decompose3, divergence3, embed_cubic, extract_abelian, extract_cubic,
                      field_equation_residual, harmonicity_residual, norm_sym3,
                      normalization_residual, scalar_curvature, trace3)

__version__ = "0.1.0"
