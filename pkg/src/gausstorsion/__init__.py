"""Torsion under Gaussian measure with Robin boundary conditions.

Special functions of the Gauss space, the explicit half-space solution, a
Gaussian-weighted P1 finite-element solver on polygonal domains, level-set
analysis of discrete fields and a comparison sweep against the half-space of
equal Gaussian measure.
"""

from .errors import DomainError, GaussTorsionError, GeometryError, NumericalError
from .gauss import (F_function, H_function, Tolerances, gauss_density, half_space_measure,
                    half_space_measure_inverse, isoperimetric_function, mills_ratio,
                    psi_function)
from .halfspace import (ClosedFormSolution, HalfSpaceProblem, bvp_cross_check,
                        distribution_of_v, evaluate_v, halfspace_torsion, robin_constant, v_min)

__version__ = "0.1.0"
