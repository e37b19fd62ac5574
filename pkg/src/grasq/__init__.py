"""Grassmann stochastic analysis at finite dimension.

Modules
-------
exterior   exterior algebra on bitmask monomials, coproduct, derivatives
pfaffian   Pfaffians (elimination, recursion, pairing sums)
wick       Gaussian (quasi-free) states and Wick evaluation
fock       dense CAR realizations of Gaussian states
rv         Grassmann random variables, Taylor formulas
noise      white noise on a grid, Ornstein-Uhlenbeck processes, Lyapunov solves
sde        Grassmann SDEs: Picard, stationary solutions, Ito formula, invariant
           measures, stochastic quantization
trees      tree expansion of cubic drifts and the majorant method
yukawa     Galerkin mode truncation of the two-dimensional Yukawa model
cli        experiment driver (``grasq`` command)
"""

__version__ = "0.1.0"

from grasq.exterior import AlgebraElement, GeneratorContext, wedge  # noqa: E402
from grasq.kernels import BACKEND  # noqa: E402
from grasq.wick import CovarianceMatrix, WickState  # noqa: E402

__all__ = ["AlgebraElement", "GeneratorContext", "wedge", "WickState", "CovarianceMatrix", "BACKEND",
           "__version__"]
