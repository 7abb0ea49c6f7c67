"""Numerical laboratory for randomized norms, dyadic analysis, Rademacher maximal
functions, Hodge-Dirac operators, Kato square roots and Carleson embeddings."""

__version__ = "0.1.0"

from ._errors import (DivergenceError, InvalidInputError, RadmaxError, ResolventFailure, ResourceError,
                      SolverFailure, UnsupportedSpaceError)
from .banach import (NormEstimate, ProductNorm, SpaceDescriptor, Vector, contraction_check, gaussian_avg,
                     rademacher_avg, rbound_estimate, square_function_norm)
from .dyadic import (DyadicCube, Grid, GridFunction, HaarCoefficients, LpSpace, bmo_norm, conditional_expectation,
                     dyadic_maximal, haar_decompose, haar_reconstruct, lp_norm)
from .radmax import (OptimizerSettings, RMFReport, counterexample_l1, rademacher_maximal, rmf_norm_experiment)
from .randomness import RandomSource, as_source
from . import banach, carleson, dyadic, harness, operators, radmax  # noqa: E402
