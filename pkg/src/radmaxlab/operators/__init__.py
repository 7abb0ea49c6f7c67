"""Spectral operators, Hodge-Dirac resolvents, functional calculus and square roots."""

from .analysis import (off_diagonal_profile, principal_part, quadratic_estimate,
                       quadratic_multiplier_bound)
from .calculus import ContourSpec, contour_calculus, functional_calculus_pi, pi_function_symbol
from .elliptic import (KatoProblem, QuadratureSpec, ellipticity_normalize, neumann_resolvent,
                       random_accretive_field, random_scalar_coefficient, sqrt_L)
from .handles import (Add, Block, Compose, DenseOperator, FourierMultiplier, Identity,
                      OperatorHandle, PointwiseMultiplier, Resolvent, Scaled)
from .hodge import HodgeDirac, HodgeDiracConfig, hodge_decomposition, hodge_dirac, resolvents
from .spectral import poisson_symbols


def poisson_family(n: int, J: int, t: float) -> dict:
    """``{"P": P_t, "Q": Q_t, "Qstar": Q_t^*}`` as Fourier multipliers."""
    P, Q, Qs = poisson_symbols(n, J, t)
    return {"P": FourierMultiplier(P[..., 0, 0], n, name="P_t"),
            "Q": FourierMultiplier(Q, n, name="Q_t"),
            "Qstar": FourierMultiplier(Qs, n, name="Q_t*")}
