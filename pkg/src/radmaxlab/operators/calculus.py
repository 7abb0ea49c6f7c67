"""Functional calculus of bisectorial operators.

Two independent routes are provided: an explicit per-frequency formula for the
unperturbed ``Pi`` and a contour-integral quadrature that only needs the
resolvent of a densely representable operator.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .._errors import InvalidInputError, ResolventFailure
from ..dyadic import GridFunction
from .handles import OperatorHandle
from .spectral import fft_apply, pi_symbol, zeta


def pi_function_symbol(f, d_symbol: np.ndarray, n: int, J: int) -> np.ndarray:
    """Symbol of ``f(Pi)``.

    Per frequency: ``f_o(z) Pi/z + (f_e(z) - f(0)) Pi^2/z^2 + f(0) I`` with
    ``z = 2 pi |xi|`` and ``f_o, f_e`` the odd and even parts of ``f``; at
    ``xi = 0`` only ``f(0) I`` survives.
    """
    z = zeta(n, J)
    S = pi_symbol(d_symbol)
    f0 = complex(np.asarray(f(np.array([0.0 + 0j])))[0])
    zp = np.asarray(f(z.astype(complex)), dtype=complex)
    zm = np.asarray(f(-z.astype(complex)), dtype=complex)
    if not (np.isfinite(f0) and np.all(np.isfinite(zp)) and np.all(np.isfinite(zm))):
        raise InvalidInputError("f is not finite on the spectrum of Pi")
    fo = 0.5 * (zp - zm)
    fe = 0.5 * (zp + zm)
    safe = np.where(z > 0, z, 1.0)
    c1 = np.where(z > 0, fo / safe, 0.0)[..., None, None]
    c2 = np.where(z > 0, (fe - f0) / safe ** 2, 0.0)[..., None, None]
    eye = np.eye(S.shape[-1])
    return c1 * S + c2 * (S @ S) + f0 * eye


def functional_calculus_pi(f, hd, u: GridFunction) -> GridFunction:
    """``f(Pi) u`` for the unperturbed Hodge-Dirac operator of ``hd``."""
    c = hd.config
    sym = pi_function_symbol(f, c.d_symbol, c.n, c.J)
    return GridFunction(u.grid, fft_apply(sym, u.values, c.n))


@dataclass(frozen=True)
class ContourSpec:
    omega: float = np.pi / 4
    nodes_per_decade: int = 40
    r_min: float = 1e-6
    r_max: float = 1e8

    def __post_init__(self):
        if not (0 < self.omega < np.pi / 2):
            raise InvalidInputError("omega must lie in (0, pi/2)")
        if self.nodes_per_decade < 4:
            raise InvalidInputError("need at least 4 nodes per decade")
        if not (0 < self.r_min < self.r_max):
            raise InvalidInputError("need 0 < r_min < r_max")

    def radial_nodes(self):
        """Geometric radii and trapezoid weights in ``log r`` (times ``r``)."""
        decades = np.log10(self.r_max / self.r_min)
        m = int(np.ceil(decades * self.nodes_per_decade))
        s = np.linspace(np.log(self.r_min), np.log(self.r_max), m + 1)
        h = s[1] - s[0]
        w = np.full(m + 1, h)
        w[0] = w[-1] = h / 2
        r = np.exp(s)
        return r, w * r

    def rays(self):
        """``(direction, orientation)``: out along ``e^-iw``, in along ``e^iw`` and the mirror pair."""
        e = np.exp(1j * self.omega)
        return [(1 / e, 1.0), (e, -1.0), (-1 / e, 1.0), (-e, -1.0)]


@dataclass
class ContourResult:
    value: GridFunction
    truncation_estimate: float
    warnings: list = field(default_factory=list)


def contour_calculus(op, psi, contour: ContourSpec, u: GridFunction, tol: float = 1e-6) -> ContourResult:
    """``psi(A) u = (2 pi i)^-1 int psi(lam) (lam - A)^-1 u dlam`` over the four rays.

    ``op`` is a handle (densified on ``u``'s grid) or a dense matrix acting on
    flattened values.
    """
    g = u.grid
    if isinstance(op, OperatorHandle):
        A = op.to_dense(g.n, g.J, g.n_comp)
    else:
        A = np.asarray(op, dtype=complex)
    size = A.shape[0]
    flat = u.values.reshape(size, -1)
    r, w = contour.radial_nodes()
    acc = np.zeros_like(flat)
    eye = np.eye(size)
    for d, orient in contour.rays():
        lam = r * d
        pv = np.asarray(psi(lam), dtype=complex)
        for j in range(r.size):
            if pv[j] == 0:
                continue
            try:
                lu = sla.lu_factor(lam[j] * eye - A, check_finite=False)
            except (ValueError, np.linalg.LinAlgError) as exc:
                raise ResolventFailure("resolvent failed on the contour", location=complex(lam[j])) from exc
            x = sla.lu_solve(lu, flat, check_finite=False)
            if not np.all(np.isfinite(x)):
                raise ResolventFailure("resolvent failed on the contour", location=complex(lam[j]))
            acc += (orient * d * w[j] * pv[j]) * x
    out = acc / (2j * np.pi)
    # neglected pieces: |psi| r_min near 0 and |psi(r_max)| ||A|| / r_max at infinity
    a_norm = float(np.linalg.norm(A, 2))
    head = abs(complex(np.asarray(psi(np.array([contour.r_min * np.exp(1j * contour.omega)]))[0])))
    tail = abs(complex(np.asarray(psi(np.array([contour.r_max * np.exp(1j * contour.omega)]))[0])))
    est = head * contour.r_min + tail * (1.0 + a_norm / contour.r_max)
    res = ContourResult(GridFunction(g, out.reshape(u.values.shape)), est)
    if est > tol:
        msg = f"contour truncation estimate {est:.2e} exceeds tol {tol:.1e}"
        res.warnings.append(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return res
