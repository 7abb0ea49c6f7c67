"""Hodge-Dirac operators ``Pi = Gamma + Gamma^*`` and their perturbations.

With ``Gamma = [[0, 0], [D, 0]]``, ``B_1 = diag(A_1, 0)`` and
``B_2 = diag(0, A_2)`` the perturbed operator is
``Pi_B = Gamma + B_1 Gamma^* B_2 = [[0, A_1 D^* A_2], [D, 0]]``.
The default ``D`` is the spectral gradient (``n_1 = 1``, ``n_2 = n``), for
which ``Pi_B^2`` has ``L = -div A_2 grad`` in its first block when ``A_1 = I``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .._errors import InvalidInputError
from ..dyadic import Grid, GridFunction
from .handles import Block, Compose, FourierMultiplier, PointwiseMultiplier, Resolvent, DENSE_LIMIT
from .spectral import adjoint, grad_symbol, pi_symbol, zeta


def _identity_field(n: int, J: int, k: int) -> np.ndarray:
    side = 1 << J
    return np.broadcast_to(np.eye(k, dtype=complex), (side,) * n + (k, k)).copy()


def _as_matrix_field(a, n: int, J: int, k: int, name: str) -> np.ndarray:
    side = 1 << J
    if a is None:
        return _identity_field(n, J, k)
    a = np.asarray(a, dtype=complex)
    if a.shape == (side,) * n and k == 1:
        a = a[..., None, None]
    elif a.shape == (side,) * n:
        a = a[..., None, None] * np.eye(k)
    if a.shape != (side,) * n + (k, k):
        raise InvalidInputError(f"{name} has shape {a.shape}, expected {(side,) * n + (k, k)}")
    return a


@dataclass
class HodgeDiracConfig:
    n: int
    J: int
    A1: np.ndarray | None = None
    A2: np.ndarray | None = None
    d_symbol: np.ndarray | None = None
    ellipticity: tuple | None = None  # (lambda, Lambda) when A2 comes from an elliptic field
    dense_limit: int = DENSE_LIMIT
    checks: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n not in (1, 2):
            raise InvalidInputError("n must be 1 or 2")
        d = grad_symbol(self.n, self.J) if self.d_symbol is None else np.asarray(self.d_symbol, dtype=complex)
        side = 1 << self.J
        if d.shape[:self.n] != (side,) * self.n or d.ndim != self.n + 2:
            raise InvalidInputError("D symbol must have shape spatial + (n2, n1)")
        self.d_symbol = d
        self.A1 = _as_matrix_field(self.A1, self.n, self.J, self.n1, "A1")
        self.A2 = _as_matrix_field(self.A2, self.n, self.J, self.n2, "A2")
        self.checks["DDstarD"] = self.check_ddstar()
        if self.checks["DDstarD"] > 1e-12 * max(1.0, float(np.abs(d).max()) ** 3):
            raise InvalidInputError(f"D D^* D = -Lap D fails by {self.checks['DDstarD']:.3e}")
        for name, a in (("A1", self.A1), ("A2", self.A2)):
            inv_norm = np.linalg.norm(np.linalg.inv(a), ord=2, axis=(-2, -1)).max()
            nrm = np.linalg.norm(a, ord=2, axis=(-2, -1)).max()
            if not (np.isfinite(inv_norm) and np.isfinite(nrm)):
                raise InvalidInputError(f"{name} or its inverse is unbounded")
            self.checks[f"{name}_norm"] = float(nrm)
            self.checks[f"{name}_inv_norm"] = float(inv_norm)

    @property
    def n1(self) -> int:
        return self.d_symbol.shape[-1]

    @property
    def n2(self) -> int:
        return self.d_symbol.shape[-2]

    @property
    def N(self) -> int:
        return self.n1 + self.n2

    def grid(self, space=None) -> Grid:
        return Grid(self.n, self.J, self.N) if space is None else Grid(self.n, self.J, self.N, space)

    def check_ddstar(self) -> float:
        d = self.d_symbol
        lhs = d @ adjoint(d) @ d
        rhs = (zeta(self.n, self.J) ** 2)[..., None, None] * d
        return float(np.abs(lhs - rhs).max())


@dataclass
class HodgeDirac:
    config: HodgeDiracConfig
    D: FourierMultiplier
    Dstar: FourierMultiplier
    gamma: Block
    gamma_star: Block
    gamma_star_B: Block
    pi: Block
    pi_B: Block
    pi_Bstar: Block

    @property
    def pi_symbol(self) -> np.ndarray:
        return pi_symbol(self.config.d_symbol)

    def unperturbed_resolvent(self, t: float) -> FourierMultiplier:
        """``(I + i t Pi)^-1`` as an exact per-frequency inverse."""
        sym = self.pi_symbol
        eye = np.eye(sym.shape[-1])
        return FourierMultiplier(np.linalg.inv(eye + 1j * t * sym), self.config.n, name=f"R_{t}")

    def resolvent(self, t: float, style: str = "R", perturbed: bool = True) -> Resolvent:
        c = self.config
        return Resolvent(self.pi_B if perturbed else self.pi, t, style, c.n, c.J, c.N,
                         dense_limit=c.dense_limit, preconditioner=self.unperturbed_resolvent)

    def resolvents(self, t: float) -> dict:
        """``{"R": R_t^B, "P": P_t^B, "Q": Q_t^B}`` sharing one dense factorisation."""
        r = self.resolvent(t, "R")
        p = Resolvent(self.pi_B, t, "P", r.n, r.J, r.N, r.dense_limit, r.preconditioner)
        q = Resolvent(self.pi_B, t, "Q", r.n, r.J, r.N, r.dense_limit, r.preconditioner)
        p._lu = q._lu = r._lu
        return {"R": r, "P": p, "Q": q}


def hodge_dirac(config: HodgeDiracConfig) -> HodgeDirac:
    n, n1, n2 = config.n, config.n1, config.n2
    D = FourierMultiplier(config.d_symbol, n, name="D")
    Ds = FourierMultiplier(adjoint(config.d_symbol), n, name="D*")
    A1 = PointwiseMultiplier(config.A1, n, name="A1")
    A2 = PointwiseMultiplier(config.A2, n, name="A2")
    rows, cols = (n1, n2), (n1, n2)
    gamma = Block([[None, None], [D, None]], rows, cols, n)
    gamma_star = Block([[None, Ds], [None, None]], rows, cols, n)
    gamma_star_B = Block([[None, Compose([A1, Ds, A2])], [None, None]], rows, cols, n)
    pi = Block([[None, Ds], [D, None]], rows, cols, n)
    pi_B = Block([[None, Compose([A1, Ds, A2])], [D, None]], rows, cols, n)
    # Gamma^* + B_2 Gamma B_1
    pi_Bstar = Block([[None, Ds], [Compose([A2, D, A1]), None]], rows, cols, n)
    return HodgeDirac(config, D, Ds, gamma, gamma_star, gamma_star_B, pi, pi_B, pi_Bstar)


def resolvents(hd: HodgeDirac, t: float) -> dict:
    return hd.resolvents(t)


@dataclass(frozen=True)
class HodgeSplit:
    range_gamma_star_B: GridFunction  # first-block part of P u
    range_gamma: GridFunction  # second-block part of P u
    kernel: GridFunction
    T: float


def hodge_decomposition(hd: HodgeDirac, u: GridFunction, T: float = 1e5 / (2 * np.pi)) -> HodgeSplit:
    """Split ``u`` into ``P_1 u``, ``P_2 u`` and the null-space part of ``Pi_B``.

    ``P = T^2 Pi_B^2 (I + T^2 Pi_B^2)^-1`` at large ``T``; the null-space part
    ``(I + T^2 Pi_B^2)^-1 u = R_T R_-T u`` is computed from two resolvent
    solves, which is better conditioned than forming ``I + T^2 Pi_B^2``.
    """
    c = hd.config
    R = hd.resolvent(T, "R")
    kern_vals = R.with_t(-T)._apply(R._apply(u.values, c.n), c.n)
    rest = u.values - kern_vals
    first = rest.copy()
    first[(slice(None),) * c.n + (slice(c.n1, None),)] = 0
    second = rest - first
    return HodgeSplit(GridFunction(u.grid, first), GridFunction(u.grid, second),
                      GridFunction(u.grid, kern_vals), T)
