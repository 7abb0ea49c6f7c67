"""Elliptic coefficient fields, the Neumann-series resolvent and ``sqrt(L)``.

``L = -div A grad`` is assembled from spectral derivatives on the periodic
grid.  Three routes to ``sqrt(L) u`` are offered: a dense principal matrix
square root, a resolvent quadrature of ``(2/pi) int_0^inf L (I + t^2 L)^-1 dt``
and the sign of the perturbed Hodge-Dirac operator applied to ``(0, grad u)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .._errors import DivergenceError, InvalidInputError, ResourceError
from ..dyadic import Grid, GridFunction
from .handles import Compose, FourierMultiplier, PointwiseMultiplier
from .hodge import HodgeDiracConfig, hodge_dirac
from .spectral import div_symbol, frequencies, grad_symbol, zeta

DENSE_SQRT_LIMIT = 4096


# -- ellipticity --------------------------------------------------------------------


@dataclass(frozen=True)
class Normalization:
    M: float
    delta: float
    K: np.ndarray  # spatial + (n, n), with A^-1 = M_inv (I + K)
    M_inv: float
    K_norm: float
    check_margin: float


def _as_field(A, n_dim: int | None = None) -> np.ndarray:
    A = np.asarray(A, dtype=complex)
    if A.ndim >= 2 and A.shape[-1] == A.shape[-2] and (n_dim is None or A.shape[-1] == n_dim) \
            and A.ndim - 2 in (1, 2):
        return A
    return A[..., None, None]


def ellipticity_violations(A: np.ndarray, lam: float, Lam: float, tol: float = 1e-12):
    """Cells where ``Re<A xi, xi> >= lam |xi|^2`` or ``||A|| <= Lam`` fails."""
    herm = 0.5 * (A + np.conj(np.swapaxes(A, -1, -2)))
    low = np.linalg.eigvalsh(herm)[..., 0]
    top = np.linalg.norm(A, ord=2, axis=(-2, -1))
    bad = (low < lam * (1 - tol)) | (top > Lam * (1 + tol))
    return np.argwhere(bad)


def ellipticity_normalize(A, lam: float, Lam: float) -> Normalization:
    """Constants ``M = Lam^2/lam``, ``delta = lam/2`` with ``||M I - A|| <= M - delta``.

    ``K`` normalises the inverse field: ``A^-1`` is elliptic with constants
    ``lam/Lam^2`` and ``1/lam``, so with ``M_inv = Lam^2/lam^3`` one has
    ``A^-1 = M_inv (I + K)`` and ``||K||_inf <= 1 - lam^4/(2 Lam^4) < 1``.
    """
    if not (0 < lam <= Lam):
        raise InvalidInputError("need 0 < lambda <= Lambda")
    A = _as_field(A)
    bad = ellipticity_violations(A, lam, Lam)
    if bad.size:
        raise InvalidInputError(f"ellipticity fails at cell {tuple(bad[0])}")
    M = Lam ** 2 / lam
    delta = lam / 2
    eye = np.eye(A.shape[-1])
    margin = float(((M - delta) - np.linalg.norm(M * eye - A, ord=2, axis=(-2, -1))).min())
    if margin < -1e-12 * M:
        raise InvalidInputError("||M I - A|| <= M - delta fails")
    M_inv = Lam ** 2 / lam ** 3
    K = np.linalg.inv(A) / M_inv - eye
    k_norm = float(np.linalg.norm(K, ord=2, axis=(-2, -1)).max())
    if not k_norm < 1:
        raise InvalidInputError(f"||K|| = {k_norm} is not below 1")
    return Normalization(M, delta, K, M_inv, k_norm, margin)


def random_scalar_coefficient(J: int, lam: float, Lam: float, rng, n: int = 1, kind: str = "rough"):
    """Random real field with values in ``[lam, Lam]``.

    ``rough``: independent values per cell; ``blocky``: constant on random
    dyadic blocks, mixing several scales.
    """
    gen = rng.generator() if hasattr(rng, "generator") else np.random.default_rng(rng)
    side = 1 << J
    if kind == "rough":
        v = gen.random((side,) * n)
    else:
        v = np.zeros((side,) * n)
        for k in range(1, J + 1):
            m = 1 << k
            block = gen.random((m,) * n)
            for ax in range(n):
                block = np.repeat(block, side // m, axis=ax)
            v += block * 2.0 ** (-0.5 * k)
        v = (v - v.min()) / max(np.ptp(v), 1e-300)
    return lam + (Lam - lam) * v


def random_accretive_field(n_mat: int, spatial, lam: float, Lam: float, rng) -> np.ndarray:
    """Random complex matrix field with ``Re<A xi, xi> >= lam |xi|^2`` and ``||A|| <= Lam``.

    A Hermitian part with smallest eigenvalue ``lam`` plus an anti-Hermitian
    part; the deviation from ``lam I`` is then shrunk cellwise where needed to
    meet the upper bound.
    """
    gen = rng.generator() if hasattr(rng, "generator") else np.random.default_rng(rng)
    shape = tuple(spatial) + (n_mat, n_mat)
    eye = np.eye(n_mat)
    X = gen.standard_normal(shape) + 1j * gen.standard_normal(shape)
    skew = 0.5 * (X - np.conj(np.swapaxes(X, -1, -2)))
    Y = gen.standard_normal(shape)
    herm = Y @ np.swapaxes(Y, -1, -2) / n_mat + eye
    herm = herm / np.linalg.eigvalsh(herm)[..., :1, None]
    dev = lam * (herm - eye) + 0.3 * lam * skew
    size = np.linalg.norm(dev, ord=2, axis=(-2, -1))
    s = np.minimum(1.0, (Lam - lam) / np.maximum(size, 1e-300))[..., None, None]
    return lam * eye + s * dev


# -- Neumann series -------------------------------------------------------------------


def inverse_poisson_field(n: int, J: int, t: float) -> np.ndarray:
    """Symbol of ``(I - t^2 grad div)^-1`` on n-vector fields (Sherman-Morrison)."""
    xi = 2 * np.pi * frequencies(n, J)
    z2 = np.sum(xi ** 2, axis=-1)
    outer = xi[..., :, None] * xi[..., None, :]
    # (I + t^2 xi xi^T)^-1 = I - t^2 xi xi^T / (1 + t^2 |xi|^2)
    return np.eye(n) - (t * t / (1.0 + t * t * z2))[..., None, None] * outer


@dataclass
class NeumannResult:
    value: GridFunction
    terms: int
    k_norm: float


def neumann_resolvent(t: float, K, u: GridFunction, tol: float = 1e-10, max_terms: int = 100000) -> NeumannResult:
    """``(I + P_t K)^-1 u = sum_k (-P_t K)^k u``.

    ``K`` is a pointwise matrix field (or scalar field).  Summation stops at the
    first ``k`` with ``||K||^k / (1 - ||K||) < tol``, which bounds the neglected
    tail in L^2 since ``P_t`` is an L^2 contraction.
    """
    g = u.grid
    n = g.n
    Kf = np.asarray(K, dtype=complex)
    if Kf.ndim == n:
        Kf = Kf[..., None, None]
    if Kf.shape[-1] != g.n_comp:
        raise InvalidInputError("K must act on the components of u")
    knorm = float(np.linalg.norm(Kf, ord=2, axis=(-2, -1)).max())
    if knorm >= 1:
        raise DivergenceError(f"||K||_inf = {knorm} >= 1: Neumann series need not converge")
    if g.n_comp == n:
        P = FourierMultiplier(inverse_poisson_field(n, g.J, t), n, name="P_t")
    else:
        P = FourierMultiplier(1.0 / (1.0 + (t * zeta(n, g.J)) ** 2), n, name="P_t")
    step = Compose([P, PointwiseMultiplier(Kf, n)])
    term = u.values.copy()
    total = term.copy()
    k = 0
    bound = 1.0
    while bound / (1.0 - knorm) >= tol and knorm > 0:
        term = -step._apply(term, n)
        total += term
        k += 1
        bound *= knorm
        if k > max_terms:
            raise DivergenceError("Neumann series exceeded the term budget")
    return NeumannResult(GridFunction(g, total), k, knorm)


# -- second-order operator and its square root -------------------------------------------------


@dataclass
class KatoProblem:
    """``L = -div A grad`` on scalar functions over an ``n``-dimensional grid of depth ``J``."""

    n: int
    J: int
    A: np.ndarray  # spatial + (n, n)
    ellipticity: tuple | None = None
    _dense: np.ndarray | None = field(default=None, repr=False)
    _schur: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        self.A = _as_field(self.A)
        if self.A.shape != (1 << self.J,) * self.n + (self.n, self.n):
            if self.A.shape[-2:] == (1, 1) and self.n > 1:
                self.A = self.A * np.eye(self.n)
            else:
                raise InvalidInputError("coefficient field shape does not match the grid")

    @property
    def grid(self) -> Grid:
        return Grid(self.n, self.J)

    @property
    def cells(self) -> int:
        return 1 << (self.n * self.J)

    def grad(self) -> FourierMultiplier:
        return FourierMultiplier(grad_symbol(self.n, self.J), self.n, name="grad")

    def operator(self):
        div = FourierMultiplier(-div_symbol(self.n, self.J), self.n, name="-div")
        return Compose([div, PointwiseMultiplier(self.A, self.n, name="A"), self.grad()])

    def hodge_config(self) -> HodgeDiracConfig:
        return HodgeDiracConfig(self.n, self.J, A1=None, A2=self.A, ellipticity=self.ellipticity)

    def dense(self) -> np.ndarray:
        if self._dense is None:
            if self.cells > DENSE_SQRT_LIMIT:
                raise ResourceError(f"dense L limited to {DENSE_SQRT_LIMIT} cells")
            self._dense = self.operator().to_dense(self.n, self.J, 1)
        return self._dense

    def schur(self):
        """Complex Schur form ``L = Z T Z^*`` (cached)."""
        if self._schur is None:
            T, Z = sla.schur(self.dense(), output="complex")
            self._schur = (T, Z)
        return self._schur

    def is_constant_identity(self) -> bool:
        return bool(np.allclose(self.A, np.eye(self.n), atol=0, rtol=0))


@dataclass(frozen=True)
class QuadratureSpec:
    t_min: float = 1e-7
    t_max: float = 1e3
    nodes_per_decade: int = 40

    def nodes(self):
        decades = np.log10(self.t_max / self.t_min)
        m = int(np.ceil(decades * self.nodes_per_decade))
        s = np.linspace(np.log(self.t_min), np.log(self.t_max), m + 1)
        h = s[1] - s[0]
        w = np.full(m + 1, h)
        w[0] = w[-1] = h / 2
        t = np.exp(s)
        return t, w * t


@dataclass
class SqrtResult:
    value: GridFunction
    method: str
    warnings: list = field(default_factory=list)


def _values_2d(u: GridFunction) -> tuple[np.ndarray, tuple]:
    g = u.grid
    if g.n_comp != 1:
        raise InvalidInputError("sqrt(L) acts on functions with one component")
    return u.values.reshape(g.cells, -1), u.values.shape


def sqrt_L(problem: KatoProblem, u: GridFunction, method: str = "dense_schur",
           quad: QuadratureSpec = QuadratureSpec(), tol: float = 1e-6) -> SqrtResult:
    """``sqrt(L) u`` by one of ``dense_schur``, ``resolvent_quadrature``, ``sign_of_PiB`` or ``fourier``."""
    flat, shape = _values_2d(u)
    g = u.grid
    if (g.n, g.J) != (problem.n, problem.J):
        raise InvalidInputError("u lives on a different grid")
    notes = []
    if method == "fourier":
        if not np.allclose(problem.A, problem.A[(0,) * problem.n], atol=0):
            raise InvalidInputError("the fourier route needs a constant coefficient")
        A0 = problem.A[(0,) * problem.n]
        xi = 2 * np.pi * frequencies(problem.n, problem.J)
        sym = np.sqrt(np.einsum("...i,ij,...j->...", xi, A0, xi).astype(complex))
        out = FourierMultiplier(sym, problem.n).apply_values(u.values)
    elif method == "dense_schur":
        root = sla.sqrtm(problem.dense())
        out = (root @ flat).reshape(shape)
    elif method == "resolvent_quadrature":
        out, notes = _sqrt_quadrature(problem, flat, quad, tol)
        out = out.reshape(shape)
    elif method == "sign_of_PiB":
        out, notes = _sqrt_sign(problem, u, quad, tol)
    else:
        raise InvalidInputError(f"unknown method {method!r}")
    for msg in notes:
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return SqrtResult(GridFunction(g, out), method, notes)


def _tail_terms(quad: QuadratureSpec, lmin: float, lmax: float, tol: float) -> list:
    notes = []
    # neglected pieces after the end corrections: O(t_min^3 l^2) and O(1/(t_max^3 l)) relative to sqrt(l)
    head = quad.t_min ** 3 * lmax ** 1.5
    tail = 1.0 / (quad.t_max ** 3 * lmin ** 1.5) if lmin > 0 else np.inf
    if max(head, tail) > tol:
        notes.append(f"quadrature truncation estimate {max(head, tail):.2e} exceeds tol {tol:.1e}")
    return notes


def _sqrt_quadrature(problem: KatoProblem, flat: np.ndarray, quad: QuadratureSpec, tol: float):
    """``(2/pi) int_0^inf L (I + t^2 L)^-1 u dt`` with a geometric t-grid.

    ``L`` is reduced once to triangular Schur form ``L = Z T Z^*``, after
    which every node costs one triangular solve.  The two ends are closed with
    their leading asymptotics: ``t_min L u`` for ``[0, t_min]`` and
    ``(u - mean(u)) / t_max`` for ``[t_max, inf)`` (the mean spans the null
    space of L on the torus).
    """
    T, Z = problem.schur()
    m = T.shape[0]
    w0 = Z.conj().T @ flat
    tw = T @ w0
    t, wt = quad.nodes()
    acc = np.zeros_like(w0)
    diag = np.diag_indices(m)
    for tj, wj in zip(t, wt):
        sys = (tj * tj) * T
        sys[diag] += 1.0
        acc += wj * sla.solve_triangular(sys, tw, check_finite=False)
    res = Z @ acc
    lu = problem.dense() @ flat
    mean_free = flat - flat.mean(axis=0, keepdims=True)
    res = res + quad.t_min * lu + mean_free / quad.t_max
    notes = _tail_terms(quad, *_spectral_bounds(problem), tol)
    return (2.0 / np.pi) * res, notes


def _spectral_bounds(problem: KatoProblem) -> tuple[float, float]:
    """Cheap bounds for the smallest nonzero and the largest |eigenvalue| of L."""
    herm = 0.5 * (problem.A + np.conj(np.swapaxes(problem.A, -1, -2)))
    low = float(np.linalg.eigvalsh(herm)[..., 0].min())
    top = float(np.linalg.norm(problem.A, ord=2, axis=(-2, -1)).max())
    zmax = float(zeta(problem.n, problem.J).max())
    return 4 * np.pi ** 2 * max(low, 0.0), zmax ** 2 * top


def _sqrt_sign(problem: KatoProblem, u: GridFunction, quad: QuadratureSpec, tol: float):
    """First block of ``sgn(Pi_B)(0, grad u) = (2/pi) int Q_t^B (0, grad u) dt/t``."""
    hd = hodge_dirac(problem.hodge_config())
    c = hd.config
    if (1 << (c.n * c.J)) * c.N > 4096:
        raise ResourceError("sign_of_PiB route needs a dense Pi_B (at most 4096 unknowns)")
    g = u.grid
    grad_u = problem.grad().apply_values(u.values, g.n)
    v = np.concatenate([np.zeros_like(u.values), grad_u], axis=g.n)
    pi_b = hd.pi_B.to_dense(c.n, c.J, c.N)
    size = pi_b.shape[0]
    flat = v.reshape(size, -1)
    eye = np.eye(size)
    t, wt = quad.nodes()
    acc = np.zeros_like(flat)
    for tj, wj in zip(t, wt):
        rp = sla.lu_solve(sla.lu_factor(eye + 1j * tj * pi_b, check_finite=False), flat)
        rm = sla.lu_solve(sla.lu_factor(eye - 1j * tj * pi_b, check_finite=False), flat)
        acc += (wj / tj) * (0.5j) * (rp - rm)
    # end corrections: Q_t ~ t Pi_B near 0, Q_t ~ (t Pi_B)^-1 at infinity
    acc += quad.t_min * (pi_b @ flat)
    first = u.values.reshape(g.cells, -1)
    tail = np.zeros_like(flat).reshape(v.shape)
    tail[(slice(None),) * g.n + (slice(0, 1),)] = (first - first.mean(axis=0, keepdims=True)).reshape(u.values.shape)
    acc += tail.reshape(size, -1) / quad.t_max
    full = ((2.0 / np.pi) * acc).reshape(v.shape)
    out = np.take(full, [0], axis=g.n)
    notes = _tail_terms(quad, *_spectral_bounds(problem), tol)
    return out.reshape(u.values.shape), notes
