"""Measured quantities of operator families: principal parts, off-diagonal
decay and quadratic (square-function) estimates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .._errors import InvalidInputError
from ..banach import NormEstimate, rademacher_avg
from ..dyadic import Grid, GridFunction, LpSpace, lp_norm, lp_norm_of_values
from ..randomness import as_source
from .handles import OperatorHandle
from .spectral import zeta


def principal_part(T: OperatorHandle, k: int, grid: Grid, radius: int | None = 8) -> np.ndarray:
    """``gamma_{2^k}(x)``: the matrix with columns ``sum_Q T(w 1_Q)(x)`` over basis ``w``.

    Only cubes ``Q`` of scale ``k`` within ``radius`` cubes (periodic
    Chebyshev distance in cube units) of the cube containing ``x`` are summed;
    ``radius=None`` sums all cubes, which gives ``T(w)`` exactly.
    Returns an array of shape ``spatial + (N_out, N)``.
    """
    k = grid.check_scale(k)
    n, J, N = grid.n, grid.J, grid.n_comp
    m = 1 << (-k)
    if radius is None or 2 * radius + 1 >= m:
        # every cube contributes: T applied to the constant basis vectors
        const = np.broadcast_to(np.eye(N, dtype=complex), grid.spatial_shape + (N, N)).copy()
        return T.apply_values(const, n)
    b = 1 << (J + k)
    side = grid.side
    C = m ** n
    inp = np.zeros((side,) * n + (N, N, C), dtype=complex)
    cube_of_cell = np.arange(side) // b
    idx_grids = np.meshgrid(*([cube_of_cell] * n), indexing="ij")
    flat_cube = np.ravel_multi_index(tuple(idx_grids), (m,) * n) if n > 1 else idx_grids[0]
    for w in range(N):
        inp[..., w, w, :] = 0
        sel = np.zeros((side,) * n + (C,))
        np.put_along_axis(sel, flat_cube[..., None], 1.0, axis=-1)
        inp[..., w, w, :] = sel
    out = T.apply_values(inp.reshape((side,) * n + (N, N * C)), n)
    n_out = out.shape[n]
    out = out.reshape((side,) * n + (n_out, N, C))
    # periodic Chebyshev distance between the cube of each cell and every cube
    cube_coords = np.stack(np.unravel_index(np.arange(C), (m,) * n), axis=-1)  # (C, n)
    cell_coords = np.stack(idx_grids, axis=-1)  # spatial + (n,)
    diff = np.abs(cell_coords[..., None, :] - cube_coords)
    diff = np.minimum(diff, m - diff).max(axis=-1)  # spatial + (C,)
    mask = (diff <= radius).astype(float)
    return np.einsum("...owc,...c->...ow", out, mask)


def _periodic_gap(side: int, f_cells: int) -> np.ndarray:
    """Distance (in cells) from each 1D cell interval to ``[0, f_cells)`` on the circle."""
    i = np.arange(side)
    right = i - f_cells
    left = side - i - 1
    gap = np.minimum(right, left).astype(float)
    gap[:f_cells] = -1.0
    return np.maximum(gap, np.where(i < f_cells, -1.0, 0.0))


@dataclass(frozen=True)
class OffDiagonalRow:
    rho: float
    ratio: float
    cells_in_E: int


def off_diagonal_profile(T: OperatorHandle, t: float, separations, grid: Grid, rng=None,
                         samples: int = 8, p: float = 2.0) -> list[OffDiagonalRow]:
    """``max_u ||1_E T 1_F u||_p / ||1_F u||_p`` with ``dist(E, F) >= rho t``.

    ``F`` is the interval ``[0, t)`` (at least one cell) and ``E`` the cells
    outside ``F`` whose periodic distance to ``F`` is at least ``rho t``.
    """
    if grid.n != 1:
        raise InvalidInputError("off-diagonal profiles are measured for n = 1")
    side = grid.side
    h = 1.0 / side
    f_cells = max(1, int(round(t / h)))
    gap = _periodic_gap(side, f_cells) * h
    src = as_source(rng)
    gen = src.generator()
    shape = grid.shape
    us = gen.standard_normal((samples,) + shape) + 1j * gen.standard_normal((samples,) + shape)
    us[:, f_cells:] = 0
    batch = np.moveaxis(us, 0, -1)  # spatial + (N, X..., S)
    flat = batch.reshape(shape[:2] + (-1,))
    out = T.apply_values(flat, 1).reshape(shape[:1] + (T.out_components(grid.n_comp),) + shape[2:] + (samples,))
    out = np.moveaxis(out, -1, 0)
    g_out = grid.with_(n_comp=out.shape[2])
    den = np.array([lp_norm_of_values(grid.norm_of_tuple(u), p) for u in us])
    rows = []
    for rho in separations:
        E = (gap >= rho * t) & (gap >= 0)
        if rho == 0:
            E = gap >= 0
        num = []
        for s in range(samples):
            v = out[s] * E.reshape((side,) + (1,) * (out.ndim - 2))
            num.append(lp_norm_of_values(g_out.norm_of_tuple(v), p))
        rows.append(OffDiagonalRow(float(rho), float(np.max(np.array(num) / den)), int(E.sum())))
    return rows


@dataclass(frozen=True)
class QuadraticResult:
    lhs: NormEstimate
    norm_u: float
    ratio: float


def quadratic_estimate(hd, u: GridFunction, scales, rng=None, p: float = 2.0, perturbed: bool = True,
                       budget: int = 4096) -> QuadraticResult:
    """``E||sum_k eps_k Q_{2^k}^B u||_p`` and its ratio to ``||u||_p``."""
    scales = list(scales)
    vecs = []
    for k in scales:
        q = hd.resolvent(2.0 ** k, "Q", perturbed=perturbed)
        vecs.append(q.apply_values(u.values, u.grid.n))
    space = LpSpace(u.grid, p)
    lhs = rademacher_avg(space, np.stack(vecs) if vecs else np.zeros((0,) + u.grid.shape), 1.0, rng, budget)
    nu = lp_norm(u, p)
    return QuadraticResult(lhs, nu, lhs.value / nu if nu > 0 else 0.0)


def quadratic_multiplier_bound(n: int, J: int, scales) -> float:
    """``sup_xi (sum_k s_k(xi)^2)^(1/2)`` with ``s_k = 2^k z / (1 + (2^k z)^2)``, ``z = 2 pi |xi|``."""
    z = zeta(n, J).ravel()
    z = z[z > 0]
    tot = np.zeros_like(z)
    for k in scales:
        a = 2.0 ** k * z
        tot += (a / (1 + a * a)) ** 2
    return float(np.sqrt(tot.max())) if z.size else 0.0
