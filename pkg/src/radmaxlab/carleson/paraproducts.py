"""Dyadic paraproducts ``P(f, u) = sum_Q sum_eta <f, h_Q^eta> <u>_Q h_Q^eta / |Q|``."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .._errors import InvalidInputError
from ..banach import SpaceDescriptor
from ..dyadic import (Grid, GridFunction, HaarCoefficients, bmo_norm, haar_decompose, haar_reconstruct, lp_norm,
                      scale_averages)
from ..randomness import as_source


def _is_scalar(g: Grid) -> bool:
    return g.n_comp == 1 and g.space.size == 1


def paraproduct(f: GridFunction, u: GridFunction) -> GridFunction:
    """Paraproduct of ``f`` and ``u`` on a common grid.

    One of the two must be scalar valued; the result takes the values of the
    other.  With the Haar normalisation ``|h_Q^eta| = 1_Q`` the coefficient
    ``<f, h_Q^eta>/|Q|`` is exactly what :func:`haar_decompose` returns.
    """
    gf, gu = f.grid, u.grid
    if (gf.n, gf.J) != (gu.n, gu.J):
        raise InvalidInputError("f and u live on different grids")
    if not (_is_scalar(gf) or _is_scalar(gu)):
        raise InvalidInputError("one of f and u must be scalar valued")
    out_grid = gu if _is_scalar(gf) else gf
    n = gf.n
    coeffs, _ = haar_decompose(f)
    avgs = scale_averages(u)
    vs = out_grid.value_shape
    levels = []
    for i, c in enumerate(coeffs.levels):
        # c: (m,)*n + (E,) + f.value_shape ; avgs[i]: (m,)*n + u.value_shape
        a = avgs[i][(slice(None),) * n + (None,)]
        if _is_scalar(gf):
            c = c.reshape(c.shape[:n + 1] + (1,) * len(vs))
        else:
            a = a.reshape(a.shape[:n + 1] + (1,) * len(vs))
        levels.append(c * a)
    return haar_reconstruct(HaarCoefficients(out_grid, tuple(levels)), np.zeros(vs))


@dataclass
class ParaproductReport:
    space: str
    p: float
    n: int
    J: int
    swapped: bool
    ratios: list = field(default_factory=list)
    bmo: list = field(default_factory=list)
    norm_u: list = field(default_factory=list)
    norm_out: list = field(default_factory=list)
    skipped: int = 0
    seed: int = 0

    @property
    def constant(self) -> float:
        return float(max(self.ratios)) if self.ratios else 0.0


# -- continuum test inputs sampled on the grid ----------------------------------------


def _centres(J: int, n: int):
    x = (np.arange(1 << J) + 0.5) / (1 << J)
    return np.meshgrid(*([x] * n), indexing="ij")


def _rough_scalar(params: dict, J: int, n: int) -> np.ndarray:
    """Log singularity, jumps and a few Fourier modes; parameters fixed independently of ``J``."""
    xs = _centres(J, n)
    val = np.zeros(xs[0].shape)
    for c, x0 in zip(params["log_c"], params["log_at"]):
        dist = np.sqrt(sum(((x - x0[a] + 0.5) % 1.0 - 0.5) ** 2 for a, x in enumerate(xs)))
        val += c * np.log(np.maximum(dist, 2.0 ** -30))
    for c, x0, ax in zip(params["jump_c"], params["jump_at"], params["jump_axis"]):
        val += c * (xs[ax] >= x0)
    for c, kvec in zip(params["mode_c"], params["mode_k"]):
        val += np.real(c * np.exp(2j * np.pi * sum(k * x for k, x in zip(kvec, xs))))
    return val


def _draw_params(gen, n: int, terms: int = 3) -> dict:
    return {
        "log_c": gen.normal(size=terms) * 0.5,
        "log_at": gen.random((terms, n)),
        "jump_c": gen.normal(size=terms),
        "jump_at": gen.random(terms),
        "jump_axis": gen.integers(0, n, terms),
        "mode_c": gen.normal(size=terms) + 1j * gen.normal(size=terms),
        "mode_k": gen.integers(-4, 5, (terms, n)),
    }


def sampled_function(grid: Grid, rng) -> GridFunction:
    """A rough continuum function of the point, sampled at cell centres.

    Every coordinate of ``X^N`` gets its own random profile; the profile
    parameters depend only on ``rng``, so refining the grid samples the
    same function.
    """
    src = as_source(rng)
    coords = int(np.prod(grid.value_shape))
    cols = []
    for c in range(coords):
        gen = src.child(c).generator()
        cols.append(_rough_scalar(_draw_params(gen, grid.n), grid.J, grid.n))
    vals = np.stack(cols, axis=-1).reshape(grid.spatial_shape + grid.value_shape)
    return GridFunction(grid, vals)


def paraproduct_bound_experiment(space: SpaceDescriptor, p: float, ensemble: int, rng=None, J: int = 6,
                                 n: int = 1, swapped: bool = False) -> ParaproductReport:
    """Ratios ``||P(f,u)||_p / (||f||_BMO ||u||_p)`` over sampled rough inputs.

    ``swapped=False``: scalar ``f``, X-valued ``u``.  ``swapped=True``:
    X-valued ``f``, scalar ``u``.  Members with ``||f||_BMO = 0`` are skipped.
    """
    src = as_source(rng)
    scalar = Grid(n, J)
    vec = Grid(n, J, 1, space)
    rep = ParaproductReport(space.spec(), float(p), n, J, bool(swapped), seed=src.seed)
    for e in range(ensemble):
        s = src.child(e)
        f = sampled_function(vec if swapped else scalar, s.child(0))
        u = sampled_function(scalar if swapped else vec, s.child(1))
        bmo = bmo_norm(f)
        if bmo <= 1e-14:
            rep.skipped += 1
            continue
        nu = lp_norm(u, p)
        out = lp_norm(paraproduct(f, u), p)
        rep.bmo.append(bmo)
        rep.norm_u.append(nu)
        rep.norm_out.append(out)
        rep.ratios.append(out / (bmo * nu))
    return rep
