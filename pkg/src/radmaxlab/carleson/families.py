"""Carleson families ``b = (b_Q)`` of scalar functions with ``supp b_Q in Q``.

Supports of cubes of one scale are disjoint, so a family is stored as one
full-grid array per scale (``beta[i]`` carries every ``b_Q`` with ``Q`` of
scale ``k = -i``) together with a boolean mask of active cubes.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .._errors import InvalidInputError
from ..banach import K_EXACT, NormEstimate, SpaceDescriptor, sign_patterns
from ..dyadic import (DyadicCube, Grid, GridFunction, ancestor_averages, block_expand, block_mean,
                      lp_norm)
from ..randomness import as_source

_CHUNK_ELEMS = 1 << 22


class CarlesonFamily:
    """Finitely supported family of scalar grid functions indexed by dyadic cubes.

    Parameters
    ----------
    n, J : int
        Dimension and depth of the underlying grid.
    beta : sequence of ndarray
        ``beta[i]`` has shape ``(2^J,)*n`` and holds ``b_Q`` for all cubes of
        scale ``-i`` (``i = 0 .. J``).
    active : sequence of ndarray, optional
        Boolean arrays of shape ``(2^i,)*n``.  Defaults to the cubes on
        which ``beta[i]`` is not identically zero.
    """

    def __init__(self, n: int, J: int, beta, active=None):
        self.grid = Grid(n, J)
        side = self.grid.side
        if len(beta) != J + 1:
            raise InvalidInputError(f"need J+1 = {J + 1} scale arrays, got {len(beta)}")
        self.beta = []
        self.active = []
        for i in range(J + 1):
            b = np.array(beta[i], dtype=complex)
            if b.shape != (side,) * n:
                raise InvalidInputError(f"scale {-i} array has shape {b.shape}")
            nz = block_mean(np.abs(b), n, 1 << (J - i)) > 0
            if active is None:
                act = nz
            else:
                act = np.asarray(active[i], dtype=bool)
                if act.shape != (1 << i,) * n:
                    raise InvalidInputError(f"scale {-i} mask has shape {act.shape}")
                if np.any(nz & ~act):
                    raise InvalidInputError(f"scale {-i} has values on inactive cubes")
            b.setflags(write=False)
            self.beta.append(b)
            self.active.append(act)

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def J(self) -> int:
        return self.grid.J

    @classmethod
    def from_cubes(cls, n: int, J: int, items: dict) -> "CarlesonFamily":
        """Build from ``{cube: GridFunction or full-grid array}``.

        Raises :class:`InvalidInputError` if some ``b_Q`` is non-zero outside ``Q``.
        """
        side = 1 << J
        beta = [np.zeros((side,) * n, dtype=complex) for _ in range(J + 1)]
        active = [np.zeros((1 << i,) * n, dtype=bool) for i in range(J + 1)]
        grid = Grid(n, J)
        for cube, val in items.items():
            if cube.n != n or cube.level < -J:
                raise InvalidInputError(f"cube {cube} does not fit the grid")
            arr = val.values if isinstance(val, GridFunction) else np.asarray(val, dtype=complex)
            arr = np.asarray(arr, dtype=complex).reshape((side,) * n)
            if np.any(arr[~cube.mask(grid)] != 0):
                raise InvalidInputError(f"b_Q for {cube} is not supported in Q")
            i = -cube.level
            if active[i][cube.index]:
                raise InvalidInputError(f"cube {cube} given twice")
            beta[i] = beta[i] + arr
            active[i][cube.index] = True
        return cls(n, J, beta, active)

    def items(self):
        """Yield ``(cube, full-grid array)`` for every active cube."""
        for i, act in enumerate(self.active):
            for idx in zip(*np.nonzero(act)):
                cube = DyadicCube(-i, tuple(int(t) for t in idx))
                m = cube.mask(self.grid)
                yield cube, np.where(m, self.beta[i], 0)

    def cube_count(self) -> int:
        return int(sum(a.sum() for a in self.active))

    def active_levels(self) -> list[int]:
        return [i for i, a in enumerate(self.active) if a.any()]

    def restrict(self, keep) -> "CarlesonFamily":
        """Sub-family of the cubes for which ``keep(cube)`` is true."""
        return CarlesonFamily.from_cubes(self.n, self.J, {c: v for c, v in self.items() if keep(c)})

    def scaled(self, c) -> "CarlesonFamily":
        return CarlesonFamily(self.n, self.J, [complex(c) * b for b in self.beta],
                              [a.copy() for a in self.active])


# -- Car^p norms ------------------------------------------------------------


def _level_terms(b: CarlesonFamily, i: int) -> np.ndarray:
    """Scale arrays ``beta_j``, ``j >= i`` with an active cube, flattened: ``(K, cells)``."""
    rows = [b.beta[j].ravel() for j in range(i, b.J + 1) if b.active[j].any()]
    if not rows:
        return np.zeros((0, b.grid.cells), dtype=complex)
    return np.stack(rows)


def _pointwise_moment(terms: np.ndarray, p: float, rng, k_exact: int, budget: int):
    """``E|sum_j eps_j terms[j, x]|^p`` per cell and whether it is exact."""
    K, cells = terms.shape
    if K == 0:
        return np.zeros(cells), True
    if K <= k_exact:
        pats = sign_patterns(K, half=True)
        exact = True
    else:
        pats = as_source(rng).signs(budget, K)
        exact = False
    out = np.zeros(cells)
    rows = max(1, _CHUNK_ELEMS // max(1, cells))
    for lo in range(0, pats.shape[0], rows):
        s = pats[lo:lo + rows] @ terms
        out += (np.abs(s) ** p).sum(axis=0)
    return out / pats.shape[0], exact


def car_norm(b: CarlesonFamily, p: float, form: str = "square_function", rng=None,
             k_exact: int = K_EXACT, budget: int = 4096) -> float:
    """``sup_S (|S|^-1 int_S F_S(x) dx)^(1/p)`` over all dyadic ``S``.

    ``F_S = [sum_{R in S} |b_R|^2]^(p/2)`` for ``form="square_function"`` (exact)
    and ``F_S = E|sum_{R in S} eps_R b_R|^p`` for ``form="randomized"``
    (enumerated pointwise when at most ``k_exact`` scales are active).
    """
    if p < 1:
        raise InvalidInputError("p must be >= 1")
    n, J = b.n, b.J
    best = 0.0
    if form == "square_function":
        tail = np.zeros(b.grid.spatial_shape)
        for i in range(J, -1, -1):
            tail = tail + np.abs(b.beta[i]) ** 2
            local = block_mean(tail ** (p / 2), n, 1 << (J - i))
            best = max(best, float(local.max()))
    elif form == "randomized":
        src = as_source(rng)
        for i in range(J + 1):
            mom, _ = _pointwise_moment(_level_terms(b, i), p, src.child(i), k_exact, budget)
            local = block_mean(mom.reshape(b.grid.spatial_shape), n, 1 << (J - i))
            best = max(best, float(local.max()))
    else:
        raise InvalidInputError(f"unknown Car form {form!r}")
    return best ** (1.0 / p)


# -- the embedding ------------------------------------------------------------


def carleson_embed_lhs(b: CarlesonFamily, u: GridFunction, p: float, rng=None,
                       k_exact: int = K_EXACT, budget: int = 4096) -> NormEstimate:
    """``(int E||sum_R eps_R b_R(x) <u>_R||_X^p dx)^(1/p)`` over all grid cubes ``R``.

    At a point only the cubes of the chain above it contribute, one per
    scale, so the expectation is enumerated over the active scales.
    """
    g = u.grid
    if (g.n, g.J) != (b.n, b.J) or g.n_comp != 1:
        raise InvalidInputError("u must be X-valued on the grid of b")
    if p < 1:
        raise InvalidInputError("p must be >= 1")
    levels = b.active_levels()
    K = len(levels)
    if K == 0:
        return NormEstimate(0.0, "exact_enum", 1, 0.0, "exact")
    anc = ancestor_averages(u)[levels]  # (K,) + spatial + (1,) + xshape
    coef = np.stack([b.beta[i] for i in levels])  # (K,) + spatial
    terms = anc * coef.reshape(coef.shape + (1,) * (anc.ndim - coef.ndim))
    terms = terms.reshape(K, g.cells, -1)
    xs = tuple(g.space.shape)
    if K <= k_exact:
        pats = sign_patterns(K, half=True)
        method, semantic = "exact_enum", "exact"
    else:
        pats = as_source(rng).signs(budget, K)
        method, semantic = "monte_carlo", "estimate"
    S = pats.shape[0]
    per_sample = np.zeros(S)
    rows = max(1, _CHUNK_ELEMS // max(1, S * terms.shape[2]))
    for lo in range(0, g.cells, rows):
        t = terms[:, lo:lo + rows]
        sums = np.einsum("sk,kcd->scd", pats, t)
        nrm = g.space.norm(sums.reshape(sums.shape[:2] + xs))
        per_sample += (nrm ** p).sum(axis=1)
    per_sample *= g.cell_volume
    if semantic == "exact":
        return NormEstimate(float(per_sample.mean() ** (1.0 / p)), method, 1 << K, 0.0, semantic)
    m = float(per_sample.mean())
    se_m = float(per_sample.std(ddof=1) / math.sqrt(S)) if S > 1 else math.inf
    se = (1.0 / p) * m ** (1.0 / p - 1.0) * se_m if m > 0 else 0.0
    return NormEstimate(m ** (1.0 / p), method, S, se, semantic)


# -- random families and the embedding experiment ----------------------------------------


def random_family(n: int, J: int, rng=None, prob: float = 0.5, normalize_p: float | None = 2.0,
                  max_level: int | None = None) -> CarlesonFamily:
    """Random family: each cube active with probability ``prob``, cell values uniform on the unit disc.

    With ``normalize_p`` set the family is divided by its square-function
    ``Car^p`` norm.  ``max_level`` limits the finest active scale index.
    """
    gen = as_source(rng).generator()
    side = 1 << J
    top = J if max_level is None else min(J, max_level)
    beta, active = [], []
    for i in range(J + 1):
        act = (gen.random((1 << i,) * n) < prob) if i <= top else np.zeros((1 << i,) * n, dtype=bool)
        r = np.sqrt(gen.random((side,) * n))
        z = r * np.exp(2j * np.pi * gen.random((side,) * n))
        beta.append(z * block_expand(act, n, 1 << (J - i)))
        active.append(act)
    fam = CarlesonFamily(n, J, beta, active)
    if normalize_p is not None:
        c = car_norm(fam, normalize_p)
        if c > 0:
            fam = fam.scaled(1.0 / c)
    return fam


def chain_family(n: int, J: int, cell=None, depth: int | None = None) -> CarlesonFamily:
    """``b_Q = 1_Q`` on the chain of cubes above ``cell`` (first ``depth`` scales)."""
    cell = (0,) * n if cell is None else tuple(cell)
    depth = J + 1 if depth is None else depth
    grid = Grid(n, J)
    items = {}
    for i in range(depth):
        cube = DyadicCube.containing(-i, cell, J)
        items[cube] = cube.mask(grid).astype(complex)
    return CarlesonFamily.from_cubes(n, J, items)


@dataclass
class EmbeddingReport:
    space: str
    p: float
    eps: float
    n: int
    J: int
    form: str
    ratios: list = field(default_factory=list)
    lhs: list = field(default_factory=list)
    car: list = field(default_factory=list)
    norm_u: list = field(default_factory=list)
    methods: list = field(default_factory=list)
    seed: int = 0

    @property
    def constant(self) -> float:
        return float(max(self.ratios)) if self.ratios else 0.0

    def quantiles(self, qs=(0.5, 0.9, 1.0)) -> dict:
        if not self.ratios:
            return {}
        return {str(q): float(np.quantile(self.ratios, q)) for q in qs}


def embedding_constant_experiment(space: SpaceDescriptor, p: float, eps: float, ensemble: int, rng=None,
                                  J: int = 5, n: int = 1, form: str = "square_function",
                                  kind: str = "random") -> EmbeddingReport:
    """Ratios ``lhs / (||b||_{Car^(p+eps)} ||u||_p)`` over random ``(b, u)``.

    ``kind="random"`` draws families with :func:`random_family`;
    ``kind="chain"`` uses indicator chains above a random cell, the
    concentrated case.
    """
    src = as_source(rng)
    grid = Grid(n, J, 1, space)
    rep = EmbeddingReport(space.spec(), float(p), float(eps), n, J, form, seed=src.seed)
    for e in range(ensemble):
        s = src.child(e)
        if kind == "random":
            b = random_family(n, J, s.child(0))
        elif kind == "chain":
            cell = tuple(int(c) for c in s.child(0).generator().integers(0, grid.side, n))
            b = chain_family(n, J, cell)
        else:
            raise InvalidInputError(f"unknown family kind {kind!r}")
        u = GridFunction.random(grid, s.child(1))
        est = carleson_embed_lhs(b, u, p, s.child(2))
        c = car_norm(b, p + eps, form, s.child(3))
        nu = lp_norm(u, p)
        rep.lhs.append(est.value)
        rep.car.append(c)
        rep.norm_u.append(nu)
        rep.methods.append(est.method)
        rep.ratios.append(est.value / (c * nu) if c * nu > 0 else 0.0)
    return rep


# -- CSV interchange ------------------------------------------------------------

CSV_COLUMNS = ["level", "index", "cell", "re", "im"]


def _fmt_tuple(t) -> str:
    return ";".join(str(int(x)) for x in t)


def write_family_csv(b: CarlesonFamily, path) -> None:
    """One row per (active cube, cell in the cube); ``index`` and ``cell`` are ``;``-joined tuples."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# radmaxlab-carleson n={b.n} J={b.J}\n")
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for cube, arr in b.items():
            sl = cube.cell_slices(b.J)
            ranges = [range(s.start, s.stop) for s in sl]
            for cell in itertools.product(*ranges):
                z = arr[cell]
                w.writerow([cube.level, _fmt_tuple(cube.index), _fmt_tuple(cell),
                            repr(float(z.real)), repr(float(z.imag))])


def read_family_csv(path) -> CarlesonFamily:
    with open(path, newline="") as fh:
        first = fh.readline()
        if not first.startswith("# radmaxlab-carleson"):
            raise InvalidInputError("missing Carleson-family header line")
        header = dict(item.split("=", 1) for item in first.split()[2:])
        n, J = int(header["n"]), int(header["J"])
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_COLUMNS:
            raise InvalidInputError(f"expected columns {CSV_COLUMNS}")
        side = 1 << J
        items: dict = {}
        for row in reader:
            cube = DyadicCube(int(row["level"]), tuple(int(x) for x in row["index"].split(";")))
            cell = tuple(int(x) for x in row["cell"].split(";"))
            arr = items.setdefault(cube, np.zeros((side,) * n, dtype=complex))
            try:
                arr[cell] = complex(float(row["re"]), float(row["im"]))
            except IndexError as exc:
                raise InvalidInputError(f"cell {cell} out of range") from exc
    return CarlesonFamily.from_cubes(n, J, items)
