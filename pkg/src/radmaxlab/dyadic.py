"""Periodic dyadic grids on the unit cube and X^N-valued grid functions.

A :class:`GridFunction` on a grid of depth ``J`` in dimension ``n`` stores its
values in an array of shape ``(2^J,)*n + (N,) + X.shape``: spatial axes first,
then the component axis, then the coordinates of the Banach space X.  Scales
are indexed by ``k`` in ``[-J, 0]``; cubes of scale ``k`` have side ``2^k``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ._errors import InvalidInputError, ResourceError, UnsupportedSpaceError
from .banach import ProductNorm, SpaceDescriptor
from .randomness import as_source

MAX_ENTRIES = 1 << 26


@dataclass(frozen=True)
class Grid:
    n: int
    J: int
    n_comp: int = 1
    space: SpaceDescriptor = SpaceDescriptor.scalar()

    def __post_init__(self):
        if self.n not in (1, 2):
            raise InvalidInputError("only n = 1 or n = 2 is supported")
        if self.J < 0:
            raise InvalidInputError("depth J must be >= 0")
        if self.n_comp < 1:
            raise InvalidInputError("N_comp must be >= 1")
        if self.size > MAX_ENTRIES:
            raise ResourceError(f"grid with {self.size} entries exceeds the limit {MAX_ENTRIES}")

    @property
    def side(self) -> int:
        return 1 << self.J

    @property
    def cells(self) -> int:
        return self.side ** self.n

    @property
    def spatial_shape(self) -> tuple[int, ...]:
        return (self.side,) * self.n

    @property
    def value_shape(self) -> tuple[int, ...]:
        return (self.n_comp,) + tuple(self.space.shape)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.spatial_shape + self.value_shape

    @property
    def size(self) -> int:
        return int(np.prod(self.spatial_shape + self.value_shape))

    @property
    def cell_volume(self) -> float:
        return 2.0 ** (-self.n * self.J)

    def with_(self, **changes) -> "Grid":
        fields = dict(n=self.n, J=self.J, n_comp=self.n_comp, space=self.space)
        fields.update(changes)
        return Grid(**fields)

    def check_scale(self, k: int) -> int:
        if int(k) != k or not (-self.J <= k <= 0):
            raise InvalidInputError(f"scale k={k} outside [-{self.J}, 0]")
        return int(k)

    def cubes(self, k: int):
        """All cubes of scale ``k`` in C order."""
        k = self.check_scale(k)
        m = 1 << (-k)
        for idx in itertools.product(range(m), repeat=self.n):
            yield DyadicCube(k, idx)

    def all_cubes(self):
        for k in range(0, -self.J - 1, -1):
            yield from self.cubes(k)

    @cached_property
    def norm_of_tuple(self) -> ProductNorm:
        return ProductNorm(self.space, self.n_comp)


@dataclass(frozen=True, order=True)
class DyadicCube:
    level: int
    index: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "index", tuple(int(i) for i in self.index))
        m = 1 << (-self.level) if self.level <= 0 else 0
        if self.level > 0 or any(not (0 <= i < m) for i in self.index):
            raise InvalidInputError(f"invalid cube {self.level}, {self.index}")

    @property
    def n(self) -> int:
        return len(self.index)

    @property
    def side(self) -> float:
        return 2.0 ** self.level

    @property
    def volume(self) -> float:
        return 2.0 ** (self.level * self.n)

    def parent(self) -> "DyadicCube":
        if self.level == 0:
            raise InvalidInputError("the unit cube has no parent")
        return DyadicCube(self.level + 1, tuple(i // 2 for i in self.index))

    def children(self) -> list["DyadicCube"]:
        return [DyadicCube(self.level - 1, tuple(2 * i + o for i, o in zip(self.index, off)))
                for off in itertools.product((0, 1), repeat=self.n)]

    def contains(self, other: "DyadicCube") -> bool:
        if other.level > self.level:
            return False
        shift = self.level - other.level
        return all((j >> shift) == i for i, j in zip(self.index, other.index))

    def cell_slices(self, J: int) -> tuple[slice, ...]:
        b = 1 << (J + self.level)
        return tuple(slice(i * b, (i + 1) * b) for i in self.index)

    def mask(self, grid: Grid) -> np.ndarray:
        m = np.zeros(grid.spatial_shape, dtype=bool)
        m[self.cell_slices(grid.J)] = True
        return m

    @classmethod
    def containing(cls, k: int, cell: tuple[int, ...], J: int) -> "DyadicCube":
        """The scale-``k`` cube containing finest cell ``cell``."""
        shift = J + k
        return cls(k, tuple(c >> shift for c in cell))


class GridFunction:
    """Immutable X^N-valued piecewise-constant function on a dyadic grid."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: Grid, values):
        values = np.array(values, dtype=complex)
        if values.shape != grid.shape:
            if values.shape == grid.spatial_shape + tuple(grid.space.shape) and grid.n_comp == 1:
                values = values.reshape(grid.shape)
            elif grid.value_shape == (1, 1) and values.shape == grid.spatial_shape:
                values = values.reshape(grid.shape)
            else:
                raise InvalidInputError(f"values shape {values.shape} does not match grid shape {grid.shape}")
        values.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    def __setattr__(self, name, value):
        raise AttributeError("GridFunction is immutable")

    def __repr__(self):
        g = self.grid
        return f"GridFunction(n={g.n}, J={g.J}, N={g.n_comp}, space={g.space.spec()})"

    # -- constructors ---------------------------------------------------------

    @classmethod
    def zeros(cls, grid: Grid) -> "GridFunction":
        return cls(grid, np.zeros(grid.shape, dtype=complex))

    @classmethod
    def constant(cls, grid: Grid, c) -> "GridFunction":
        c = np.broadcast_to(np.asarray(c, dtype=complex), grid.value_shape)
        return cls(grid, np.broadcast_to(c, grid.shape).copy())

    @classmethod
    def scalar(cls, values, n: int = 1) -> "GridFunction":
        """Scalar function from a ``(2^J,)*n`` array."""
        values = np.asarray(values)
        side = values.shape[0]
        J = int(round(np.log2(side)))
        if (1 << J) != side or values.shape != (side,) * n:
            raise InvalidInputError("scalar values must have shape (2^J,)*n")
        return cls(Grid(n, J), values.reshape(values.shape + (1, 1)))

    @classmethod
    def random(cls, grid: Grid, rng=None, real: bool = False) -> "GridFunction":
        """Coordinatewise standard (complex) Gaussian values."""
        gen = as_source(rng).generator()
        v = gen.standard_normal(grid.shape)
        if not real:
            v = (v + 1j * gen.standard_normal(grid.shape)) / np.sqrt(2.0)
        return cls(grid, v)

    @classmethod
    def indicator(cls, grid: Grid, cube: DyadicCube, value=1.0) -> "GridFunction":
        v = np.zeros(grid.shape, dtype=complex)
        v[cube.cell_slices(grid.J)] = np.broadcast_to(np.asarray(value, dtype=complex), grid.value_shape)
        return cls(grid, v)

    @classmethod
    def haar(cls, grid: Grid, cube: DyadicCube, eta=None, value=1.0) -> "GridFunction":
        """``h_Q^eta * value`` normalised so that ``|h_Q^eta| = 1_Q``."""
        eta = haar_etas(grid.n)[0] if eta is None else tuple(eta)
        if cube.level <= -grid.J:
            raise InvalidInputError("finest cells carry no Haar functions")
        pattern = _haar_pattern(grid, cube, eta)
        v = pattern.reshape(grid.spatial_shape + (1,) * len(grid.value_shape)) * \
            np.broadcast_to(np.asarray(value, dtype=complex), grid.value_shape)
        return cls(grid, v)

    # -- arithmetic -----------------------------------------------------------

    def _check(self, other: "GridFunction"):
        if not isinstance(other, GridFunction) or other.grid != self.grid:
            raise InvalidInputError("grid functions live on different grids")

    def __add__(self, other):
        self._check(other)
        return GridFunction(self.grid, self.values + other.values)

    def __sub__(self, other):
        self._check(other)
        return GridFunction(self.grid, self.values - other.values)

    def __neg__(self):
        return GridFunction(self.grid, -self.values)

    def __mul__(self, c):
        if isinstance(c, GridFunction):
            raise TypeError("use pointwise operators for products of grid functions")
        return GridFunction(self.grid, self.values * complex(c))

    __rmul__ = __mul__

    def pointwise_norm(self) -> np.ndarray:
        """``||u(x)||_{X^N}`` on every finest cell."""
        return self.grid.norm_of_tuple(self.values)

    def allclose(self, other, atol=1e-12, rtol=0.0) -> bool:
        self._check(other)
        return bool(np.allclose(self.values, other.values, atol=atol, rtol=rtol))


# -- block averaging ----------------------------------------------------------


def block_mean(arr: np.ndarray, n: int, b: int) -> np.ndarray:
    """Average ``arr`` over blocks of ``b`` cells along its first ``n`` axes."""
    if b == 1:
        return arr
    side = arr.shape[0]
    m = side // b
    shape = []
    for _ in range(n):
        shape += [m, b]
    v = arr.reshape(tuple(shape) + arr.shape[n:])
    return v.mean(axis=tuple(2 * i + 1 for i in range(n)))


def block_expand(arr: np.ndarray, n: int, b: int) -> np.ndarray:
    """Inverse of :func:`block_mean` for block-constant data."""
    if b == 1:
        return arr
    for ax in range(n):
        arr = np.repeat(arr, b, axis=ax)
    return arr


def scale_averages(u: GridFunction) -> list[np.ndarray]:
    """Coarse arrays of cube averages, index ``i`` holding scale ``k = -i``.

    Entry ``i`` has spatial shape ``(2^i,)*n``.
    """
    g = u.grid
    out = [None] * (g.J + 1)
    cur = u.values
    out[g.J] = cur
    for i in range(g.J - 1, -1, -1):
        cur = block_mean(cur, g.n, 2)
        out[i] = cur
    return out


def ancestor_averages(u: GridFunction) -> np.ndarray:
    """Averages over the J+1 ancestor cubes of every finest cell.

    Shape ``(J+1,) + grid.shape``; slot ``i`` is the average over the cube of
    scale ``k = -i`` containing the cell (slot 0 is the unit cube).
    """
    g = u.grid
    avgs = scale_averages(u)
    return np.stack([block_expand(a, g.n, 1 << (g.J - i)) for i, a in enumerate(avgs)])


def conditional_expectation(u: GridFunction, k: int) -> GridFunction:
    """``A_{2^k} u``: replace ``u`` on each cube of scale ``k`` by its average."""
    g = u.grid
    k = g.check_scale(k)
    b = 1 << (g.J + k)
    return GridFunction(g, block_expand(block_mean(u.values, g.n, b), g.n, b))


# -- Haar system ----------------------------------------------------------------


def haar_etas(n: int) -> list[tuple[int, ...]]:
    """Nonzero signatures ``eta`` in {0,1}^n, in lexicographic order."""
    return [e for e in itertools.product((0, 1), repeat=n) if any(e)]


def _child_signs(n: int) -> np.ndarray:
    """``signs[e, c]`` = value of ``h^eta_e`` on child offset ``c`` (C order)."""
    etas = haar_etas(n)
    offs = list(itertools.product((0, 1), repeat=n))
    s = np.ones((len(etas), len(offs)))
    for a, e in enumerate(etas):
        for c, o in enumerate(offs):
            s[a, c] = np.prod([(1 - 2 * oi) if ei else 1 for ei, oi in zip(e, o)])
    return s


def _haar_pattern(grid: Grid, cube: DyadicCube, eta) -> np.ndarray:
    b = 1 << (grid.J + cube.level)
    half = b // 2
    pat = np.zeros(grid.spatial_shape)
    local = np.ones((b,) * grid.n)
    for ax, e in enumerate(eta):
        if e:
            sgn = np.concatenate([np.ones(half), -np.ones(half)])
            shape = [1] * grid.n
            shape[ax] = b
            local = local * sgn.reshape(shape)
    pat[cube.cell_slices(grid.J)] = local
    return pat


@dataclass(frozen=True)
class HaarCoefficients:
    """Haar coefficients of a grid function.

    ``levels[i]`` holds the coefficients of the cubes of scale ``k = -i``
    (``i = 0 .. J-1``) with shape ``(2^i,)*n + (2^n - 1,) + value_shape``; the
    axis after the spatial ones enumerates ``haar_etas(n)``.
    """

    grid: Grid
    levels: tuple

    def coefficient(self, cube: DyadicCube, eta) -> np.ndarray:
        a = haar_etas(self.grid.n).index(tuple(eta))
        return self.levels[-cube.level][cube.index + (a,)]

    def items(self):
        """Yield ``(cube, eta, value)`` for every coefficient."""
        etas = haar_etas(self.grid.n)
        for i, arr in enumerate(self.levels):
            for idx in itertools.product(range(1 << i), repeat=self.grid.n):
                for a, e in enumerate(etas):
                    yield DyadicCube(-i, idx), e, arr[idx + (a,)]


def haar_decompose(u: GridFunction) -> tuple[HaarCoefficients, np.ndarray]:
    """Haar coefficients ``<u, h_Q^eta>/|Q|`` and the global mean of ``u``."""
    g = u.grid
    avgs = scale_averages(u)
    signs = _child_signs(g.n)
    levels = []
    for i in range(g.J):
        child = avgs[i + 1]
        m = 1 << i
        shape = []
        for _ in range(g.n):
            shape += [m, 2]
        v = child.reshape(tuple(shape) + child.shape[g.n:])
        # move the offset axes together: (m,..., 2,..., rest)
        perm = [2 * a for a in range(g.n)] + [2 * a + 1 for a in range(g.n)]
        perm += list(range(2 * g.n, v.ndim))
        v = v.transpose(perm).reshape((m,) * g.n + (1 << g.n,) + child.shape[g.n:])
        coef = np.tensordot(v, signs, axes=([g.n], [1])) / (1 << g.n)
        levels.append(np.moveaxis(coef, -1, g.n))
    return HaarCoefficients(g, tuple(levels)), avgs[0].reshape(g.value_shape)


def haar_reconstruct(coeffs: HaarCoefficients, mean) -> GridFunction:
    """Inverse of :func:`haar_decompose`."""
    g = coeffs.grid
    signs = _child_signs(g.n)
    cur = np.broadcast_to(np.asarray(mean, dtype=complex), g.value_shape).reshape((1,) * g.n + g.value_shape)
    for i in range(g.J):
        m = 1 << i
        c = coeffs.levels[i]  # (m,)*n + (E,) + vs
        det = np.tensordot(np.moveaxis(c, g.n, -1), signs, axes=([-1], [0]))  # (m,)*n + vs + (2^n,)
        kids = cur[..., None] + det
        kids = np.moveaxis(kids, -1, g.n).reshape((m,) * g.n + (2,) * g.n + g.value_shape)
        perm = []
        for a in range(g.n):
            perm += [a, g.n + a]
        perm += list(range(2 * g.n, kids.ndim))
        cur = kids.transpose(perm).reshape((2 * m,) * g.n + g.value_shape)
    return GridFunction(g, cur)


# -- maximal functions and norms -------------------------------------------------


def dyadic_maximal(u: GridFunction) -> np.ndarray:
    """``M u(x) = max_k ||A_{2^k} u(x)||_{X^N}`` as a real ``(2^J,)*n`` array."""
    g = u.grid
    out = np.zeros(g.spatial_shape)
    for i, a in enumerate(scale_averages(u)):
        out = np.maximum(out, block_expand(g.norm_of_tuple(a), g.n, 1 << (g.J - i)))
    return out


def lattice_maximal(u: GridFunction) -> GridFunction:
    """Coordinatewise ``sup_k |<u>_Q|`` for lattice-valued ``u``."""
    g = u.grid
    if not g.space.is_lattice:
        raise UnsupportedSpaceError(f"{g.space.spec()} is not a lattice")
    out = np.zeros(g.shape)
    for i, a in enumerate(scale_averages(u)):
        out = np.maximum(out, block_expand(np.abs(a), g.n, 1 << (g.J - i)))
    return GridFunction(g, out)


def lp_norm_of_values(pointwise: np.ndarray, p: float) -> float:
    """Discrete L^p norm of nonnegative cell values on the unit cube."""
    pointwise = np.asarray(pointwise, dtype=float)
    if np.isinf(p):
        return float(pointwise.max())
    if p < 1:
        raise InvalidInputError("p must be >= 1")
    top = pointwise.max()
    if top == 0:
        return 0.0
    return float(top * np.mean((pointwise / top) ** p) ** (1.0 / p))


def lp_norm(u: GridFunction, p: float) -> float:
    """``(sum_cells 2^(-nJ) ||u(cell)||^p)^(1/p)``."""
    return lp_norm_of_values(u.pointwise_norm(), p)


def bmo_norm(f: GridFunction) -> float:
    """Dyadic BMO norm: sup over cubes of the mean L^1 oscillation."""
    g = f.grid
    best = 0.0
    for i, a in enumerate(scale_averages(f)):
        b = 1 << (g.J - i)
        osc = g.norm_of_tuple(f.values - block_expand(a, g.n, b))
        best = max(best, float(block_mean(osc, g.n, b).max()))
    return best


class LpSpace:
    """``L^p(unit cube; X^N)`` restricted to a grid, usable as a Banach space.

    Exposes ``shape`` and a batched ``norm`` so the randomized norm routines
    of :mod:`radmaxlab.banach` accept grid-function values directly.
    """

    def __init__(self, grid: Grid, p: float = 2.0):
        if p < 1:
            raise InvalidInputError("p must be >= 1")
        self.grid = grid
        self.p = float(p)

    @property
    def shape(self):
        return self.grid.shape

    @property
    def is_hilbert(self) -> bool:
        return self.p == 2 and (self.grid.space.is_hilbert)

    is_lattice = False

    def norm(self, batch) -> np.ndarray:
        batch = np.asarray(batch)
        g = self.grid
        lead = batch.shape[:batch.ndim - len(g.shape)]
        pw = g.norm_of_tuple(batch)  # lead + spatial
        flat = pw.reshape(lead + (-1,))
        if np.isinf(self.p):
            return flat.max(axis=-1)
        top = flat.max(axis=-1, keepdims=True)
        safe = np.where(top > 0, top, 1.0)
        return np.mean((flat / safe) ** self.p, axis=-1) ** (1.0 / self.p) * safe[..., 0]
