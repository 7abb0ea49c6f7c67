"""Stopping-time decomposition of the dyadic tree by chain R-bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .._errors import InvalidInputError
from ..dyadic import DyadicCube, GridFunction, block_expand
from ..radmax import OptimizerSettings, chain_rbounds


@dataclass
class StoppingDecomposition:
    """Classes of the cubes below the unit cube.

    ``classes[i]`` (shape ``(2^i,)*n``) holds the class ``k`` of every cube of
    scale ``-i``: the smallest ``k >= 0`` with chain value ``<= A 2^k``.
    ``stopping[k]`` lists the maximal cubes whose chain value exceeds
    ``A 2^k``.  ``chain_values[i]`` are the chain R-bound lower bounds.
    """

    A: float
    classes: list
    stopping: dict
    chain_values: list
    tol: float = 0.05
    containment: dict = field(default_factory=dict)

    @property
    def max_class(self) -> int:
        return int(max(int(c.max()) for c in self.classes))

    def good(self, k: int) -> list:
        """Boolean masks per scale of the cubes with class at most ``k``."""
        return [c <= k for c in self.classes]

    def cubes_of_class(self, k: int) -> list[DyadicCube]:
        out = []
        for i, c in enumerate(self.classes):
            for idx in zip(*np.nonzero(c == k)):
                out.append(DyadicCube(-i, tuple(int(t) for t in idx)))
        return out

    def measure(self, k: int) -> float:
        """Total volume of the cubes in ``stopping[k]``."""
        return float(sum(c.volume for c in self.stopping.get(k, [])))

    def check_structure(self) -> dict:
        """Nestedness of the good sets, exhaustiveness and disjointness of stopping cubes."""
        nested = all(np.all(~a | b) for k in range(self.max_class)
                     for a, b in zip(self.good(k), self.good(k + 1)))
        exhaustive = all(np.all(c >= 0) for c in self.classes) and \
            all(np.all(g) for g in self.good(self.max_class))
        disjoint = True
        for cubes in self.stopping.values():
            for a in range(len(cubes)):
                for b in range(a + 1, len(cubes)):
                    if cubes[a].contains(cubes[b]) or cubes[b].contains(cubes[a]):
                        disjoint = False
        return {"nested": bool(nested), "exhaustive": bool(exhaustive), "disjoint": bool(disjoint)}


def _classify(values: np.ndarray, A: float) -> np.ndarray:
    r = np.asarray(values, dtype=float) / A
    k = np.zeros(r.shape, dtype=int)
    big = r > 1
    k[big] = np.ceil(np.log2(r[big])).astype(int)
    # guard against rounding at exact powers of two
    k[big] = np.where(r[big] > 2.0 ** k[big], k[big] + 1, k[big])
    k[big] = np.where((k[big] > 0) & (r[big] <= 2.0 ** (k[big] - 1)), k[big] - 1, k[big])
    return k


def stopping_decomposition(u: GridFunction, A: float, settings: OptimizerSettings = OptimizerSettings(),
                           rng=None, tol: float = 0.05) -> StoppingDecomposition:
    """Classify every cube by the threshold its chain R-bound first stays under.

    The chain value of ``S`` is the optimizer's lower bound for
    ``sup_{||lam|| <= 1} E||sum_{S in R} eps_R lam_R <u>_R||`` over the
    cubes from ``S`` up to the unit cube.  The containment of each stopping
    family in the level set ``{M_R u > A 2^(k) (1 - tol)}`` is checked
    against the finest-scale chain values.
    """
    if not (A > 0 and math.isfinite(A)):
        raise InvalidInputError("threshold A must be positive")
    g = u.grid
    chains = chain_rbounds(u, settings, rng)
    values = [v for v, _ in chains]
    classes = [_classify(v, A) for v in values]
    top = max(int(c.max()) for c in classes)
    stopping: dict = {}
    for k in range(top):
        found = []
        for i, c in enumerate(classes):
            bad = c > k
            if i > 0:
                parent_bad = block_expand(classes[i - 1] > k, g.n, 2)
                bad = bad & ~parent_bad
            for idx in zip(*np.nonzero(bad)):
                found.append(DyadicCube(-i, tuple(int(t) for t in idx)))
        stopping[k] = found
    dec = StoppingDecomposition(float(A), classes, stopping, values, tol)
    finest = values[-1]
    for k, cubes in stopping.items():
        level = A * 2.0 ** k * (1 - tol)
        ok = True
        for cube in cubes:
            if not np.all(finest[cube.cell_slices(g.J)] > level):
                ok = False
                break
        dec.containment[k] = ok
    return dec
