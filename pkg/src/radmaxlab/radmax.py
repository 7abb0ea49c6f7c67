"""Rademacher maximal function, RMF experiments and the l^1 counterexample.

``M_R u(x)`` is the R-bound of the averages ``{<u>_Q : Q containing x}``,
computed as ``sup_{||lam||_2 <= 1} E||sum_k eps_k lam_k <u>_{Q_k(x)}||``.  The
supremum of this convex function over the ball is approximated from below by a
finite candidate set plus a monotone ascent, so every value returned here is a
certified lower bound for the true maximal function.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from ._errors import InvalidInputError, ResourceError
from .banach import K_EXACT, SpaceDescriptor, sign_patterns
from .dyadic import (Grid, GridFunction, ancestor_averages, block_expand, dyadic_maximal,
                     lattice_maximal, lp_norm, lp_norm_of_values, scale_averages)
from .randomness import as_source

_CHUNK_ELEMS = 1 << 22


@dataclass(frozen=True)
class OptimizerSettings:
    restarts: int = 4
    sweeps: int = 20
    moment: float = 1.0
    k_exact: int = K_EXACT
    budget: int = 4096


def _objective_and_grad(a, lam, space, pats, moment, want_grad=True):
    """f(lam) and a subgradient for a batch of points.

    ``a``: (B, K, D) flattened vectors, ``lam``: (B, K) real, ``pats``: (S, K).
    """
    B, K, D = a.shape
    S = pats.shape[0]
    shape = tuple(space.shape)
    sums = np.einsum("sk,bkd->bsd", pats, a * lam[:, :, None])
    nrm = space.norm(sums.reshape((B, S) + shape))  # (B, S)
    if moment == 1:
        f = nrm.mean(axis=1)
    else:
        f = np.mean(nrm ** moment, axis=1) ** (1.0 / moment)
    if not want_grad:
        return f, None
    F = space.functional(sums.reshape((B, S) + shape)).reshape(B, S, D)
    if moment != 1:
        safe = np.where(f > 0, f, 1.0)[:, None]
        F = F * ((nrm / safe) ** (moment - 1))[:, :, None]
    g = np.real(np.einsum("bsd,sk,bkd->bk", F, pats, a)) / S
    return f, g


def rbound_of_vectors(a, space, settings: OptimizerSettings = OptimizerSettings(), rng=None,
                      init=None, candidates=None):
    """Lower bound for ``sup_{||lam||_2<=1} E||sum eps_k lam_k a_k||`` per batch row.

    ``a`` has shape ``(B, K) + space.shape``.  Returns ``(values, lambdas)``.
    The candidate set consists of the basis vectors, ``restarts`` random unit
    vectors (restart ``r`` always draws from the same stream, so raising
    ``restarts`` only adds candidates), optional ``init`` and ``candidates``
    rows, each refined by ``sweeps`` steps of the ascent ``lam <- |g|/||g||``
    with ``g`` a subgradient.  Since the objective is convex and positively
    homogeneous, each ascent step cannot decrease it.
    """
    a = np.asarray(a, dtype=complex)
    B, K = a.shape[:2]
    flat = a.reshape(B, K, -1)
    D = flat.shape[2]
    src = as_source(rng)
    if K <= settings.k_exact:
        pats = sign_patterns(K, half=True)
    else:
        pats = src.child(99).signs(settings.budget, K)
    rows = max(1, _CHUNK_ELEMS // max(1, pats.shape[0] * D))
    best_v = np.zeros(B)
    best_l = np.zeros((B, K))
    # basis vectors: value ||a_k||
    base = space.norm(a)  # (B, K)
    kbest = np.argmax(base, axis=1)
    best_v[:] = base[np.arange(B), kbest]
    best_l[np.arange(B), kbest] = 1.0

    starts = []
    if init is not None:
        starts.append(np.asarray(init, dtype=float).reshape(B, K))
    starts.append(best_l.copy())
    if candidates is not None:
        for c in candidates:
            starts.append(np.broadcast_to(np.asarray(c, dtype=float), (B, K)).copy())
    for r in range(settings.restarts):
        z = np.abs(src.child(r).normals(B, K))
        starts.append(z)

    for lam0 in starts:
        lam0 = np.abs(lam0)
        nrm = np.linalg.norm(lam0, axis=1, keepdims=True)
        lam0 = np.where(nrm > 0, lam0 / np.where(nrm > 0, nrm, 1.0), 0.0)
        for lo in range(0, B, rows):
            sl = slice(lo, lo + rows)
            lam = lam0[sl]
            ok = np.linalg.norm(lam, axis=1) > 0
            f, g = _objective_and_grad(flat[sl], lam, space, pats, settings.moment)
            for _ in range(settings.sweeps):
                gn = np.linalg.norm(g, axis=1, keepdims=True)
                step = np.where(gn > 0, np.abs(g) / np.where(gn > 0, gn, 1.0), lam)
                f_new, g_new = _objective_and_grad(flat[sl], step, space, pats, settings.moment)
                up = f_new > f
                if not up.any():
                    break
                lam = np.where(up[:, None], step, lam)
                f = np.where(up, f_new, f)
                g = np.where(up[:, None], g_new, g)
            better = ok & (f > best_v[sl])
            best_v[sl] = np.where(better, f, best_v[sl])
            best_l[sl] = np.where(better[:, None], lam, best_l[sl])
    return best_v, best_l


def chain_rbounds(u: GridFunction, settings: OptimizerSettings = OptimizerSettings(), rng=None):
    """Chain R-bounds for every cube, coarse to fine.

    Entry ``i`` of the result is ``(values, lambdas)`` for the cubes of scale
    ``k = -i``: ``values`` has spatial shape ``(2^i,)*n`` and bounds the R-bound
    of the averages over the chain from the unit cube down to that cube.
    ``lambdas`` has shape ``(2^i,)*n + (i+1,)`` (slot ``j`` is scale ``-j``).
    Each cube is seeded with its parent's maximiser, so values never decrease
    along a chain.
    """
    g = u.grid
    if g.n_comp != 1:
        raise InvalidInputError("M_R acts on X-valued functions (N_comp = 1)")
    space = g.space
    avgs = scale_averages(u)
    src = as_source(rng)
    out = []
    prev_l = None
    for i in range(g.J + 1):
        m = 1 << i
        cells = m ** g.n
        vecs = np.stack([block_expand(avgs[j], g.n, 1 << (i - j)) for j in range(i + 1)], axis=g.n)
        vecs = vecs.reshape((cells, i + 1) + tuple(space.shape))  # N_comp = 1 squeezed
        if space.is_hilbert:
            nrm = space.norm(vecs)
            k = np.argmax(nrm, axis=1)
            vals = nrm[np.arange(cells), k]
            lam = np.zeros((cells, i + 1))
            lam[np.arange(cells), k] = 1.0
        else:
            init = None
            if prev_l is not None:
                par = block_expand(prev_l.reshape((m // 2,) * g.n + (i,)), g.n, 2).reshape(cells, i)
                init = np.concatenate([par, np.zeros((cells, 1))], axis=1)
            vals, lam = rbound_of_vectors(vecs, space, settings, src.child(i), init=init)
            if out:
                parent_vals = block_expand(out[-1][0], g.n, 2).reshape(cells)
                vals = np.maximum(vals, parent_vals)
        prev_l = lam
        out.append((vals.reshape((m,) * g.n), lam.reshape((m,) * g.n + (i + 1,))))
    return out


def rademacher_maximal(u: GridFunction, settings: OptimizerSettings = OptimizerSettings(),
                       rng=None) -> np.ndarray:
    """Lower-bound estimate of ``M_R u`` on every finest cell.

    For Hilbert-space valued ``u`` this is exactly the dyadic maximal
    function: every Rademacher sum satisfies ``E||S|| <= (E||S||^2)^(1/2)``,
    which is at most the largest average when ``||lam||_2 <= 1``, and the
    basis vectors attain it.
    """
    g = u.grid
    if g.n_comp != 1:
        raise InvalidInputError("M_R acts on X-valued functions (N_comp = 1)")
    if g.space.is_hilbert:
        return dyadic_maximal(u)
    return chain_rbounds(u, settings, rng)[-1][0]


def rademacher_maximal_at(u: GridFunction, cell, settings: OptimizerSettings = OptimizerSettings(),
                          rng=None, candidates=None) -> tuple[float, np.ndarray]:
    """M_R estimate at one finest cell; returns the value and maximising lambda."""
    a = ancestor_averages(u)[(slice(None),) + tuple(cell)]  # (J+1, N, *xshape)
    a = a[:, 0][None]
    v, lam = rbound_of_vectors(a, u.grid.space, settings, rng, candidates=candidates)
    return float(v[0]), lam[0]


# -- RMF experiments -----------------------------------------------------------


@dataclass
class RMFReport:
    space: str
    p: float
    n: int
    J: int
    ensemble_size: int
    ratios: list = field(default_factory=list)
    maximal_ratios: list = field(default_factory=list)
    optimizer: dict = field(default_factory=dict)
    seed: int = 0
    semantic: str = "lower_bound"

    @property
    def max_ratio(self) -> float:
        return float(max(self.ratios)) if self.ratios else 0.0

    @property
    def mean_ratio(self) -> float:
        return float(np.mean(self.ratios)) if self.ratios else 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["max_ratio"] = self.max_ratio
        d["mean_ratio"] = self.mean_ratio
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def to_csv(self) -> str:
        """One row per ensemble member: ``case,ratio,maximal_ratio`` plus echo columns."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["case", "space", "p", "n", "J", "seed", "ratio", "maximal_ratio", "semantic"])
        for i, (r, mr) in enumerate(zip(self.ratios, self.maximal_ratios)):
            w.writerow([i, self.space, repr(self.p), self.n, self.J, self.seed, repr(r), repr(mr), self.semantic])
        return buf.getvalue()


def rmf_norm_experiment(space: SpaceDescriptor, p: float, grid_J: int, ensemble_size: int, rng=None,
                        n: int = 1, settings: OptimizerSettings = OptimizerSettings(),
                        inputs=None) -> RMFReport:
    """Empirical ``||M_R u||_p / ||u||_p`` over random (or supplied) inputs."""
    if not (1 < p < np.inf):
        raise InvalidInputError("p must lie in (1, inf)")
    src = as_source(rng)
    grid = Grid(n, grid_J, 1, space)
    rep = RMFReport(space.spec(), float(p), n, grid_J, ensemble_size,
                    optimizer=asdict(settings), seed=src.seed)
    for e in range(ensemble_size):
        u = inputs[e] if inputs is not None else GridFunction.random(grid, src.child(e))
        den = lp_norm(u, p)
        mr = rademacher_maximal(u, settings, src.child(e).child(1))
        rep.ratios.append(lp_norm_of_values(mr, p) / den)
        rep.maximal_ratios.append(lp_norm_of_values(dyadic_maximal(u), p) / den)
    return rep


# -- l^1 counterexample ------------------------------------------------------------


class BasisIndicatorFunction:
    """``u(x) = e_k`` on the k-th finest cell of a depth-``J`` 1D grid, in l^1_{2^J}.

    Kept sparse: the average over the scale ``-j`` cube containing cell 0 is
    ``2^-j`` times the sum of the first ``2^j`` basis vectors.
    """

    def __init__(self, J: int):
        self.J = int(J)
        self.space = SpaceDescriptor.lebesgue(1.0, 1 << self.J)

    def lp_norm(self, p: float) -> float:
        # every cell value is a unit basis vector
        return 1.0

    def average_at_origin(self, j: int) -> np.ndarray:
        """Average over the cube of side ``2^(-J+j)`` containing cell 0."""
        v = np.zeros(1 << self.J)
        v[: 1 << j] = 2.0 ** (-j)
        return v

    def dense(self) -> GridFunction:
        if self.J > 8:
            raise ResourceError("dense counterexample limited to J <= 8")
        d = 1 << self.J
        grid = Grid(1, self.J, 1, self.space)
        return GridFunction(grid, np.eye(d).reshape(grid.shape))


def counterexample_alpha(m: int) -> np.ndarray:
    return 1.0 / (np.arange(1, m + 1) + 1.0)


def counterexample_value(m: int, alpha=None) -> float:
    """Exact ``E||sum_i eps_i alpha_i 2^(-2^i) sum_{k<=2^(2^i)} e_k||_1`` at the origin cell.

    The l^1 norm splits over coordinates; coordinate ``k`` sees exactly the
    terms with ``2^(2^i) >= k``, so coordinates are grouped by the smallest
    such ``i``.  Each group's expectation is enumerated over ``2^m`` signs.
    """
    alpha = counterexample_alpha(m) if alpha is None else np.asarray(alpha, dtype=float)
    coef = alpha * 2.0 ** (-(2.0 ** np.arange(1, m + 1)))
    pats = sign_patterns(m)
    total = 0.0
    for i0 in range(1, m + 1):
        hi = 2 ** (2 ** i0)
        lo = 0 if i0 == 1 else 2 ** (2 ** (i0 - 1))
        count = hi - lo
        partial = np.abs(pats[:, i0 - 1:] @ coef[i0 - 1:]).mean()
        total += count * partial
    return float(total)


def counterexample_chain_bound(m: int, alpha=None) -> float:
    """Termwise lower bound ``sum_i alpha_i (1 - 2 * 2^(-2^(i-1)))``."""
    alpha = counterexample_alpha(m) if alpha is None else np.asarray(alpha, dtype=float)
    i = np.arange(1, m + 1)
    return float(np.sum(alpha * (1.0 - 2.0 * 2.0 ** (-(2.0 ** (i - 1))))))


def counterexample_lambda(m: int) -> np.ndarray:
    """The coefficient vector indexed by ``j = 0..n``, nonzero at ``j = 2^i``."""
    n = 2 ** m
    lam = np.zeros(n + 1)
    lam[2 ** np.arange(1, m + 1)] = counterexample_alpha(m)
    return lam


@dataclass(frozen=True)
class CounterexampleResult:
    m: int
    n: int
    u: BasisIndicatorFunction
    lower_bound: float
    chain_bound: float


def counterexample_l1(m: int) -> CounterexampleResult:
    if m < 1:
        raise InvalidInputError("m must be >= 1")
    if m > 4:
        raise ResourceError("m > 4 needs a grid of 2^(2^m) cells")
    n = 2 ** m
    u = BasisIndicatorFunction(n)
    if abs(u.lp_norm(2.0) - 1.0) > 0:
        raise AssertionError("counterexample input must have unit norm")
    return CounterexampleResult(m, n, u, counterexample_value(m), counterexample_chain_bound(m))


# -- domination checks ---------------------------------------------------------------


@dataclass
class DominationReport:
    type2_constant: float | None = None
    lattice_constant: float | None = None
    notices: list = field(default_factory=list)


def domination_checks(u: GridFunction, settings: OptimizerSettings = OptimizerSettings(),
                      rng=None) -> DominationReport:
    """Smallest constants C with ``M_R^est <= C M u`` and ``M_R^est <= C ||M_lattice u||``."""
    g = u.grid
    mr = rademacher_maximal(u, settings, rng)
    rep = DominationReport()
    pos = mr > 0
    if g.space.has_type_2:
        mu = dyadic_maximal(u)
        rep.type2_constant = float(np.max(mr[pos] / mu[pos])) if pos.any() else 0.0
    else:
        rep.notices.append("type-2 check skipped: space lacks type 2")
    if g.space.is_lattice:
        ml = lattice_maximal(u).pointwise_norm()
        rep.lattice_constant = float(np.max(mr[pos] / ml[pos])) if pos.any() else 0.0
    else:
        rep.notices.append("lattice check skipped: space is not a lattice")
    return rep
