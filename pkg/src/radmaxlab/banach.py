"""Finite-dimensional Banach spaces and randomized (Rademacher/Gaussian) norms.

Vectors are plain complex numpy arrays whose trailing axes match
``SpaceDescriptor.shape``; every norm routine accepts arbitrary leading batch
axes.  :class:`Vector` is a thin validated wrapper for callers who want the
space attached to the data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ._errors import InvalidInputError, ResourceError, UnsupportedSpaceError
from .randomness import RandomSource, as_source

K_EXACT = 14
MAX_SCHATTEN_DIM = 16
_ENUM_CHUNK_ELEMS = 1 << 22


@dataclass(frozen=True)
class SpaceDescriptor:
    """``lebesgue`` (l^q_d), ``hilbert`` (C^d) or ``schatten`` (S^q on m x m)."""

    kind: str
    dim: int
    q: float = 2.0

    def __post_init__(self):
        if self.kind not in ("lebesgue", "hilbert", "schatten"):
            raise InvalidInputError(f"unknown space kind {self.kind!r}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise InvalidInputError("space dimension must be a positive integer")
        if not self.q >= 1:
            raise InvalidInputError("exponent q must be >= 1")
        if self.kind == "hilbert" and self.q != 2:
            raise InvalidInputError("hilbert spaces have q = 2")
        if self.kind == "schatten" and self.dim > MAX_SCHATTEN_DIM:
            raise ResourceError(f"schatten dimension m={self.dim} exceeds {MAX_SCHATTEN_DIM}")

    # -- constructors ---------------------------------------------------------

    @classmethod
    def lebesgue(cls, q: float, d: int) -> "SpaceDescriptor":
        return cls("lebesgue", int(d), float(q))

    @classmethod
    def hilbert(cls, d: int) -> "SpaceDescriptor":
        return cls("hilbert", int(d), 2.0)

    @classmethod
    def schatten(cls, q: float, m: int) -> "SpaceDescriptor":
        return cls("schatten", int(m), float(q))

    @classmethod
    def scalar(cls) -> "SpaceDescriptor":
        return cls.hilbert(1)

    @classmethod
    def parse(cls, spec: str) -> "SpaceDescriptor":
        """Parse ``lq:Q:D``, ``hilbert:D``, ``schatten:Q:M`` or ``scalar``."""
        if not isinstance(spec, str):
            raise InvalidInputError(f"space spec must be a string, got {type(spec).__name__}")
        parts = spec.strip().lower().split(":")
        try:
            if parts[0] in ("scalar", "r", "c") and len(parts) == 1:
                return cls.scalar()
            if parts[0] in ("lq", "lebesgue") and len(parts) == 3:
                q = math.inf if parts[1] in ("inf", "infinity") else float(parts[1])
                return cls.lebesgue(q, int(parts[2]))
            if parts[0] == "hilbert" and len(parts) == 2:
                return cls.hilbert(int(parts[1]))
            if parts[0] == "schatten" and len(parts) == 3:
                return cls.schatten(float(parts[1]), int(parts[2]))
        except ValueError as exc:
            raise InvalidInputError(f"malformed space spec {spec!r}") from exc
        raise InvalidInputError(f"malformed space spec {spec!r}")

    def spec(self) -> str:
        if self.kind == "hilbert":
            return "scalar" if self.dim == 1 else f"hilbert:{self.dim}"
        if self.kind == "lebesgue":
            return f"lq:{_fmt(self.q)}:{self.dim}"
        return f"schatten:{_fmt(self.q)}:{self.dim}"

    # -- structure ------------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.dim, self.dim) if self.kind == "schatten" else (self.dim,)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def is_lattice(self) -> bool:
        return self.kind in ("lebesgue", "hilbert")

    @property
    def is_hilbert(self) -> bool:
        return self.kind == "hilbert" or self.q == 2 or (self.kind == "lebesgue" and self.dim == 1)

    @property
    def has_type_2(self) -> bool:
        return self.is_hilbert or self.q >= 2

    # -- norms ----------------------------------------------------------------

    def norm(self, x) -> np.ndarray:
        """Norm over the trailing ``shape`` axes of ``x``."""
        x = np.asarray(x)
        nd = len(self.shape)
        if x.shape[x.ndim - nd:] != self.shape:
            raise InvalidInputError(f"trailing shape {x.shape[x.ndim - nd:]} does not match {self.shape}")
        if self.kind == "schatten":
            s = np.linalg.svd(x, compute_uv=False)
            return _lq(np.abs(s), self.q)
        return _lq(np.abs(x), self.q)

    def functional(self, x) -> np.ndarray:
        """A norming functional F with ``Re sum(F * x) = ||x||`` and dual norm <= 1."""
        x = np.asarray(x, dtype=complex)
        if self.kind == "schatten":
            u, s, vh = np.linalg.svd(x)
            w = _dual_weights(s, self.q)
            return np.einsum("...ik,...k,...kj->...ij", u.conj(), w, vh.conj())
        a = np.abs(x)
        w = _dual_weights(a, self.q)
        phase = np.where(a > 0, x.conj() / np.where(a > 0, a, 1.0), 0.0)
        return w * phase


def _fmt(q: float) -> str:
    return "inf" if math.isinf(q) else (str(int(q)) if float(q).is_integer() else repr(float(q)))


def _lq(a: np.ndarray, q: float) -> np.ndarray:
    if math.isinf(q):
        return a.max(axis=-1)
    if q == 2:
        return np.sqrt(np.sum(a * a, axis=-1))
    if q == 1:
        return a.sum(axis=-1)
    # scale to avoid under/overflow in a**q
    top = a.max(axis=-1, keepdims=True)
    safe = np.where(top > 0, top, 1.0)
    return (np.sum((a / safe) ** q, axis=-1)) ** (1.0 / q) * safe[..., 0]


def _dual_weights(a: np.ndarray, q: float) -> np.ndarray:
    """Weights w >= 0 with sum(w * a) = ||a||_q and ||w||_{q'} = 1."""
    if math.isinf(q):
        w = np.zeros_like(a)
        idx = np.argmax(a, axis=-1)
        np.put_along_axis(w, idx[..., None], 1.0, axis=-1)
        return w
    if q == 1:
        return np.ones_like(a)
    nrm = _lq(a, q)[..., None]
    safe = np.where(nrm > 0, nrm, 1.0)
    return np.where(nrm > 0, (a / safe) ** (q - 1), 0.0)


@dataclass(frozen=True)
class Vector:
    space: SpaceDescriptor
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=complex)
        if data.shape != self.space.shape:
            raise InvalidInputError(f"vector shape {data.shape} does not match space shape {self.space.shape}")
        object.__setattr__(self, "data", data)

    def norm(self) -> float:
        return float(self.space.norm(self.data))


@dataclass(frozen=True)
class NormEstimate:
    value: float
    method: str  # exact_enum | monte_carlo | closed_form
    samples: int = 0
    stderr: float = 0.0
    semantic: str = "exact"  # exact | lower_bound | estimate

    def __post_init__(self):
        if self.method not in ("exact_enum", "monte_carlo", "closed_form"):
            raise InvalidInputError(f"unknown method tag {self.method!r}")
        if self.semantic not in ("exact", "lower_bound", "estimate"):
            raise InvalidInputError(f"unknown semantic tag {self.semantic!r}")
        if self.method != "monte_carlo" and self.stderr != 0:
            raise InvalidInputError("deterministic estimates carry zero stderr")

    def __float__(self):
        return float(self.value)

    def as_dict(self) -> dict:
        return {"value": float(self.value), "method": self.method, "samples": int(self.samples),
                "stderr": float(self.stderr), "semantic": self.semantic}


def norm(space: SpaceDescriptor, x) -> float:
    """Norm of a single vector (``Vector`` or array) in ``space``."""
    if isinstance(x, Vector):
        if x.space != space:
            raise InvalidInputError("vector belongs to a different space")
        x = x.data
    x = np.asarray(x)
    if x.shape != tuple(space.shape):
        raise InvalidInputError(f"shape {x.shape} does not match {space.shape}")
    return float(space.norm(x))


def as_batch(space, xs) -> np.ndarray:
    """Stack a sequence of vectors into an array of shape ``(K, *space.shape)``."""
    if isinstance(xs, np.ndarray):
        arr = xs.astype(complex, copy=False)
    else:
        items = []
        for x in xs:
            if isinstance(x, Vector):
                if x.space != space:
                    raise InvalidInputError("all vectors must share the space")
                x = x.data
            items.append(np.asarray(x, dtype=complex))
        if not items:
            return np.zeros((0,) + tuple(space.shape), dtype=complex)
        arr = np.stack(items)
    if arr.shape[1:] != tuple(space.shape):
        raise InvalidInputError(f"vector shape {arr.shape[1:]} does not match space shape {space.shape}")
    return arr


# -- sign enumeration ---------------------------------------------------------


def sign_patterns(k: int, half: bool = False) -> np.ndarray:
    """All 2^k sign patterns (or the 2^(k-1) with first sign +1) as a float array."""
    if k == 0:
        return np.ones((1, 0))
    free = k - 1 if half else k
    idx = np.arange(1 << free)[:, None]
    bits = ((idx >> np.arange(free)) & 1).astype(np.float64) * 2.0 - 1.0
    if half:
        bits = np.concatenate([np.ones((bits.shape[0], 1)), bits], axis=1)
    return bits


def _norms_of_sums(space, coeffs: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """norms of sum_k coeffs[s, k] xs[k] for each row s, evaluated in chunks."""
    k = xs.shape[0]
    flat = xs.reshape(k, -1)
    per_row = max(1, flat.shape[1])
    rows = max(1, _ENUM_CHUNK_ELEMS // per_row)
    out = np.empty(coeffs.shape[0])
    for start in range(0, coeffs.shape[0], rows):
        c = coeffs[start:start + rows]
        sums = (c.astype(flat.dtype) @ flat).reshape((c.shape[0],) + xs.shape[1:])
        out[start:start + rows] = space.norm(sums)
    return out


def _moment(values: np.ndarray, p: float) -> float:
    if p == 1:
        return float(values.mean())
    return float(np.mean(values ** p) ** (1.0 / p))


def _mc_estimate(values: np.ndarray, p: float, samples: int) -> NormEstimate:
    vp = values ** p
    m = float(vp.mean())
    se_m = float(vp.std(ddof=1) / math.sqrt(samples)) if samples > 1 else math.inf
    value = m ** (1.0 / p)
    se = (1.0 / p) * m ** (1.0 / p - 1.0) * se_m if m > 0 else 0.0
    return NormEstimate(value, "monte_carlo", samples, se, "estimate")


def rademacher_avg(space, xs, p: float = 1.0, rng=None, budget: int = 20000,
                   k_exact: int = K_EXACT) -> NormEstimate:
    """``(E||sum_k eps_k x_k||^p)^(1/p)`` over independent Rademacher signs.

    Exact enumeration of the sign patterns is used for ``K <= k_exact``
    (only half the patterns are needed since ``eps`` and ``-eps`` give the
    same norm); Monte Carlo with ``budget`` samples beyond that.  For a
    Hilbert space and ``p = 2`` the closed form ``(sum ||x_k||^2)^(1/2)`` is
    returned.
    """
    if p < 1:
        raise InvalidInputError("moment p must be >= 1")
    xs = as_batch(space, xs)
    k = xs.shape[0]
    if k == 0:
        return NormEstimate(0.0, "exact_enum", 1, 0.0, "exact")
    if getattr(space, "is_hilbert", False) and p == 2:
        v = float(np.sqrt(np.sum(space.norm(xs) ** 2)))
        return NormEstimate(v, "closed_form", 0, 0.0, "exact")
    if k <= k_exact:
        pats = sign_patterns(k, half=True)
        vals = _norms_of_sums(space, pats, xs)
        return NormEstimate(_moment(vals, p), "exact_enum", 1 << k, 0.0, "exact")
    if budget < 1:
        raise InvalidInputError("Monte Carlo budget must be >= 1")
    signs = as_source(rng).signs(budget, k)
    vals = _norms_of_sums(space, signs, xs)
    return _mc_estimate(vals, p, budget)


def gaussian_avg(space, xs, p: float = 1.0, rng=None, budget: int = 20000) -> NormEstimate:
    """``(E||sum_k g_k x_k||^p)^(1/p)`` with independent standard normal g_k."""
    if p < 1:
        raise InvalidInputError("moment p must be >= 1")
    xs = as_batch(space, xs)
    k = xs.shape[0]
    if k == 0:
        return NormEstimate(0.0, "exact_enum", 1, 0.0, "exact")
    if getattr(space, "is_hilbert", False) and p == 2:
        v = float(np.sqrt(np.sum(space.norm(xs) ** 2)))
        return NormEstimate(v, "closed_form", 0, 0.0, "exact")
    if budget < 1:
        raise InvalidInputError("Monte Carlo budget must be >= 1")
    g = as_source(rng).normals(budget, k)
    vals = _norms_of_sums(space, g, xs)
    return _mc_estimate(vals, p, budget)


def square_function_norm(space: SpaceDescriptor, xs) -> float:
    """``||(sum_k |x_k|^2)^(1/2)||_X`` with coordinatewise modulus."""
    if not getattr(space, "is_lattice", False):
        raise UnsupportedSpaceError(f"{space} is not a lattice")
    xs = as_batch(space, xs)
    sq = np.sqrt(np.sum(np.abs(xs) ** 2, axis=0))
    return float(space.norm(sq))


def gaussian_product_norm(space: SpaceDescriptor, xs, rng=None, budget: int = 20000) -> NormEstimate:
    """Norm of the tuple ``(x_1..x_n)`` in X^n given by ``(E||sum g_i x_i||^2)^(1/2)``."""
    xs = as_batch(space, xs)
    if xs.shape[0] == 1:
        return NormEstimate(float(space.norm(xs[0])), "closed_form", 0, 0.0, "exact")
    return gaussian_avg(space, xs, p=2.0, rng=rng, budget=budget)


class ProductNorm:
    """Deterministic realisation of the Gaussian product norm on X^N.

    ``(mean_s ||sum_i G[s, i] x_i||^2)^(1/2)`` for a fixed Gaussian sample
    matrix ``G``.  For a fixed ``G`` of full column rank this is itself a norm
    on X^N, so grid-function norms stay reproducible and exactly homogeneous
    and subadditive.  Hilbert spaces and N = 1 use the exact closed forms.
    """

    SAMPLES = 256
    SEED = 0x5EED

    def __init__(self, space, n_comp: int):
        self.space = space
        self.n_comp = int(n_comp)
        self._exact = self.n_comp == 1 or getattr(space, "is_hilbert", False)
        if not self._exact:
            self._g = RandomSource(self.SEED, self.n_comp).normals(self.SAMPLES, self.n_comp)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        """``x`` has shape ``(..., N, *space.shape)``."""
        nd = len(self.space.shape)
        comp_axis = x.ndim - nd - 1
        if self.n_comp == 1:
            return self.space.norm(np.take(x, 0, axis=comp_axis))
        if self._exact:
            return np.sqrt(np.sum(self.space.norm(x) ** 2, axis=-1))
        moved = np.moveaxis(x, comp_axis, -1 - nd)  # (..., N, *shape)
        mixed = np.tensordot(self._g.astype(complex), moved, axes=([1], [moved.ndim - nd - 1]))
        vals = self.space.norm(mixed)  # (S, ...)
        return np.sqrt(np.mean(vals ** 2, axis=0))


# -- R-bounds -----------------------------------------------------------------


def rbound_estimate(family: Sequence[Callable], space_in, space_out=None, n_terms: int = 4,
                    rng=None, restarts: int = 4, budget: int = 20000, sweeps: int = 50,
                    perturbations: int = 32, k_exact: int = K_EXACT,
                    sampler: Callable | None = None) -> NormEstimate:
    """Certified lower bound for the R-bound of ``family``.

    Maximises ``E||sum eps_i T_{j_i} x_i|| / E||sum eps_i x_i||`` over random
    restarts followed by greedy coordinate ascent: in each sweep, every
    ``x_i`` is replaced by the best of ``perturbations`` random perturbations
    (which may also swap the operator index ``j_i``) whenever the ratio
    improves.  Both averages are evaluated by exact enumeration for
    ``n_terms <= k_exact``.
    """
    family = list(family)
    if not family:
        raise InvalidInputError("empty operator family")
    if n_terms < 1:
        raise InvalidInputError("tuple length must be >= 1")
    space_out = space_in if space_out is None else space_out
    src = as_source(rng)
    shape_in = tuple(space_in.shape)

    if sampler is None:
        def sampler(gen, count):
            return gen.standard_normal((count,) + shape_in) + 1j * gen.standard_normal((count,) + shape_in)

    def rad(space, arr):
        return rademacher_avg(space, arr, 1.0, src.child(7), budget, k_exact).value

    best = 0.0
    evaluated = 0
    for r in range(restarts):
        gen = src.child(1000 + r).generator()
        js = gen.integers(0, len(family), size=n_terms)
        xs = np.asarray(sampler(gen, n_terms), dtype=complex)
        ys = np.stack([np.asarray(family[j](x)) for j, x in zip(js, xs)])
        den = rad(space_in, xs)
        cur = rad(space_out, ys) / den if den > 0 else 0.0
        evaluated += 1
        best = max(best, cur)
        for sweep in range(sweeps):
            improved = False
            scale = 0.5 / (1.0 + sweep)
            for i in range(n_terms):
                base = float(np.sqrt(np.mean(np.abs(xs[i]) ** 2))) or 1.0
                props = np.asarray(sampler(gen, perturbations), dtype=complex)
                swaps = gen.random(perturbations) < 0.25
                new_js = gen.integers(0, len(family), size=perturbations)
                for c in range(perturbations):
                    cand = xs[i] + scale * base * props[c]
                    j = int(new_js[c]) if swaps[c] else int(js[i])
                    xs_c = xs.copy()
                    xs_c[i] = cand
                    ys_c = ys.copy()
                    ys_c[i] = family[j](cand)
                    den_c = rad(space_in, xs_c)
                    evaluated += 1
                    if den_c <= 0:
                        continue
                    val = rad(space_out, ys_c) / den_c
                    if val > cur:
                        cur, xs, ys = val, xs_c, ys_c
                        js = js.copy()
                        js[i] = j
                        improved = True
                best = max(best, cur)
            if not improved and sweep > 2:
                break
    return NormEstimate(float(best), "exact_enum" if n_terms <= k_exact else "monte_carlo",
                        evaluated, 0.0, "lower_bound")


@dataclass(frozen=True)
class ContractionReport:
    lhs: float
    rhs: float
    passed: bool
    method: str
    stderr: float = 0.0


def contraction_check(space, xs, lambdas, rng=None, k_exact: int = K_EXACT,
                      budget: int = 20000) -> ContractionReport:
    """Compare ``E||sum eps_j lam_j x_j||`` with ``2 max|lam| E||sum eps_j x_j||``."""
    xs = as_batch(space, xs)
    lam = np.asarray(lambdas, dtype=complex).reshape(-1)
    if lam.shape[0] != xs.shape[0]:
        raise InvalidInputError("xs and lambdas must have equal length")
    scaled = xs * lam.reshape((-1,) + (1,) * (xs.ndim - 1))
    src = as_source(rng)
    lhs = rademacher_avg(space, scaled, 1.0, src, budget, k_exact)
    base = rademacher_avg(space, xs, 1.0, src, budget, k_exact)
    bound = 2.0 * (float(np.abs(lam).max()) if lam.size else 0.0)
    rhs = bound * base.value
    if lhs.method == "monte_carlo":
        se = lhs.stderr + bound * base.stderr
        return ContractionReport(lhs.value, rhs, lhs.value <= rhs + 3.0 * se, "monte_carlo", se)
    return ContractionReport(lhs.value, rhs, lhs.value <= rhs, lhs.method)
