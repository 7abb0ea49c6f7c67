"""Composable linear operators acting on grid functions.

Every handle maps arrays of shape ``spatial + (N_in,) + X.shape`` to
``spatial + (N_out,) + X.shape``; the X coordinates are carried along as a
batch, so the same handle acts on any X-valued function.  Dense matrices use
the flattening ``index = cell * N + component`` with cells in C order.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import LinearOperator, gmres

from .._errors import InvalidInputError, ResolventFailure, SolverFailure
from ..dyadic import GridFunction
from .spectral import fft_apply

DENSE_LIMIT = 4096
RCOND_MIN = 1e-13


class OperatorHandle:
    """Base class; subclasses implement ``_apply`` and ``out_components``."""

    def out_components(self, n_in: int) -> int:
        raise NotImplementedError

    def _apply(self, values: np.ndarray, n: int) -> np.ndarray:
        raise NotImplementedError

    def apply_values(self, values: np.ndarray, n: int | None = None) -> np.ndarray:
        values = np.asarray(values, dtype=complex)
        if n is None:
            n = self._spatial_dim(values)
        return self._apply(values, n)

    def _spatial_dim(self, values) -> int:
        n = getattr(self, "n", None)
        if n is None:
            raise InvalidInputError("spatial dimension unknown for this handle; pass n")
        return n

    def apply(self, u: GridFunction) -> GridFunction:
        g = u.grid
        n_out = self.out_components(g.n_comp)
        out = self._apply(u.values, g.n)
        return GridFunction(g.with_(n_comp=n_out), out)

    def __call__(self, x):
        if isinstance(x, GridFunction):
            return self.apply(x)
        return self.apply_values(x)

    # algebra
    def __matmul__(self, other: "OperatorHandle") -> "OperatorHandle":
        return Compose([self, other])

    def __add__(self, other: "OperatorHandle") -> "OperatorHandle":
        return Add([self, other])

    def __sub__(self, other: "OperatorHandle") -> "OperatorHandle":
        return Add([self, Scaled(-1.0, other)])

    def __neg__(self):
        return Scaled(-1.0, self)

    def __rmul__(self, c):
        return Scaled(complex(c), self)

    def to_dense(self, n: int, J: int, n_in: int, chunk: int = 512) -> np.ndarray:
        """Dense matrix built column by column from unit inputs."""
        side = 1 << J
        cells = side ** n
        size = cells * n_in
        n_out = self.out_components(n_in)
        mat = np.empty((cells * n_out, size), dtype=complex)
        for lo in range(0, size, chunk):
            hi = min(size, lo + chunk)
            basis = np.zeros((size, hi - lo), dtype=complex)
            basis[np.arange(lo, hi), np.arange(hi - lo)] = 1.0
            vals = basis.reshape((side,) * n + (n_in, hi - lo))
            mat[:, lo:hi] = self._apply(vals, n).reshape(cells * n_out, hi - lo)
        return mat


def _flatten(values: np.ndarray, n: int):
    spatial = values.shape[:n]
    rest = values.shape[n + 1:]
    return values.reshape(int(np.prod(spatial)) * values.shape[n], -1), spatial, rest


class Identity(OperatorHandle):
    def out_components(self, n_in):
        return n_in

    def _apply(self, values, n):
        return values.copy()


class Scaled(OperatorHandle):
    def __init__(self, c, op: OperatorHandle):
        self.c = complex(c)
        self.op = op
        self.n = getattr(op, "n", None)

    def out_components(self, n_in):
        return self.op.out_components(n_in)

    def _apply(self, values, n):
        return self.c * self.op._apply(values, n)


class FourierMultiplier(OperatorHandle):
    """Per-frequency matrix (or scalar, acting componentwise) symbol."""

    def __init__(self, symbol, n: int, name: str = "multiplier"):
        self.symbol = np.asarray(symbol, dtype=complex)
        self.n = int(n)
        self.name = name
        self.scalar = self.symbol.ndim == self.n

    def out_components(self, n_in):
        if self.scalar:
            return n_in
        if self.symbol.shape[-1] != n_in:
            raise InvalidInputError(f"{self.name} expects {self.symbol.shape[-1]} components, got {n_in}")
        return self.symbol.shape[-2]

    def _apply(self, values, n):
        if values.shape[:n] != self.symbol.shape[:n]:
            raise InvalidInputError(f"{self.name}: grid shape mismatch")
        if self.scalar:
            axes = tuple(range(n))
            vh = np.fft.fftn(values, axes=axes)
            vh *= self.symbol.reshape(self.symbol.shape + (1,) * (values.ndim - n))
            return np.fft.ifftn(vh, axes=axes)
        self.out_components(values.shape[n])
        return fft_apply(self.symbol, values, n)


class PointwiseMultiplier(OperatorHandle):
    """Cellwise multiplication by a matrix (or scalar) field."""

    def __init__(self, field, n: int, name: str = "pointwise"):
        self.field = np.asarray(field, dtype=complex)
        self.n = int(n)
        self.name = name
        self.scalar = self.field.ndim == self.n

    def out_components(self, n_in):
        if self.scalar:
            return n_in
        if self.field.shape[-1] != n_in:
            raise InvalidInputError(f"{self.name} expects {self.field.shape[-1]} components, got {n_in}")
        return self.field.shape[-2]

    def _apply(self, values, n):
        if values.shape[:n] != self.field.shape[:n]:
            raise InvalidInputError(f"{self.name}: grid shape mismatch")
        if self.scalar:
            return values * self.field.reshape(self.field.shape + (1,) * (values.ndim - n))
        self.out_components(values.shape[n])
        spatial = values.shape[:n]
        rest = values.shape[n + 1:]
        v = values.reshape(spatial + (values.shape[n], -1))
        out = np.einsum("...ij,...jx->...ix", self.field, v)
        return out.reshape(spatial + (self.field.shape[-2],) + rest)


class Block(OperatorHandle):
    """Block operator ``[[B00, B01], [B10, B11]]`` with ``None`` for zero blocks."""

    def __init__(self, blocks, row_sizes, col_sizes, n: int | None = None):
        self.blocks = [list(r) for r in blocks]
        self.row_sizes = tuple(int(r) for r in row_sizes)
        self.col_sizes = tuple(int(c) for c in col_sizes)
        if len(self.blocks) != len(self.row_sizes) or any(len(r) != len(self.col_sizes) for r in self.blocks):
            raise InvalidInputError("block layout does not match row/column sizes")
        self.n = n

    def out_components(self, n_in):
        if n_in != sum(self.col_sizes):
            raise InvalidInputError(f"block operator expects {sum(self.col_sizes)} components, got {n_in}")
        return sum(self.row_sizes)

    def _apply(self, values, n):
        self.out_components(values.shape[n])
        col_off = np.concatenate([[0], np.cumsum(self.col_sizes)])
        parts = []
        for i, rs in enumerate(self.row_sizes):
            acc = np.zeros(values.shape[:n] + (rs,) + values.shape[n + 1:], dtype=complex)
            for j, op in enumerate(self.blocks[i]):
                if op is None:
                    continue
                piece = np.take(values, np.arange(col_off[j], col_off[j + 1]), axis=n)
                acc = acc + op._apply(piece, n)
            parts.append(acc)
        return np.concatenate(parts, axis=n)


class Compose(OperatorHandle):
    """``ops[0] @ ops[1] @ ...``: the last operator is applied first."""

    def __init__(self, ops):
        self.ops = list(ops)
        if not self.ops:
            raise InvalidInputError("empty composition")
        self.n = next((getattr(o, "n", None) for o in self.ops if getattr(o, "n", None) is not None), None)

    def out_components(self, n_in):
        for op in reversed(self.ops):
            n_in = op.out_components(n_in)
        return n_in

    def _apply(self, values, n):
        for op in reversed(self.ops):
            values = op._apply(values, n)
        return values


class Add(OperatorHandle):
    def __init__(self, ops):
        self.ops = list(ops)
        if not self.ops:
            raise InvalidInputError("empty sum")
        self.n = next((getattr(o, "n", None) for o in self.ops if getattr(o, "n", None) is not None), None)

    def out_components(self, n_in):
        outs = {op.out_components(n_in) for op in self.ops}
        if len(outs) != 1:
            raise InvalidInputError("summands disagree in output components")
        return outs.pop()

    def _apply(self, values, n):
        out = self.ops[0]._apply(values, n)
        for op in self.ops[1:]:
            out = out + op._apply(values, n)
        return out


class DenseOperator(OperatorHandle):
    def __init__(self, matrix, n: int, n_in: int, n_out: int):
        self.matrix = np.asarray(matrix, dtype=complex)
        self.n = int(n)
        self.n_in = int(n_in)
        self.n_out = int(n_out)

    def out_components(self, n_in):
        if n_in != self.n_in:
            raise InvalidInputError(f"dense operator expects {self.n_in} components")
        return self.n_out

    def _apply(self, values, n):
        flat, spatial, rest = _flatten(values, n)
        out = self.matrix @ flat
        return out.reshape(spatial + (self.n_out,) + rest)


class Resolvent(OperatorHandle):
    """``R_t = (I + i t M)^-1``, ``P_t = R_t R_-t`` or ``Q_t = (i/2)(R_t - R_-t)``.

    ``M`` is the inner handle on ``N`` components over a grid of depth ``J``.
    Systems with at most ``dense_limit`` unknowns are LU-factorised once per
    ``t``; larger ones use GMRES preconditioned by ``preconditioner(t)``
    (typically the unperturbed resolvent multiplier).
    """

    def __init__(self, inner: OperatorHandle, t: float, style: str, n: int, J: int, N: int,
                 dense_limit: int = DENSE_LIMIT, preconditioner=None, tol: float = 1e-10,
                 maxiter: int = 500):
        if style not in ("R", "P", "Q"):
            raise InvalidInputError("style must be R, P or Q")
        self.inner = inner
        self.t = float(t)
        self.style = style
        self.n, self.J, self.N = int(n), int(J), int(N)
        self.dense_limit = dense_limit
        self.preconditioner = preconditioner
        self.tol = tol
        self.maxiter = maxiter
        self._lu = {}
        self._dense = None

    @property
    def unknowns(self) -> int:
        return (1 << (self.J * self.n)) * self.N

    def out_components(self, n_in):
        if n_in != self.N:
            raise InvalidInputError(f"resolvent expects {self.N} components, got {n_in}")
        return self.N

    def with_t(self, t: float) -> "Resolvent":
        r = Resolvent(self.inner, t, self.style, self.n, self.J, self.N, self.dense_limit,
                      self.preconditioner, self.tol, self.maxiter)
        r._dense = self._dense
        return r

    def dense_inner(self) -> np.ndarray:
        if self._dense is None:
            self._dense = self.inner.to_dense(self.n, self.J, self.N)
        return self._dense

    def _factor(self, s: float):
        if s not in self._lu:
            m = self.dense_inner()
            a = np.eye(m.shape[0], dtype=complex) + 1j * s * m
            lu, piv = sla.lu_factor(a, check_finite=False)
            anorm = np.abs(a).sum(axis=0).max()
            rcond, info = sla.lapack.zgecon(lu, anorm, norm="1")
            if info != 0 or not np.isfinite(rcond) or rcond < RCOND_MIN:
                raise ResolventFailure(f"I + i t Pi_B is numerically singular (rcond={rcond:.3e})", location=s)
            self._lu[s] = (lu, piv)
        return self._lu[s]

    def _solve(self, s: float, values: np.ndarray, n: int) -> np.ndarray:
        if s == 0:
            return values.copy()
        flat, spatial, rest = _flatten(values, n)
        if self.unknowns <= self.dense_limit:
            out = sla.lu_solve(self._factor(s), flat, check_finite=False)
        else:
            out = self._iterative(s, flat, spatial)
        return out.reshape(spatial + (self.N,) + rest)

    def _iterative(self, s: float, flat: np.ndarray, spatial) -> np.ndarray:
        size = flat.shape[0]
        shape = spatial + (self.N, 1)

        def matvec(x):
            v = x.reshape(shape)
            return (v + 1j * s * self.inner._apply(v, self.n)).reshape(-1)

        op = LinearOperator((size, size), matvec=matvec, dtype=complex)
        pre = None
        if self.preconditioner is not None:
            ph = self.preconditioner(s)
            pre = LinearOperator((size, size), dtype=complex,
                                 matvec=lambda x: ph._apply(x.reshape(shape), self.n).reshape(-1))
        out = np.empty_like(flat)
        for c in range(flat.shape[1]):
            b = flat[:, c]
            x, info = gmres(op, b, M=pre, rtol=self.tol, atol=0.0, restart=50, maxiter=self.maxiter)
            res = np.linalg.norm(matvec(x) - b) / max(np.linalg.norm(b), 1e-300)
            if info != 0 or not np.isfinite(res) or res > 10 * self.tol:
                raise SolverFailure(f"GMRES stalled at t={s}", residual=float(res))
            out[:, c] = x
        return out

    def _apply(self, values, n):
        self.out_components(values.shape[n])
        t = self.t
        if self.style == "R":
            return self._solve(t, values, n)
        if t == 0:
            return values.copy() if self.style == "P" else np.zeros_like(values)
        rp = self._solve(t, values, n)
        rm = self._solve(-t, values, n)
        if self.style == "P":
            return 0.5 * (rp + rm)
        return 0.5j * (rp - rm)
