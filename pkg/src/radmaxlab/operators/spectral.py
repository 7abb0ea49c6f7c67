"""Fourier symbols on the periodic unit cube.

Frequencies are the integers returned by ``fftfreq(2^J) * 2^J`` along each
axis, so ``xi`` ranges over ``[-2^(J-1), 2^(J-1))``.  Symbols are arrays of
shape ``(2^J,)*n + (rows, cols)``.
"""

from __future__ import annotations

import numpy as np


def frequencies(n: int, J: int) -> np.ndarray:
    """Integer frequency vectors, shape ``(2^J,)*n + (n,)``."""
    side = 1 << J
    f = np.fft.fftfreq(side, d=1.0 / side)
    grids = np.meshgrid(*([f] * n), indexing="ij")
    return np.stack(grids, axis=-1)


def zeta(n: int, J: int) -> np.ndarray:
    """``2 pi |xi|``, the symbol of ``sqrt(-Laplacian)``."""
    return 2.0 * np.pi * np.linalg.norm(frequencies(n, J), axis=-1)


def grad_symbol(n: int, J: int) -> np.ndarray:
    """``2 pi i xi`` as an ``(n, 1)`` column."""
    return (2j * np.pi * frequencies(n, J))[..., :, None]


def div_symbol(n: int, J: int) -> np.ndarray:
    """``(2 pi i xi)^T`` as a ``(1, n)`` row."""
    return (2j * np.pi * frequencies(n, J))[..., None, :]


def laplacian_symbol(n: int, J: int) -> np.ndarray:
    return -(zeta(n, J) ** 2)


def adjoint(sym: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(sym, -1, -2))


def pi_symbol(d_sym: np.ndarray) -> np.ndarray:
    """``[[0, D^*], [D, 0]]`` from the ``(n2, n1)`` symbol of D."""
    n2, n1 = d_sym.shape[-2:]
    lead = d_sym.shape[:-2]
    out = np.zeros(lead + (n1 + n2, n1 + n2), dtype=complex)
    out[..., n1:, :n1] = d_sym
    out[..., :n1, n1:] = adjoint(d_sym)
    return out


def poisson_symbols(n: int, J: int, t: float):
    """Symbols of ``P_t = (I - t^2 Lap)^-1``, ``Q_t = t grad P_t`` and ``Q_t^* = -t P_t div``."""
    z2 = zeta(n, J) ** 2
    p = 1.0 / (1.0 + t * t * z2)
    P = p[..., None, None]
    Q = t * grad_symbol(n, J) * P
    Qs = -t * P * div_symbol(n, J)
    return P, Q, Qs


def fft_apply(sym: np.ndarray, values: np.ndarray, n: int) -> np.ndarray:
    """Apply a matrix symbol to ``values`` of shape ``spatial + (N_in, X...)``."""
    axes = tuple(range(n))
    spatial = values.shape[:n]
    n_in = values.shape[n]
    rest = values.shape[n + 1:]
    v = values.reshape(spatial + (n_in, -1))
    vh = np.fft.fftn(v, axes=axes)
    oh = np.einsum("...ij,...jx->...ix", sym, vh)
    out = np.fft.ifftn(oh, axes=axes)
    return out.reshape(spatial + (sym.shape[-2],) + rest)
