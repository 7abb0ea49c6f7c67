"""Localised test functions ``f = P^B_{eps l(Q)} w_Q`` built from cut-off affine potentials.

For a cube ``Q`` and a unit vector ``w`` in the range of the symbol of
``Gamma``, ``u_Q`` is affine with ``Gamma u_Q = w``, ``eta_Q`` is a smooth
periodic cutoff equal to 1 on ``2Q`` and vanishing outside ``3Q``, and
``w_Q = Gamma(eta_Q u_Q)`` is evaluated spectrally so that it lies exactly
in the discrete range of ``Gamma``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .._errors import InvalidInputError, UnsupportedSpaceError
from ..dyadic import DyadicCube, GridFunction, lp_norm
from ..operators.hodge import HodgeDirac, HodgeDiracConfig, hodge_dirac
from ..operators.spectral import fft_apply, grad_symbol


def _smooth_step(s: np.ndarray) -> np.ndarray:
    """C-infinity step: 0 for ``s <= 0``, 1 for ``s >= 1``."""
    s = np.clip(s, 0.0, 1.0)
    a = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
    b = np.where(s < 1, np.exp(-1.0 / np.where(s < 1, 1.0 - s, 1.0)), 0.0)
    return a / (a + b)


def cube_centre(cube: DyadicCube) -> np.ndarray:
    return (np.asarray(cube.index, dtype=float) + 0.5) * cube.side


def periodic_displacement(n: int, J: int, centre) -> list:
    """Per-axis ``x - c`` wrapped into ``[-1/2, 1/2)`` at cell centres."""
    x = (np.arange(1 << J) + 0.5) / (1 << J)
    grids = np.meshgrid(*([x] * n), indexing="ij")
    return [((g - c + 0.5) % 1.0) - 0.5 for g, c in zip(grids, centre)]


def cutoff(n: int, J: int, cube: DyadicCube) -> np.ndarray:
    """``eta_Q`` at cell centres: 1 on ``2Q``, 0 outside ``3Q`` (periodically)."""
    if cube.level > -2:
        raise InvalidInputError("3Q must fit in the unit torus: need a cube of side <= 1/4")
    ell = cube.side
    eta = np.ones((1 << J,) * n)
    for d in periodic_displacement(n, J, cube_centre(cube)):
        eta = eta * _smooth_step((1.5 * ell - np.abs(d)) / (0.5 * ell))
    return eta


def _is_gradient(config: HodgeDiracConfig) -> bool:
    d = config.d_symbol
    ref = grad_symbol(config.n, config.J)
    return d.shape == ref.shape and bool(np.allclose(d, ref))


@dataclass
class TestFunctionBundle:
    cube: DyadicCube
    w: np.ndarray
    eps: float
    eta: np.ndarray
    w_Q: GridFunction
    f: GridFunction
    report: dict = field(default_factory=dict)

    __test__ = False  # keep pytest from collecting the class


def _unit_in_range(config: HodgeDiracConfig, w) -> np.ndarray:
    w = np.asarray(w, dtype=complex).ravel()
    if w.shape != (config.N,):
        raise InvalidInputError(f"w must have {config.N} entries")
    nrm = np.linalg.norm(w)
    if nrm == 0:
        raise InvalidInputError("w must be non-zero")
    w = w / nrm
    if np.linalg.norm(w[:config.n1]) > 1e-12:
        raise InvalidInputError("w must lie in the range of the symbol of Gamma")
    return w


def build_w_Q(config: HodgeDiracConfig, cube: DyadicCube, w) -> tuple[np.ndarray, GridFunction, dict]:
    """``(eta_Q, w_Q, checks)`` for the gradient ``D``.

    ``checks`` records ``max |w_Q - w|`` on ``2Q``, ``max |w_Q|`` outside
    ``3Q``, ``||w_Q||_inf`` and ``l(Q) * max |grad eta_Q|`` (finite differences).
    """
    if not _is_gradient(config):
        raise UnsupportedSpaceError("test functions are built for D = grad")
    n, J, n1 = config.n, config.J, config.n1
    w = _unit_in_range(config, w)
    eta = cutoff(n, J, cube)
    disp = periodic_displacement(n, J, cube_centre(cube))
    u1 = sum(w[n1 + a] * disp[a] for a in range(n))
    vals = np.zeros((1 << J,) * n + (config.N, 1), dtype=complex)
    grad = fft_apply(config.d_symbol, (eta * u1)[..., None, None], n)  # spatial + (n, 1)
    vals[..., n1:, :] = grad
    wq = GridFunction(config.grid(), vals)
    ell = cube.side
    h = 1.0 / (1 << J)
    cen = cube_centre(cube)
    dist = np.max(np.abs(np.stack(periodic_displacement(n, J, cen))), axis=0)
    inner = dist <= ell
    outer = dist >= 1.5 * ell
    dev = np.linalg.norm(vals[..., 0] - w, axis=-1)
    fd = max(float(np.abs(np.roll(eta, -1, axis=a) - eta).max()) for a in range(n)) / h
    checks = {
        "deviation_on_2Q": float(dev[inner].max()),
        "leak_outside_3Q": float(np.linalg.norm(vals[..., 0], axis=-1)[outer].max()) if outer.any() else 0.0,
        "sup_norm": float(np.linalg.norm(vals[..., 0], axis=-1).max()),
        "scaled_cutoff_gradient": fd * ell,
    }
    return eta, wq, checks


def test_functions(config: HodgeDiracConfig, cube: DyadicCube, w, eps: float, p: float = 2.0,
                   hd: HodgeDirac | None = None) -> TestFunctionBundle:
    """Build ``w_Q`` and ``f = P^B_{eps l(Q)} w_Q`` and measure the localisation estimates.

    The report holds ``test1 = ||f||_p / |Q|^(1/p)``, ``test2`` (the
    sum over scales ``2^k <= l(Q)`` of
    ``2^k/(eps l(Q)) ||Q^B_{eps l(Q)} P^B_{2^k} w_Q||_p / |Q|^(1/p)``) and
    ``avg_gap = |<f>_Q - w|``.
    """
    if not (0 < eps < 0.5):
        raise InvalidInputError("eps must lie in (0, 1/2)")
    hd = hodge_dirac(config) if hd is None else hd
    eta, wq, checks = build_w_Q(config, cube, w)
    w = _unit_in_range(config, w)
    n, J = config.n, config.J
    t = eps * cube.side
    res = hd.resolvents(t)
    f_vals = res["P"].apply_values(wq.values, n)
    f = GridFunction(wq.grid, f_vals)
    qpw = 1.0 / cube.volume ** (1.0 / p)
    test1 = lp_norm(f, p) * qpw
    test2 = 0.0
    for k in range(-J, cube.level + 1):
        s = 2.0 ** k
        pk = hd.resolvent(s, "P").apply_values(wq.values, n)
        qk = res["Q"].apply_values(pk, n)
        test2 += s / t * lp_norm(GridFunction(wq.grid, qk), p) * qpw
    avg = f_vals[cube.cell_slices(J)].reshape((-1, config.N)).mean(axis=0)
    report = dict(checks)
    report.update({"level": cube.level, "eps": float(eps), "p": float(p), "test1": test1, "test2": test2,
                   "avg_gap": float(np.linalg.norm(avg - w))})
    return TestFunctionBundle(cube, w, float(eps), eta, wq, f, report)


test_functions.__test__ = False


@dataclass
class EpsilonSweep:
    eps: list
    gaps: list
    slope: float
    fitted_c: float
    p: float


def epsilon_sweep(config: HodgeDiracConfig, cube: DyadicCube, w, eps_values, p: float = 2.0,
                  hd: HodgeDirac | None = None) -> EpsilonSweep:
    """``|<f>_Q - w|`` over ``eps_values``; least-squares slope in log-log and ``max gap / eps^(1/p')``."""
    hd = hodge_dirac(config) if hd is None else hd
    _, wq, _ = build_w_Q(config, cube, w)
    w = _unit_in_range(config, w)
    gaps = []
    for eps in eps_values:
        if not (0 < eps < 0.5):
            raise InvalidInputError("eps must lie in (0, 1/2)")
        f = hd.resolvent(eps * cube.side, "P").apply_values(wq.values, config.n)
        avg = f[cube.cell_slices(config.J)].reshape((-1, config.N)).mean(axis=0)
        gaps.append(float(np.linalg.norm(avg - w)))
    e = np.asarray(eps_values, dtype=float)
    g = np.asarray(gaps)
    slope = float(np.polyfit(np.log(e), np.log(np.maximum(g, 1e-300)), 1)[0]) if len(e) > 1 else float("nan")
    pp = p / (p - 1) if p > 1 else np.inf
    return EpsilonSweep(list(map(float, e)), gaps, slope, float(np.max(g / e ** (1.0 / pp))), float(p))


@dataclass
class AveragingCheck:
    ratios: list
    constant: float
    p: float


def averaging_inequality(us, cubes, p: float = 2.0) -> AveragingCheck:
    """``|<u'>_Q|^p / (l^(1-p) (avg|u|^p)^(1/p') (avg|u'|^p)^(1/p))`` for scalar ``u`` on ``n = 1``.

    ``u'`` is the spectral derivative; pairs with a vanishing right side are skipped.
    """
    ratios = []
    for u in us:
        g = u.grid
        if g.n != 1 or g.value_shape != (1, 1):
            raise InvalidInputError("the averaging inequality is checked for scalar u on n = 1")
        v = u.values[:, 0, 0]
        du = np.fft.ifft(2j * np.pi * np.fft.fftfreq(g.side, 1.0 / g.side) * np.fft.fft(v))
        for cube in cubes:
            sl = cube.cell_slices(g.J)[0]
            lhs = abs(du[sl].mean()) ** p
            pp = p / (p - 1)
            rhs = cube.side ** (1 - p) * np.mean(np.abs(v[sl]) ** p) ** (1 / pp) * np.mean(np.abs(du[sl]) ** p) ** (1 / p)
            if rhs > 0:
                ratios.append(float(lhs / rhs))
    return AveragingCheck(ratios, float(max(ratios)) if ratios else 0.0, float(p))
