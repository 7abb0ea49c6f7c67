"""Exact-identity suite run by ``radmaxlab selftest``.

Each check returns ``(name, passed, detail)``; all inputs are small so the
suite finishes in a few seconds.
"""

from __future__ import annotations

import itertools

import numpy as np

from ..banach import SpaceDescriptor, rademacher_avg
from ..carleson import (CarlesonFamily, car_norm, carleson_embed_lhs, paraproduct, random_family,
                        stopping_decomposition)
from ..dyadic import (DyadicCube, Grid, GridFunction, conditional_expectation, dyadic_maximal, haar_decompose,
                      haar_reconstruct, lp_norm)
from ..operators import (HodgeDiracConfig, KatoProblem, hodge_decomposition, hodge_dirac, random_accretive_field,
                         sqrt_L)
from ..operators.calculus import pi_function_symbol
from ..operators.spectral import fft_apply, pi_symbol, zeta
from ..radmax import OptimizerSettings, chain_rbounds, counterexample_l1, rademacher_maximal
from ..randomness import RandomSource

SEED = 20240607


def _rel(a, b) -> float:
    a, b = np.asarray(a), np.asarray(b)
    return float(np.abs(a - b).max() / max(1.0, float(np.abs(b).max())))


def check_descriptors():
    cases = {"hilbert:3": (True, True), "lq:2:4": (True, True), "lq:1.5:4": (False, False),
             "lq:4:2": (False, True), "schatten:2:2": (True, True), "schatten:1:2": (False, False),
             "schatten:3:2": (False, True), "scalar": (True, True)}
    bad = [s for s, (h, t) in cases.items()
           if (SpaceDescriptor.parse(s).is_hilbert, SpaceDescriptor.parse(s).has_type_2) != (h, t)]
    return "space_descriptor_flags", not bad, f"mismatches: {bad}"


def check_random_source():
    a = RandomSource(SEED, 3).normals(4, 5)
    b = RandomSource(SEED, 3).normals(4, 5)
    c = RandomSource(SEED, 4).normals(4, 5)
    return "random_source_reproducible", bool(np.array_equal(a, b) and not np.array_equal(a, c)), ""


def check_rademacher_homogeneity():
    space = SpaceDescriptor.parse("lq:1.5:3")
    gen = RandomSource(SEED).generator()
    xs = gen.standard_normal((6, 3)) + 1j * gen.standard_normal((6, 3))
    c = 2.5 - 1.0j
    a = rademacher_avg(space, xs, 1.0)
    b = rademacher_avg(space, c * xs, 1.0)
    two = rademacher_avg(space, xs, 2.0)
    ok = (abs(b.value - abs(c) * a.value) <= 1e-12 * b.value and a.stderr == 0 and a.method == "exact_enum"
          and two.value >= a.value)
    return "rademacher_homogeneity_and_moments", ok, f"{b.value} vs {abs(c) * a.value}"


def check_projection_law():
    g = Grid(2, 3, 1, SpaceDescriptor.parse("lq:3:2"))
    u = GridFunction.random(g, RandomSource(SEED).child(1))
    err = 0.0
    for j, k in itertools.product(range(-3, 1), repeat=2):
        lhs = conditional_expectation(conditional_expectation(u, k), j).values
        err = max(err, _rel(lhs, conditional_expectation(u, max(j, k)).values))
    return "conditional_expectation_projection", err <= 1e-13, f"max error {err:.2e}"


def check_haar_round_trip():
    err = 0.0
    for n, J in ((1, 5), (2, 3)):
        u = GridFunction.random(Grid(n, J, 2, SpaceDescriptor.hilbert(2)), RandomSource(SEED).child(n))
        coeffs, mean = haar_decompose(u)
        err = max(err, _rel(haar_reconstruct(coeffs, mean).values, u.values))
    return "haar_round_trip", err <= 1e-12, f"max error {err:.2e}"


def check_scalar_rmf():
    u = GridFunction.random(Grid(1, 5), RandomSource(SEED).child(2))
    settings = OptimizerSettings(restarts=2, sweeps=20)
    direct = chain_rbounds(u, settings, RandomSource(SEED).child(3))[-1][0]
    ref = dyadic_maximal(u)
    fast = rademacher_maximal(u)
    scaled = rademacher_maximal(GridFunction(u.grid, -3.0 * u.values))
    err = max(_rel(direct, ref), _rel(fast, ref), _rel(scaled, 3.0 * fast))
    return "scalar_rmf_equals_dyadic_maximal", err <= 1e-10, f"max error {err:.2e}"


def check_counterexample():
    res = [counterexample_l1(m) for m in range(1, 4)]
    vals = [r.lower_bound for r in res]
    ok = all(b > a for a, b in zip(vals, vals[1:])) and all(r.lower_bound > r.chain_bound for r in res)
    return "l1_counterexample_growth", ok and abs(vals[0] - 0.5) < 1e-15, f"values {vals}"


def check_ddstar():
    c = HodgeDiracConfig(2, 3)
    rel = c.checks["DDstarD"] / float(np.abs(c.d_symbol).max()) ** 3
    return "ddstar_identity", rel <= 1e-12, f"relative {rel:.2e}"


def _hodge(n=1, J=4, seed=SEED):
    src = RandomSource(seed)
    side = (1 << J,) * n
    A1 = random_accretive_field(1, side, 1.0, 2.0, src.child(0))
    A2 = random_accretive_field(n, side, 1.0, 2.0, src.child(1))
    c = HodgeDiracConfig(n, J, A1=A1, A2=A2)
    return c, hodge_dirac(c)


def check_resolvent_algebra():
    c, hd = _hodge()
    u = GridFunction.random(c.grid(), RandomSource(SEED).child(5))
    t = 0.3
    res = hd.resolvents(t)
    R = res["R"].apply_values(u.values, c.n)
    Rm = res["R"].with_t(-t).apply_values(u.values, c.n)
    P = res["P"].apply_values(u.values, c.n)
    Q = res["Q"].apply_values(u.values, c.n)
    err = max(_rel(0.5 * (R + Rm), P), _rel(0.5j * (R - Rm), Q), _rel(P - 1j * Q, R),
              _rel(t * hd.pi_B.apply_values(P, c.n), Q))
    return "resolvent_algebra", err <= 1e-9, f"max error {err:.2e}"


def check_sign_squared():
    c = HodgeDiracConfig(2, 3)
    s = pi_function_symbol(np.sign, c.d_symbol, c.n, c.J)
    S = pi_symbol(c.d_symbol)
    z = zeta(c.n, c.J)[..., None, None]
    proj = np.where(z > 0, (S @ S) / np.where(z > 0, z, 1.0) ** 2, 0.0)
    err = _rel(s @ s, proj)
    return "sign_squared_is_range_projection", err <= 1e-8, f"{err:.2e}"


def check_even_calculus():
    c = HodgeDiracConfig(1, 5)
    u = GridFunction.random(c.grid(), RandomSource(SEED).child(6))
    S = pi_symbol(c.d_symbol)
    z = zeta(c.n, c.J)
    pu = fft_apply(S, u.values, c.n)
    g = pi_function_symbol(lambda x: 1.0 / (1.0 + x * x), c.d_symbol, c.n, c.J)
    lhs = fft_apply(g, pu, c.n)
    rhs = fft_apply((1.0 / (1.0 + z * z))[..., None, None] * np.eye(c.N), pu, c.n)
    err = _rel(lhs, rhs)
    return "even_calculus_on_range", err <= 1e-10, f"{err:.2e}"


def check_hodge_split():
    c, hd = _hodge()
    u = GridFunction.random(c.grid(), RandomSource(SEED).child(7))
    h = hodge_decomposition(hd, u)
    total = h.range_gamma_star_B.values + h.range_gamma.values + h.kernel.values
    scale = float(np.abs(u.values).max())
    kill1 = float(np.abs(hd.gamma.apply_values(h.range_gamma.values, c.n)).max()) / scale
    kill2 = float(np.abs(hd.gamma_star_B.apply_values(h.range_gamma_star_B.values, c.n)).max()) / scale
    kill3 = float(np.abs(hd.pi_B.apply_values(h.kernel.values, c.n)).max()) / scale
    err = max(_rel(total, u.values), kill1, kill2, kill3)
    return "hodge_recombination_and_annihilation", err <= 1e-8, f"max error {err:.2e}"


def check_kato_identity():
    err = 0.0
    for n, J in ((1, 5), (2, 3)):
        prob = KatoProblem(n, J, np.broadcast_to(np.eye(n), (1 << J,) * n + (n, n)).copy())
        u = GridFunction.random(prob.grid, RandomSource(SEED).child(8 + n))
        ng = lp_norm(prob.grad().apply(u), 2)
        for method in ("fourier", "dense_schur"):
            err = max(err, abs(lp_norm(sqrt_L(prob, u, method).value, 2) - ng) / ng)
    return "kato_identity_at_A_equal_I", err <= 1e-10, f"max error {err:.2e}"


def _embed_global(b: CarlesonFamily, u: GridFunction, p: float) -> float:
    g = u.grid
    terms = []
    for cube, arr in b.items():
        avg = u.values[cube.cell_slices(g.J)].reshape((-1,) + u.values.shape[g.n:]).mean(axis=0)
        terms.append(arr.reshape(arr.shape + (1,) * avg.ndim) * avg)
    acc = 0.0
    for signs in itertools.product((1.0, -1.0), repeat=len(terms)):
        f = sum(s * t for s, t in zip(signs, terms))
        acc += float(np.mean(g.norm_of_tuple(f) ** p))
    return (acc / 2 ** len(terms)) ** (1.0 / p)


def check_embedding():
    src = RandomSource(SEED).child(9)
    b = random_family(1, 3, src.child(0), prob=0.6)
    u = GridFunction.random(Grid(1, 3, 1, SpaceDescriptor.parse("lq:1.5:3")), src.child(1))
    lhs = carleson_embed_lhs(b, u, 1.5).value
    ref = _embed_global(b, u, 1.5)
    keep = {cube for i, (cube, _) in enumerate(b.items()) if i % 2 == 0}.__contains__
    mono = car_norm(b.restrict(keep), 2.0) <= car_norm(b, 2.0) + 1e-15
    err = abs(lhs - ref) / ref
    return "embedding_enumeration", err <= 1e-12 and mono, f"rel error {err:.2e}"


def check_stopping():
    u = GridFunction.random(Grid(1, 4, 1, SpaceDescriptor.parse("lq:1:3")), RandomSource(SEED).child(10))
    st = stopping_decomposition(u, 0.3, OptimizerSettings(restarts=1, sweeps=5), RandomSource(SEED).child(11))
    checks = st.check_structure()
    return "stopping_structure", all(checks.values()), str(checks)


def check_paraproduct():
    g = Grid(1, 4)
    Q = DyadicCube(-1, (0,))
    h = GridFunction.haar(g, Q)
    one = GridFunction.indicator(g, Q.children()[0])
    err = _rel(paraproduct(h, one).values, 0.5 * h.values)
    return "paraproduct_haar_example", err <= 1e-14, f"{err:.2e}"


def check_report_determinism():
    from .config import ExperimentConfig
    from .experiments import run_counterexample
    cfg = ExperimentConfig.build("counterexample", {"m": 2})
    a, b = run_counterexample(cfg).to_json(), run_counterexample(cfg).to_json()
    return "report_determinism", a == b, ""


CHECKS = [check_descriptors, check_random_source, check_rademacher_homogeneity, check_projection_law,
          check_haar_round_trip, check_scalar_rmf, check_counterexample, check_ddstar, check_resolvent_algebra,
          check_sign_squared, check_even_calculus, check_hodge_split, check_kato_identity, check_embedding,
          check_stopping, check_paraproduct, check_report_determinism]


def run_selftest() -> list[tuple[str, bool, str]]:
    out = []
    for check in CHECKS:
        try:
            name, ok, detail = check()
        except Exception as exc:  # a crashing identity is a failed identity
            name, ok, detail = check.__name__, False, f"{type(exc).__name__}: {exc}"
        out.append((name, bool(ok), detail))
    return out
