"""Exit criteria at their stated tolerances; each test prints one pass/fail line."""

import time

import numpy as np
import pytest

from _oracles import embed_bruteforce
from radmaxlab.banach import SpaceDescriptor, contraction_check, rademacher_avg, square_function_norm
from radmaxlab.carleson import (carleson_embed_lhs, embedding_constant_experiment, epsilon_sweep,
                                paraproduct_bound_experiment, random_family, test_functions)
from radmaxlab.dyadic import DyadicCube, Grid, GridFunction, dyadic_maximal
from radmaxlab.harness import EXPERIMENTS
from radmaxlab.harness.config import ExperimentConfig
from radmaxlab.operators import (ContourSpec, HodgeDiracConfig, KatoProblem, contour_calculus,
                                 functional_calculus_pi, hodge_decomposition, hodge_dirac, neumann_resolvent,
                                 off_diagonal_profile, random_accretive_field, random_scalar_coefficient, sqrt_L)
from radmaxlab.operators.spectral import frequencies, zeta
from radmaxlab.radmax import OptimizerSettings, chain_rbounds, counterexample_l1
from radmaxlab.randomness import RandomSource

pytestmark = pytest.mark.acceptance


def _rough_hodge(n, J, src, lam=1.0, Lam=3.0):
    side = (1 << J,) * n
    c = HodgeDiracConfig(n, J, A1=random_accretive_field(1, side, lam, Lam, src.child(0)),
                         A2=random_accretive_field(n, side, lam, Lam, src.child(1)))
    return c, hodge_dirac(c)


def test_01_scalar_identity(criterion):
    t0 = time.perf_counter()
    worst = 0.0
    for s in range(100):
        u = GridFunction.random(Grid(1, 6), RandomSource(s))
        mr = chain_rbounds(u, OptimizerSettings(), RandomSource(1000 + s))[-1][0]
        worst = max(worst, float(np.abs(mr - dyadic_maximal(u)).max()))
    dt = time.perf_counter() - t0
    criterion(1, worst <= 1e-10 and dt < 10, f"max |M_R u - M u| = {worst:.2e}, {dt:.1f}s")


def test_02_counterexample(criterion):
    t0 = time.perf_counter()
    res = [counterexample_l1(m) for m in range(1, 5)]
    dt = time.perf_counter() - t0
    vals = [r.lower_bound for r in res]
    chains = []
    for r in res:
        i = np.arange(1, r.m + 1)
        chains.append(float(np.sum(1 / (i + 1.0) * (1 - 2 * 2.0 ** (-(2.0 ** (i - 1)))))))
    ok = (all(b > a for a, b in zip(vals, vals[1:])) and vals[0] == 0.5
          and all(v > c for v, c in zip(vals, chains)) and dt < 60)
    criterion(2, ok, f"values {vals}, chains {np.round(chains, 4).tolist()}, {dt:.1f}s")


def test_03_khintchine_kahane_band(criterion):
    t0 = time.perf_counter()
    lo, hi = np.inf, -np.inf
    gen = RandomSource(3).generator()
    for d in range(1, 9):
        s = SpaceDescriptor.lebesgue(2, d)
        for K in range(1, 11):
            cases = [gen.standard_normal((K, d)) + 1j * gen.standard_normal((K, d)) for _ in range(8)]
            cases += [np.ones((K, d)), np.eye(K, d) if K <= d else np.tile(np.eye(d), (K // d + 1, 1))[:K],
                      gen.standard_normal((K, 1)) * np.ones((1, d))]
            for xs in cases:
                est = rademacher_avg(s, xs, 1.0)
                assert est.method in ("exact_enum", "closed_form")
                r = est.value / square_function_norm(s, xs)
                lo, hi = min(lo, r), max(hi, r)
    dt = time.perf_counter() - t0
    ok = 1 / np.sqrt(2) - 1e-9 <= lo and hi <= 1 + 1e-9 and dt < 30
    criterion(3, ok, f"ratio band [{lo:.6f}, {hi:.6f}], {dt:.1f}s")


def test_04_contraction(criterion):
    t0 = time.perf_counter()
    kinds = {"scalar": "scalar", "hilbert": "hilbert:3", "lq": "lq:1:4", "lq_big": "lq:3.5:3",
             "schatten": "schatten:1:2"}
    violations = 0
    total = 0
    for k, (kind, spec) in enumerate(kinds.items()):
        s = SpaceDescriptor.parse(spec)
        src = RandomSource(4).child(k)
        for i in range(1000):
            gen = src.child(i).generator()
            K = int(gen.integers(1, 9))
            shape = (K,) + s.shape
            xs = gen.standard_normal(shape) + 1j * gen.standard_normal(shape)
            lam = gen.uniform(-1, 1, K) * (1 if i % 2 else np.exp(2j * np.pi * gen.random(K)))
            r = contraction_check(s, xs, lam)
            violations += not r.passed
            total += 1
    dt = time.perf_counter() - t0
    criterion(4, violations == 0 and dt < 60, f"{violations} violations in {total} instances, {dt:.1f}s")


def test_05_resolvent_algebra(criterion):
    t0 = time.perf_counter()
    worst = 0.0
    for s in range(100):
        src = RandomSource(5).child(s)
        gen = src.generator()
        J = int(gen.integers(2, 7))
        t = float(10 ** gen.uniform(-3, 1))
        c, hd = _rough_hodge(1, J, src)
        u = GridFunction.random(c.grid(), src.child(2))
        res = hd.resolvents(t)
        R = res["R"].apply_values(u.values, 1)
        Rm_op = res["R"].with_t(-t)
        Rm = Rm_op.apply_values(u.values, 1)
        P = res["P"].apply_values(u.values, 1)
        Q = res["Q"].apply_values(u.values, 1)
        RRm = res["R"].apply_values(Rm, 1)
        scale = np.abs(u.values).max()
        errs = [0.5 * (R + Rm) - P, RRm - P, 0.5j * (R - Rm) - Q, t * hd.pi_B.apply_values(P, 1) - Q]
        worst = max(worst, max(float(np.abs(e).max()) for e in errs) / scale)
    dt = time.perf_counter() - t0
    criterion(5, worst <= 1e-9 and dt < 60, f"max identity defect {worst:.2e}, {dt:.1f}s")


def test_06_calculus_vs_contour(criterion):
    t0 = time.perf_counter()
    c = HodgeDiracConfig(1, 6)
    hd = hodge_dirac(c)
    psi = lambda z: z / (1 + z * z)  # noqa: E731
    worst = 0.0
    for s in range(3):
        u = GridFunction.random(c.grid(), RandomSource(6).child(s))
        a = functional_calculus_pi(psi, hd, u).values
        b = contour_calculus(hd.pi, psi, ContourSpec(nodes_per_decade=40), u).value.values
        worst = max(worst, float(np.linalg.norm(a - b) / np.linalg.norm(a)))
    dt = time.perf_counter() - t0
    criterion(6, worst <= 1e-6 and dt < 30, f"relative difference {worst:.2e}, {dt:.1f}s")


def test_07_neumann_vs_dense(criterion):
    t0 = time.perf_counter()
    J = 8
    m = 1 << J
    gen = RandomSource(7).generator()
    K = np.exp(2j * np.pi * gen.random(m)) * gen.random(m)
    K *= 0.9 / np.abs(K).max()
    worst = 0.0
    for k in range(-6, 1):
        t = 2.0 ** k
        P = np.fft.ifft(np.fft.fft(np.eye(m), axis=0) / (1 + (t * zeta(1, J)) ** 2)[:, None], axis=0)
        lu = np.eye(m) + P @ np.diag(K)
        for s in range(20):
            u = GridFunction.random(Grid(1, J), RandomSource(70 + s))
            dense = np.linalg.solve(lu, u.values.ravel())
            out = neumann_resolvent(t, K, u, tol=1e-10).value.values.ravel()
            worst = max(worst, float(np.abs(out - dense).max()))
    dt = time.perf_counter() - t0
    criterion(7, worst <= 1e-8 and dt < 30, f"max difference {worst:.2e}, {dt:.1f}s")


def test_08_kato_identity(criterion):
    t0 = time.perf_counter()
    worst = 0.0
    for n, J in ((1, 6), (2, 4)):
        prob = KatoProblem(n, J, np.broadcast_to(np.eye(n), (1 << J,) * n + (n, n)).copy())
        # 50 fuzzed u per dimension, carried as the columns of one vector-valued function
        u = GridFunction.random(Grid(n, J, 1, SpaceDescriptor.hilbert(50)), RandomSource(8).child(n))
        cols = u.values.reshape((1 << J,) * n + (50,))
        vh = np.fft.fftn(cols, axes=tuple(range(n)))
        xi = frequencies(n, J)
        grad = [np.fft.ifftn(2j * np.pi * xi[..., a, None] * vh, axes=tuple(range(n))) for a in range(n)]
        g = np.sqrt(sum(np.mean(np.abs(d) ** 2, axis=tuple(range(n))) for d in grad))
        for method in ("fourier", "dense_schur"):
            out = sqrt_L(prob, u, method).value.values.reshape(cols.shape)
            s = np.sqrt(np.mean(np.abs(out) ** 2, axis=tuple(range(n))))
            worst = max(worst, float(np.abs(s - g).max()))
    dt = time.perf_counter() - t0
    criterion(8, worst <= 1e-10 and dt < 10, f"max | ||sqrt(L)u|| - ||grad u|| | = {worst:.2e}, {dt:.1f}s")


@pytest.mark.slow
def test_09_kato_rough(criterion):
    t0 = time.perf_counter()
    cfg = ExperimentConfig.build("kato", overrides=dict(n=1, J=10, ensemble=50, lam=1.0, Lam=10.0,
                                                         p=[1.5, 2.0, 3.0], check_quadrature=True, seed=9))
    rep = EXPERIMENTS["kato"](cfg)
    dt = time.perf_counter() - t0
    quad = [r["value"] for r in rep.rows if r["quantity"] == "quadrature_vs_schur_rel"]
    ratios = [r["ratio"] for r in rep.rows if r["quantity"] == "sqrtL_over_grad"]
    ok = (rep.passed and len(quad) == 50 and max(quad) <= 1e-4 and ratios
          and 0.01 <= min(ratios) and max(ratios) <= 100 and dt < 600)
    bands = {k: np.round(v, 4).tolist() for k, v in rep.aggregates.items() if k.startswith("band")}
    criterion(9, ok, f"max quadrature rel {max(quad, default=np.nan):.2e}, bands {bands}, {dt:.0f}s")


def test_10_carleson_embedding(criterion):
    t0 = time.perf_counter()
    worst = 0.0
    cases = 0
    spaces = ["scalar", "hilbert:2", "lq:1.5:3", "lq:1:2", "schatten:1:2"]
    k = 0
    while cases < 200:
        src = RandomSource(10).child(k)
        k += 1
        gen = src.generator()
        n = int(gen.integers(1, 3))
        J = int(gen.integers(1, 4 if n == 2 else 5))
        b = random_family(n, J, src.child(0), prob=float(gen.uniform(0.1, 0.6)))
        if b.cube_count() > 14:
            continue
        space = SpaceDescriptor.parse(spaces[k % len(spaces)])
        u = GridFunction.random(Grid(n, J, 1, space), src.child(1))
        p = float(gen.choice([1.0, 1.5, 2.0, 3.0]))
        est = carleson_embed_lhs(b, u, p)
        ref = embed_bruteforce(b, u, p)
        worst = max(worst, abs(est.value - ref) / max(ref, 1e-300))
        cases += 1
    consts = [embedding_constant_experiment(SpaceDescriptor.parse("lq:1.5:4"), 2.0, 0.5, 20, RandomSource(11), J=J
                                            ).constant for J in (4, 5, 6)]
    dt = time.perf_counter() - t0
    spread = max(consts) / min(consts)
    ok = worst <= 1e-12 and max(consts) <= 10 and spread <= 1.5 and dt < 300
    criterion(10, ok, f"brute-force rel diff {worst:.1e} on {cases} cases, constants J=4,5,6 "
                      f"{np.round(consts, 3).tolist()} (max/min {spread:.2f}), {dt:.1f}s")


def test_11_paraproduct_stability(criterion):
    t0 = time.perf_counter()
    out = {}
    for spec in ("scalar", "lq:1.5:4"):
        space = SpaceDescriptor.parse(spec)
        c6 = paraproduct_bound_experiment(space, 2.0, 20, RandomSource(12), J=6).constant
        c10 = paraproduct_bound_experiment(space, 2.0, 20, RandomSource(12), J=10).constant
        out[spec] = (c6, c10, abs(c10 - c6) / c6)
    dt = time.perf_counter() - t0
    ok = all(v[2] < 0.25 for v in out.values()) and dt < 300
    detail = ", ".join(f"{k}: {a:.3f} -> {b:.3f} ({100 * r:.1f}%)" for k, (a, b, r) in out.items())
    criterion(11, ok, f"{detail}, {dt:.1f}s")


def test_12_off_diagonal(criterion):
    t0 = time.perf_counter()
    J = 8
    c, hd = _rough_hodge(1, J, RandomSource(13), 1.0, 4.0)

    def ratio(k):
        t = 2.0 ** k
        rows = off_diagonal_profile(hd.resolvent(t, "Q"), t, [1, 4], c.grid(), RandomSource(14).child(-k))
        r1, r4 = rows[0].ratio, rows[1].ratio
        return r4 / r1 if r1 > 0 else (np.inf if r4 > 0 else 0.0)

    # the t-grid 2^-6 .. 1 keeps t >= 4 cells; below that the spectral kernel of Q_t has a 1/x tail
    worst = max(ratio(k) for k in range(-6, 1))
    mesh = [round(ratio(k), 3) for k in (-J, -J + 1)]
    dt = time.perf_counter() - t0
    criterion(12, worst <= 0.5 and dt < 120,
              f"max ratio(rho=4)/ratio(rho=1) = {worst:.3f} for t in 2^-6..1 "
              f"(mesh scales t = h, 2h: {mesh}), {dt:.1f}s")


def test_13_test_functions(criterion):
    t0 = time.perf_counter()
    J = 8
    cfg = HodgeDiracConfig(1, J, A2=random_scalar_coefficient(J, 1, 4, RandomSource(3)))
    hd = hodge_dirac(cfg)
    sweep = epsilon_sweep(cfg, DyadicCube(-2, (1,)), [0, 1], [1 / 64, 1 / 32, 1 / 16, 1 / 8, 1 / 4], hd=hd)
    t1, t2 = [], []
    for level in (-2, -3, -4):
        r = test_functions(cfg, DyadicCube(level, (1,)), [0, 1], 0.25, hd=hd).report
        t1.append(r["test1"])
        t2.append(r["test2"])
    dt = time.perf_counter() - t0
    s1, s2 = max(t1) / min(t1), max(t2) / min(t2)
    ok = sweep.slope >= 0.3 and s1 <= 2 and s2 <= 2 and dt < 120
    criterion(13, ok, f"slope {sweep.slope:.2f}, test1 {np.round(t1, 3).tolist()}, test2 {np.round(t2, 3).tolist()}, "
                      f"{dt:.1f}s")


def test_14_hodge(criterion):
    t0 = time.perf_counter()
    rec, ann = 0.0, 0.0
    for s in range(50):
        src = RandomSource(15).child(s)
        gen = src.generator()
        n = 1 if s % 3 else 2
        J = int(gen.integers(2, 6)) if n == 1 else int(gen.integers(2, 4))
        c, hd = _rough_hodge(n, J, src)
        u = GridFunction.random(c.grid(), src.child(2))
        h = hodge_decomposition(hd, u)
        scale = np.abs(u.values).max()
        total = h.range_gamma_star_B.values + h.range_gamma.values + h.kernel.values
        rec = max(rec, float(np.abs(total - u.values).max()) / scale)
        t = float(10 ** gen.uniform(-2, 0.5))
        ann = max(ann, float(np.abs(hd.resolvent(t, "Q").apply_values(h.kernel.values, n)).max()) / scale)
    dt = time.perf_counter() - t0
    criterion(14, rec <= 1e-8 and ann <= 1e-8 and dt < 60,
              f"recombination {rec:.1e}, annihilation {ann:.1e}, {dt:.1f}s")
