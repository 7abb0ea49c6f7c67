import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from radmaxlab import DivergenceError, InvalidInputError
from radmaxlab.banach import SpaceDescriptor
from radmaxlab.dyadic import Grid, GridFunction, lp_norm
from radmaxlab.operators import (ContourSpec, FourierMultiplier, HodgeDiracConfig, Identity, KatoProblem,
                                 PointwiseMultiplier, contour_calculus, ellipticity_normalize, functional_calculus_pi,
                                 hodge_decomposition, hodge_dirac, neumann_resolvent, off_diagonal_profile,
                                 poisson_family, principal_part, quadratic_estimate, quadratic_multiplier_bound,
                                 random_accretive_field, random_scalar_coefficient, sqrt_L)
from radmaxlab.operators.spectral import frequencies, laplacian_symbol, zeta
from radmaxlab.randomness import RandomSource


def _hodge(n=1, J=4, seed=0, identity=False):
    if identity:
        c = HodgeDiracConfig(n, J)
    else:
        src = RandomSource(seed)
        side = (1 << J,) * n
        c = HodgeDiracConfig(n, J, A1=random_accretive_field(1, side, 1.0, 3.0, src.child(0)),
                             A2=random_accretive_field(n, side, 1.0, 3.0, src.child(1)))
    return c, hodge_dirac(c)


def _rel(a, b):
    return float(np.abs(a - b).max() / max(1e-300, float(np.abs(b).max())))


class TestHandles:
    def test_identity_multiplier(self):
        u = GridFunction.random(Grid(2, 3, 2, SpaceDescriptor.hilbert(2)), RandomSource(0))
        eye = FourierMultiplier(np.ones((8, 8)), 2)
        assert np.abs(eye.apply(u).values - u.values).max() <= 1e-12

    def test_laplacian_of_constant(self):
        lap = FourierMultiplier(laplacian_symbol(1, 4), 1)
        u = GridFunction.constant(Grid(1, 4), 3.0)
        assert np.abs(lap.apply(u).values).max() <= 1e-12

    def test_poisson_examples(self):
        fam = poisson_family(1, 4, 1.0)
        u = GridFunction.constant(Grid(1, 4), 2 - 1j)
        assert fam["P"].apply(u).allclose(u)
        # symbol at xi = 1 via the action on a pure mode
        x = (np.arange(16) + 0.5) / 16
        mode = GridFunction.scalar(np.exp(2j * np.pi * x))
        out = fam["P"].apply(mode).values.ravel() / mode.values.ravel()
        assert np.allclose(out, 1 / (1 + 4 * np.pi ** 2))

    def test_qstar_q_symbol(self):
        t = 0.3
        fam = poisson_family(1, 5, t)
        x = (np.arange(32) + 0.5) / 32
        for xi in (1, 3, -5):
            mode = GridFunction.scalar(np.exp(2j * np.pi * xi * x))
            out = fam["Qstar"].apply(fam["Q"].apply(mode)).values.ravel() / mode.values.ravel()
            a = 4 * np.pi ** 2 * t * t * xi * xi
            assert np.allclose(out, a / (1 + a) ** 2)

    def test_linearity(self):
        c, hd = _hodge()
        g = c.grid()
        u, v = (GridFunction.random(g, RandomSource(s)) for s in (1, 2))
        a, b = 2 - 1j, 0.5j
        lhs = hd.pi_B.apply_values(a * u.values + b * v.values, 1)
        rhs = a * hd.pi_B.apply_values(u.values, 1) + b * hd.pi_B.apply_values(v.values, 1)
        assert _rel(lhs, rhs) < 1e-12

    def test_dense_matches_apply(self):
        c, hd = _hodge(J=3)
        M = hd.pi_B.to_dense(1, 3, 2)
        u = GridFunction.random(c.grid(), RandomSource(3))
        assert _rel((M @ u.values.reshape(-1)).reshape(u.values.shape), hd.pi_B.apply_values(u.values, 1)) < 1e-12


class TestHodge:
    def test_ddstar(self):
        for n in (1, 2):
            c = HodgeDiracConfig(n, 4)
            assert c.checks["DDstarD"] <= 1e-12 * float(np.abs(c.d_symbol).max()) ** 3

    def test_bad_symbol_rejected(self):
        d = np.ones((8, 1, 1), dtype=complex)
        with pytest.raises(InvalidInputError):
            HodgeDiracConfig(1, 3, d_symbol=d)

    def test_identity_coefficients(self):
        c, hd = _hodge(n=2, J=3, identity=True)
        u = GridFunction.random(c.grid(), RandomSource(4))
        assert _rel(hd.pi_B.apply_values(u.values, 2), hd.pi.apply_values(u.values, 2)) < 1e-14

    def test_block_structure(self):
        c, hd = _hodge(n=1, J=5, identity=True)
        x = (np.arange(32) + 0.5) / 32
        f = np.sin(2 * np.pi * x) + 0.3 * np.cos(6 * np.pi * x)
        vals = np.zeros((32, 2, 1), dtype=complex)
        vals[:, 0, 0] = f
        out = hd.pi.apply_values(vals, 1)
        df = 2 * np.pi * np.cos(2 * np.pi * x) - 0.3 * 6 * np.pi * np.sin(6 * np.pi * x)
        assert np.abs(out[:, 0]).max() < 1e-12
        assert np.allclose(out[:, 1, 0], df, atol=1e-10)

    def test_pi_squared_on_range(self):
        c, hd = _hodge(n=2, J=4, identity=True)
        v = GridFunction.random(Grid(2, 4), RandomSource(5)).values
        vals = np.zeros(c.grid().shape, dtype=complex)
        vals[..., 1:, :] = hd.D.apply_values(v, 2)
        pi2 = hd.pi.apply_values(hd.pi.apply_values(vals, 2), 2)
        lap = FourierMultiplier(zeta(2, 4) ** 2, 2).apply_values(vals, 2)
        assert _rel(pi2, lap) < 1e-10

    @settings(max_examples=10, deadline=None)
    @given(seed=st.integers(0, 2 ** 32), t=st.floats(1e-3, 10.0), n=st.integers(1, 2))
    def test_resolvent_identities(self, seed, t, n):
        c, hd = _hodge(n=n, J=4 if n == 1 else 3, seed=seed)
        u = GridFunction.random(c.grid(), RandomSource(seed).child(9))
        res = hd.resolvents(t)
        R = res["R"].apply_values(u.values, n)
        Rm = res["R"].with_t(-t).apply_values(u.values, n)
        P = res["P"].apply_values(u.values, n)
        Q = res["Q"].apply_values(u.values, n)
        scale = np.abs(u.values).max()
        assert np.abs(0.5j * (R - Rm) - Q).max() <= 1e-9 * scale
        assert np.abs(0.5 * (R + Rm) - P).max() <= 1e-9 * scale
        assert np.abs(t * hd.pi_B.apply_values(P, n) - Q).max() <= 1e-9 * scale
        assert np.abs(R + 1j * t * hd.pi_B.apply_values(R, n) - u.values).max() <= 1e-9 * scale

    def test_resolvent_at_zero(self):
        c, hd = _hodge()
        u = GridFunction.random(c.grid(), RandomSource(6))
        res = hd.resolvents(0.0)
        assert np.allclose(res["R"].apply_values(u.values, 1), u.values)
        assert np.allclose(res["P"].apply_values(u.values, 1), u.values)
        assert np.abs(res["Q"].apply_values(u.values, 1)).max() == 0

    def test_unperturbed_dense_vs_multiplier(self):
        c, hd = _hodge(n=2, J=3, identity=True)
        u = GridFunction.random(c.grid(), RandomSource(7))
        a = hd.resolvent(0.7, "R").apply_values(u.values, 2)
        b = hd.unperturbed_resolvent(0.7).apply_values(u.values, 2)
        assert _rel(a, b) <= 1e-10

    def test_iterative_path(self):
        side = (1 << 5,) * 2
        src = RandomSource(8)
        c = HodgeDiracConfig(2, 5, A1=random_accretive_field(1, side, 1.0, 2.0, src.child(0)),
                             A2=random_accretive_field(2, side, 1.0, 2.0, src.child(1)), dense_limit=64)
        hd = hodge_dirac(c)
        u = GridFunction.random(c.grid(), src.child(2))
        R = hd.resolvent(0.1, "R").apply_values(u.values, 2)
        back = R + 0.1j * hd.pi_B.apply_values(R, 2)
        assert np.abs(back - u.values).max() <= 1e-8 * np.abs(u.values).max()

    def test_decomposition(self):
        for n in (1, 2):
            c, hd = _hodge(n=n, J=4 if n == 1 else 3, seed=n)
            u = GridFunction.random(c.grid(), RandomSource(10 + n))
            h = hodge_decomposition(hd, u)
            total = h.range_gamma_star_B.values + h.range_gamma.values + h.kernel.values
            s = np.abs(u.values).max()
            assert np.abs(total - u.values).max() <= 1e-8 * s
            assert np.abs(hd.gamma.apply_values(h.range_gamma.values, n)).max() <= 1e-8 * s
            assert np.abs(hd.gamma_star_B.apply_values(h.range_gamma_star_B.values, n)).max() <= 1e-8 * s


class TestCalculus:
    def test_constant_function(self):
        c, hd = _hodge(identity=True)
        u = GridFunction.random(c.grid(), RandomSource(0))
        assert _rel(functional_calculus_pi(lambda z: np.ones_like(z), hd, u).values, u.values) < 1e-14

    def test_identity_function(self):
        c, hd = _hodge(n=2, J=3, identity=True)
        u = GridFunction.random(c.grid(), RandomSource(1))
        assert _rel(functional_calculus_pi(lambda z: z, hd, u).values, hd.pi.apply_values(u.values, 2)) < 1e-10

    def test_psi_is_q1(self):
        c, hd = _hodge(identity=True)
        u = GridFunction.random(c.grid(), RandomSource(2))
        out = functional_calculus_pi(lambda z: z / (1 + z * z), hd, u).values
        assert _rel(out, hd.resolvent(1.0, "Q", perturbed=False).apply_values(u.values, 1)) < 1e-10

    def test_even_function_on_range(self):
        c, hd = _hodge(n=2, J=3, identity=True)
        u = GridFunction.random(c.grid(), RandomSource(3))
        pu = hd.pi.apply_values(u.values, 2)
        lhs = functional_calculus_pi(lambda z: 1 / (1 + z * z), hd, GridFunction(c.grid(), pu)).values
        rhs = FourierMultiplier(1 / (1 + zeta(2, 3) ** 2), 2).apply_values(pu, 2)
        assert _rel(lhs, rhs) < 1e-10

    def test_contour_zero(self):
        c, hd = _hodge(J=3, identity=True)
        u = GridFunction.random(c.grid(), RandomSource(4))
        out = contour_calculus(hd.pi, lambda z: np.zeros_like(z), ContourSpec(nodes_per_decade=8), u)
        assert np.abs(out.value.values).max() == 0

    def test_contour_diagonal(self):
        lam = np.array([0.5, -2.0, 3.0 + 0.2j, 10.0])
        u = GridFunction(Grid(1, 0, 4), np.ones((1, 4, 1)))
        out = contour_calculus(np.diag(lam), lambda z: z / (1 + z * z), ContourSpec(), u)
        assert np.allclose(out.value.values.ravel(), lam / (1 + lam * lam), rtol=1e-6, atol=1e-8)

    def test_contour_matches_explicit(self):
        c, hd = _hodge(J=4, identity=True)
        u = GridFunction.random(c.grid(), RandomSource(5))
        psi = lambda z: z / (1 + z * z)  # noqa: E731
        a = contour_calculus(hd.pi, psi, ContourSpec(), u).value.values
        b = functional_calculus_pi(psi, hd, u).values
        assert _rel(a, b) <= 1e-6

    def test_contour_spec_validation(self):
        with pytest.raises(InvalidInputError):
            ContourSpec(nodes_per_decade=3)
        with pytest.raises(InvalidInputError):
            ContourSpec(r_min=0)


class TestElliptic:
    def test_normalize_identity(self):
        nz = ellipticity_normalize(np.broadcast_to(np.eye(2), (4, 4, 2, 2)), 1.0, 1.0)
        assert nz.M == 1 and nz.delta == 0.5 and np.abs(nz.K).max() < 1e-15

    def test_normalize_scalar(self):
        a = 1 + RandomSource(0).generator().random(16)
        nz = ellipticity_normalize(a, 1.0, 2.0)
        assert nz.M == pytest.approx(4.0)
        assert nz.check_margin >= 0 and nz.K_norm < 1

    def test_normalize_accretive(self):
        A = random_accretive_field(2, (8, 8), 0.5, 3.0, RandomSource(1))
        nz = ellipticity_normalize(A, 0.5, 3.0)
        assert np.linalg.norm(nz.K, ord=2, axis=(-2, -1)).max() < 1

    def test_normalize_rejects(self):
        with pytest.raises(InvalidInputError):
            ellipticity_normalize(np.full(4, 5.0), 1.0, 2.0)

    def test_neumann_zero(self):
        u = GridFunction.random(Grid(1, 4), RandomSource(2))
        assert neumann_resolvent(0.5, np.zeros(16), u).value.allclose(u, atol=0)

    def test_neumann_constant(self):
        u = GridFunction.constant(Grid(1, 4), 3.0)
        out = neumann_resolvent(0.5, np.full(16, 0.4), u).value
        assert np.allclose(out.values, 3.0 / 1.4, atol=1e-10)

    def test_neumann_divergent(self):
        with pytest.raises(DivergenceError):
            neumann_resolvent(0.5, np.full(4, 1.0), GridFunction.zeros(Grid(1, 2)))

    def test_neumann_vs_dense(self):
        J = 6
        gen = RandomSource(3).generator()
        K = 0.9 * np.exp(2j * np.pi * gen.random(64)) * gen.random(64) / 1.0
        K[0] = 0.9
        u = GridFunction.random(Grid(1, J), RandomSource(4))
        t = 2.0 ** -3
        P = np.real(np.fft.ifft(np.fft.fft(np.eye(64), axis=0) / (1 + (t * zeta(1, J)) ** 2)[:, None], axis=0))
        dense = np.linalg.solve(np.eye(64) + P @ np.diag(K), u.values.ravel())
        out = neumann_resolvent(t, K, u, tol=1e-10).value.values.ravel()
        assert np.abs(out - dense).max() <= 1e-8

    def test_sqrt_single_mode(self):
        prob = KatoProblem(1, 5, np.ones((32, 1, 1)))
        x = (np.arange(32) + 0.5) / 32
        u = GridFunction.scalar(np.exp(2j * np.pi * 3 * x))
        for method in ("fourier", "dense_schur"):
            assert np.allclose(sqrt_L(prob, u, method).value.values, 6 * np.pi * u.values, atol=1e-9)

    @pytest.mark.parametrize("n,J", [(1, 6), (2, 3)])
    def test_parseval(self, n, J):
        prob = KatoProblem(n, J, np.broadcast_to(np.eye(n), (1 << J,) * n + (n, n)).copy())
        u = GridFunction.random(prob.grid, RandomSource(5))
        g = lp_norm(prob.grad().apply(u), 2)
        for method in ("fourier", "dense_schur", "resolvent_quadrature"):
            assert lp_norm(sqrt_L(prob, u, method).value, 2) == pytest.approx(g, rel=1e-10 if method != "resolvent_quadrature" else 1e-6)

    def test_quadrature_vs_schur_rough(self):
        a = random_scalar_coefficient(6, 1.0, 10.0, RandomSource(6))
        prob = KatoProblem(1, 6, a)
        u = GridFunction.random(prob.grid, RandomSource(7))
        ref = sqrt_L(prob, u, "dense_schur").value.values
        alt = sqrt_L(prob, u, "resolvent_quadrature").value.values
        assert np.linalg.norm(alt - ref) / np.linalg.norm(ref) <= 1e-4

    def test_fourier_needs_constant(self):
        a = random_scalar_coefficient(3, 1.0, 2.0, RandomSource(8))
        with pytest.raises(InvalidInputError):
            sqrt_L(KatoProblem(1, 3, a), GridFunction.zeros(Grid(1, 3)), "fourier")


class TestAnalysis:
    def test_principal_part_identity(self):
        g = Grid(1, 4, 2)
        gam = principal_part(Identity(), -2, g, radius=1)
        assert np.allclose(gam, np.eye(2))

    def test_principal_part_multiplier(self):
        m = RandomSource(0).normals(16, 1).reshape(16, 1, 1)
        gam = principal_part(PointwiseMultiplier(m, 1), -2, Grid(1, 4), radius=0)
        assert np.allclose(gam, m)

    def test_principal_part_q_identity(self):
        c, hd = _hodge(identity=True)
        gam = principal_part(hd.resolvent(0.25, "Q"), -2, c.grid(), None)
        assert np.abs(gam).max() <= 1e-12

    def test_off_diagonal_locality(self):
        m = RandomSource(1).normals(64, 1).reshape(64, 1, 1)
        rows = off_diagonal_profile(PointwiseMultiplier(m, 1), 2.0 ** -4, [1, 2, 4], Grid(1, 6), RandomSource(2))
        assert all(r.ratio == 0 for r in rows)

    def test_off_diagonal_poisson_decay(self):
        t = 2.0 ** -5
        P = poisson_family(1, 8, t)["P"]
        rows = off_diagonal_profile(P, t, [0, 1, 2, 4, 8], Grid(1, 8), RandomSource(3))
        ratios = [r.ratio for r in rows]
        assert ratios[0] <= 1 + 1e-12
        # kernel e^{-|x|/t}/2t: the mass beyond rho t decays like e^{-rho}
        for r in rows[1:]:
            assert r.ratio <= 2 * np.exp(-r.rho) + 1e-12

    def test_quadratic_zero(self):
        c, hd = _hodge(identity=True)
        res = quadratic_estimate(hd, GridFunction.zeros(c.grid()), range(-4, 1), RandomSource(0))
        assert res.lhs.value == 0 and res.ratio == 0

    def test_quadratic_multiplier_bound(self):
        c, hd = _hodge(J=5, identity=True)
        ks = range(-5, 1)
        bound = quadratic_multiplier_bound(1, 5, ks)
        for s in range(5):
            u = GridFunction.random(c.grid(), RandomSource(s))
            assert quadratic_estimate(hd, u, ks, RandomSource(s), 2.0, perturbed=False).ratio <= bound + 1e-12

    def test_quadratic_rough_bounded(self):
        a = random_scalar_coefficient(5, 1.0, 4.0, RandomSource(9))
        c = HodgeDiracConfig(1, 5, A2=a)
        hd = hodge_dirac(c)
        v = GridFunction.random(Grid(1, 5), RandomSource(10)).values
        vals = np.zeros(c.grid().shape, dtype=complex)
        vals[:, 1:] = hd.D.apply_values(v, 1)
        for p in (1.5, 2.0, 3.0):
            r = quadratic_estimate(hd, GridFunction(c.grid(), vals), range(-5, 1), RandomSource(11), p).ratio
            assert 0 < r < 10

    def test_frequencies_shape(self):
        assert frequencies(2, 3).shape == (8, 8, 2)
