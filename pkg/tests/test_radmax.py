import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from radmaxlab import InvalidInputError, ResourceError
from radmaxlab.banach import SpaceDescriptor
from radmaxlab.dyadic import Grid, GridFunction, dyadic_maximal
from radmaxlab.radmax import (BasisIndicatorFunction, OptimizerSettings, chain_rbounds, counterexample_chain_bound,
                              counterexample_l1, counterexample_lambda, domination_checks, rademacher_maximal,
                              rademacher_maximal_at, rbound_of_vectors, rmf_norm_experiment)
from radmaxlab.randomness import RandomSource

FAST = OptimizerSettings(restarts=2, sweeps=10)


def _u(J, space, seed, n=1):
    return GridFunction.random(Grid(n, J, 1, SpaceDescriptor.parse(space)), RandomSource(seed))


def _origin_oracle(m):
    """Dense enumeration at cell 0 of the basis-indicator input with the fixed lambda."""
    n = 2 ** m
    d = 1 << n
    alpha = 1.0 / (np.arange(1, m + 1) + 1.0)
    vecs = []
    for i in range(1, m + 1):
        v = np.zeros(d)
        v[: 2 ** (2 ** i)] = 1.0
        vecs.append(alpha[i - 1] * v / 2 ** (2 ** i))
    vals = [np.abs(sum(s * v for s, v in zip(signs, vecs))).sum() for signs in itertools.product((1, -1), repeat=m)]
    return float(np.mean(vals))


class TestRademacherMaximal:
    @settings(max_examples=20, deadline=None)
    @given(J=st.integers(1, 5), n=st.integers(1, 2), seed=st.integers(0, 2 ** 32))
    def test_scalar_identity_through_optimizer(self, J, n, seed):
        u = _u(min(J, 3) if n == 2 else J, "scalar", seed, n)
        direct = chain_rbounds(u, FAST, RandomSource(seed))[-1][0]
        assert np.allclose(direct, dyadic_maximal(u), rtol=1e-10, atol=0)

    def test_constant(self):
        for space, c in (("lq:1:3", [1.0, -2.0, 0.5]), ("schatten:1:2", [[1, 2], [0, 1j]])):
            g = Grid(1, 3, 1, SpaceDescriptor.parse(space))
            u = GridFunction.constant(g, c)
            mr = rademacher_maximal(u, FAST, RandomSource(1))
            assert np.allclose(mr, g.space.norm(np.asarray(c, dtype=complex)), rtol=1e-12)

    def test_hilbert_fast_path(self):
        u = _u(4, "hilbert:3", 2)
        assert np.array_equal(rademacher_maximal(u), dyadic_maximal(u))

    @settings(max_examples=10, deadline=None)
    @given(seed=st.integers(0, 2 ** 32), c=st.floats(-5, 5).filter(lambda x: abs(x) > 1e-3))
    def test_homogeneity(self, seed, c):
        u = _u(3, "lq:1:3", seed)
        a = rademacher_maximal(u, FAST, RandomSource(seed))
        b = rademacher_maximal(GridFunction(u.grid, c * u.values), FAST, RandomSource(seed))
        assert np.allclose(b, abs(c) * a, rtol=1e-10)

    def test_more_candidates_never_lower(self):
        u = _u(4, "lq:1:4", 3)
        a = np.zeros(u.grid.spatial_shape)
        for r in (0, 1, 3, 6):
            b = chain_rbounds(u, OptimizerSettings(restarts=r, sweeps=5), RandomSource(7))[-1][0]
            assert np.all(b >= a - 1e-12)
            a = b

    def test_lower_bound_by_enumeration(self):
        # every candidate lambda is admissible, so the estimate dominates the value of any fixed lambda
        u = _u(3, "lq:1:3", 4)
        from radmaxlab.dyadic import ancestor_averages
        avgs = ancestor_averages(u)[:, 0, 0]  # (J+1, X)
        lam = np.ones(4) / 2
        vals = [np.abs(sum(s * l * a for s, l, a in zip(signs, lam, avgs))).sum()
                for signs in itertools.product((1, -1), repeat=4)]
        assert rademacher_maximal(u, FAST, RandomSource(0))[0] >= np.mean(vals) - 1e-12

    def test_rbound_of_vectors_basis(self):
        s = SpaceDescriptor.lebesgue(2, 3)
        a = RandomSource(0).normals(1, 3 * 3).reshape(1, 3, 3)
        v, lam = rbound_of_vectors(a, s, FAST, RandomSource(1))
        assert v[0] == pytest.approx(np.linalg.norm(a[0], axis=1).max(), rel=1e-9)
        assert np.linalg.norm(lam[0]) <= 1 + 1e-12

    def test_rejects_multi_component(self):
        with pytest.raises(InvalidInputError):
            rademacher_maximal(GridFunction.zeros(Grid(1, 2, 2)))


class TestCounterexample:
    def test_m1(self):
        r = counterexample_l1(1)
        assert r.lower_bound == pytest.approx(0.5, abs=1e-15)

    @pytest.mark.parametrize("m", [1, 2, 3])
    def test_matches_dense_enumeration(self, m):
        assert counterexample_l1(m).lower_bound == pytest.approx(_origin_oracle(m), rel=1e-13)

    def test_growth_and_chain_bound(self):
        vals = [counterexample_l1(m) for m in range(1, 5)]
        assert all(b.lower_bound > a.lower_bound for a, b in zip(vals, vals[1:]))
        for r in vals:
            i = np.arange(1, r.m + 1)
            alpha = 1 / (i + 1.0)
            tail = 2.0 ** (-(2.0 ** (i - 1)))
            chain = np.sum(alpha * (1 - tail)) - np.sum(alpha * tail)
            assert r.chain_bound == pytest.approx(chain, rel=1e-14)
            # the weaker variant that subtracts the tail twice is dominated as well
            weaker = np.sum(alpha * (1 - 2.0 ** (1 - 2.0 ** (i - 1)))) - np.sum(alpha * tail)
            assert r.lower_bound > r.chain_bound >= weaker

    def test_unit_norm(self):
        u = BasisIndicatorFunction(4).dense()
        assert np.allclose(u.pointwise_norm(), 1.0)

    def test_resource_limit(self):
        with pytest.raises(ResourceError):
            counterexample_l1(5)
        with pytest.raises(InvalidInputError):
            counterexample_l1(0)

    def test_optimizer_reaches_oracle_at_origin(self):
        m = 3
        u = BasisIndicatorFunction(2 ** m).dense()
        cand = counterexample_lambda(m)[::-1]  # index j counts cells, scale index runs coarse to fine
        v, _ = rademacher_maximal_at(u, (0,), OptimizerSettings(restarts=1, sweeps=3), RandomSource(0),
                                     candidates=[cand / np.linalg.norm(cand)])
        assert v >= _origin_oracle(m) / np.linalg.norm(cand) - 1e-12

    def test_chain_bound_formula(self):
        assert counterexample_chain_bound(1) == pytest.approx(0.0)


class TestExperiments:
    def test_hilbert_ratios_equal_maximal(self):
        r = rmf_norm_experiment(SpaceDescriptor.hilbert(2), 1.5, 4, 3, RandomSource(0))
        assert r.ratios == r.maximal_ratios
        assert r.semantic == "lower_bound"

    def test_lq_bounded(self):
        r = rmf_norm_experiment(SpaceDescriptor.parse("lq:4:8"), 2.0, 4, 3, RandomSource(1), settings=FAST)
        assert all(0 < x < 10 for x in r.ratios)
        assert "ratio" in r.to_csv() and r.to_dict()["max_ratio"] == r.max_ratio

    def test_reproducible(self):
        a = rmf_norm_experiment(SpaceDescriptor.parse("lq:1.5:2"), 2.0, 3, 2, RandomSource(5), settings=FAST)
        b = rmf_norm_experiment(SpaceDescriptor.parse("lq:1.5:2"), 2.0, 3, 2, RandomSource(5), settings=FAST)
        assert a.to_json() == b.to_json()

    def test_domination(self):
        h = domination_checks(_u(3, "hilbert:2", 0), FAST)
        assert h.type2_constant == pytest.approx(1.0)
        s = domination_checks(_u(3, "scalar", 1), FAST, RandomSource(0))
        assert s.type2_constant == pytest.approx(1.0) and s.lattice_constant == pytest.approx(1.0)
        l1 = domination_checks(_u(3, "lq:1:3", 2), FAST, RandomSource(0))
        assert l1.type2_constant is None and l1.notices
