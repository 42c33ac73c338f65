import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nested_karlin.errors import ValidationError
from nested_karlin.kernels import poisson_tail, psi
from nested_karlin.moments import (
    cov_K_cross_gen,
    cov_K_cross_level,
    cov_K_same,
    cov_K_star_same,
    depoissonization_constant,
    enumerate_boxes,
    mean_K,
    mean_K_binomial,
    mean_K_star,
)
from nested_karlin.weights import WeightFamily


def _mc_cov(x, y):
    """Empirical covariance and its standard error."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    prod = (x - x.mean()) * (y - y.mean())
    return float(prod.mean()), float(prod.std(ddof=1) / math.sqrt(prod.size))


@pytest.fixture(scope="module")
def geo():
    return WeightFamily.geometric(0.5)


@pytest.fixture(scope="module")
def weib():
    return WeightFamily.weibull_like(0.5)


@pytest.fixture(scope="module")
def fin3():
    return WeightFamily.finite([0.5, 0.3, 0.2])


class TestEnumeration:
    def test_finite_family_is_exhaustive(self, fin3):
        for j in (1, 2, 3):
            est = mean_K(fin3, j, 1, 7.0)
            assert est.error_bound == 0.0
            assert est.boxes_enumerated == 3**j

    def test_geometric_box_count(self, geo):
        est = mean_K(geo, 1, 1, 10.0, prune=1e-8)
        # k-loop stops once the geometric tail 2^-k dips under eps/t
        assert est.boxes_enumerated == 30
        assert est.error_bound <= 1e-8

    def test_weibull_two_generations(self, weib):
        est = mean_K(weib, 2, 1, math.exp(10.0), prune=1e-9)
        assert est.boxes_enumerated > 0
        assert 0.0 < est.error_bound < 1e-6

    def test_budget_respected(self, geo, weib):
        for fam, j, t in ((geo, 1, 50.0), (weib, 2, 200.0)):
            for eps in (1e-6, 1e-10):
                assert mean_K(fam, j, 2, t, prune=eps).error_bound <= eps

    def test_degenerate_budget(self, geo):
        # a budget at or above the Markov coefficient t/l prunes everything
        est = mean_K(geo, 1, 1, 10.0, prune=20.0)
        assert est.value == 0.0
        assert est.error_bound == 10.0
        assert est.boxes_enumerated == 0

    def test_enumerate_boxes_plan_weights(self, fin3):
        enum = enumerate_boxes(fin3, 2, 1e-9, 5.0)
        w = np.concatenate(list(enum.chunks()))
        assert w.size == 9
        assert float(w.sum()) == pytest.approx(1.0, abs=1e-12)

    def test_rejects_bad_arguments(self, geo):
        with pytest.raises(ValidationError):
            mean_K(geo, 0, 1, 10.0)
        with pytest.raises(ValidationError):
            mean_K(geo, 1, 0, 10.0)
        with pytest.raises(ValidationError):
            mean_K(geo, 1, 1, -1.0)


class TestMeans:
    def test_single_box_closed_form(self):
        solo = WeightFamily.finite([1.0])
        for l in (1, 2, 5):
            est = mean_K(solo, 1, l, 3.0)
            assert est.value == pytest.approx(float(poisson_tail(l, 3.0)), rel=1e-14)
            assert est.error_bound == 0.0
            star = mean_K_star(solo, 1, l, 3.0)
            assert star.value == pytest.approx(float(psi(l, 3.0)), rel=1e-14)

    def test_telescoping(self, geo):
        for l in (1, 2, 3):
            hi = mean_K(geo, 1, l, 40.0)
            lo = mean_K(geo, 1, l + 1, 40.0)
            star = mean_K_star(geo, 1, l, 40.0)
            tol = hi.error_bound + lo.error_bound + star.error_bound
            assert abs((hi.value - lo.value) - star.value) <= tol + 1e-13

    def test_against_per_box_poisson_mc(self, weib):
        # independent oracle: draw each box's Poisson count directly
        t, replicas, seed = math.exp(8.0), 10_000, 91
        cut = weib.tail_index(1e-6 / t)
        w = weib.weight_prefix(cut)
        rng = np.random.default_rng(seed)
        counts = rng.poisson(w[None, :] * t, size=(replicas, w.size))
        emp = (counts >= 1).sum(axis=1)
        se = emp.std(ddof=1) / math.sqrt(replicas)
        exact = mean_K(weib, 1, 1, t, prune=1e-9)
        assert abs(emp.mean() - exact.value) <= 4.0 * se + 1e-6

    def test_mean_star_mc(self, geo):
        t, replicas, seed = 60.0, 20_000, 17
        cut = geo.tail_index(1e-9)
        w = geo.weight_prefix(cut)
        rng = np.random.default_rng(seed)
        counts = rng.poisson(w[None, :] * t, size=(replicas, w.size))
        emp = (counts == 2).sum(axis=1)
        se = emp.std(ddof=1) / math.sqrt(replicas)
        exact = mean_K_star(geo, 1, 2, t)
        assert abs(emp.mean() - exact.value) <= 4.0 * se + 1e-6


class TestBinomialMeans:
    def test_one_ball(self, geo, fin3):
        for fam in (geo, fin3):
            est = mean_K_binomial(fam, 1, 1, 1)
            assert est.value == pytest.approx(1.0, abs=1e-9)

    def test_two_balls_two_boxes(self):
        fam = WeightFamily.finite([0.5, 0.5])
        est = mean_K_binomial(fam, 1, 2, 2)
        assert est.value == pytest.approx(0.5, rel=1e-14)
        assert est.error_bound == 0.0

    def test_fewer_balls_than_level(self, geo):
        assert mean_K_binomial(geo, 1, 3, 2).value == 0.0
        assert mean_K_binomial(geo, 1, 1, 0).value == 0.0

    def test_matches_multinomial_mc(self, fin3):
        # deterministic scheme: n balls thrown at once
        n, replicas, seed = 25, 40_000, 5
        rng = np.random.default_rng(seed)
        counts = rng.multinomial(n, fin3.probs, size=replicas)
        emp = (counts >= 2).sum(axis=1)
        se = emp.std(ddof=1) / math.sqrt(replicas)
        exact = mean_K_binomial(fin3, 1, 2, n)
        assert abs(emp.mean() - exact.value) <= 4.0 * se


class TestSameLevelCovariances:
    def test_equal_times_is_bernoulli_variance(self, fin3):
        t, l = 6.0, 1
        a = np.array([poisson_tail(l, p * t) for p in fin3.probs])
        want = float(np.sum(a * (1.0 - a)))
        est = cov_K_same(fin3, 1, l, t, t)
        assert est.value == pytest.approx(want, rel=1e-13)

    def test_two_box_closed_form(self):
        # summand algebra at l=1: e^{-p t}(1 - e^{-p s}) per box, s <= t
        fam = WeightFamily.finite([0.6, 0.4])
        s, t = 2.0, 5.0
        want = sum(
            math.exp(-p * t) * (1.0 - math.exp(-p * s)) for p in fam.probs
        )
        est = cov_K_same(fam, 1, 1, s, t)
        assert est.value == pytest.approx(want, rel=1e-13)

    def test_symmetric_in_times(self, geo):
        a = cov_K_same(geo, 1, 2, 11.0, 29.0)
        b = cov_K_same(geo, 1, 2, 29.0, 11.0)
        assert a.value == b.value

    def test_variance_nonnegative(self, geo, weib):
        for fam in (geo, weib):
            for t in (2.0, 50.0):
                assert cov_K_same(fam, 1, 1, t, t).value >= 0.0

    def test_star_equal_times(self, fin3):
        t, l = 6.0, 2
        a = np.array([float(psi(l, p * t)) for p in fin3.probs])
        want = float(np.sum(a * (1.0 - a)))
        est = cov_K_star_same(fin3, 1, l, t, t)
        assert est.value == pytest.approx(want, rel=1e-13)

    def test_star_single_box_substitution(self):
        solo = WeightFamily.finite([1.0])
        s, t = 1.5, 4.0
        want = s * math.exp(-t) - float(psi(1, s)) * float(psi(1, t))
        est = cov_K_star_same(solo, 1, 1, s, t)
        assert est.value == pytest.approx(want, rel=1e-13)

    def test_mc_oracle_three_boxes(self, fin3):
        # independent oracle: cumulative Poisson increments per box
        s, t, l, replicas, seed = 3.0, 8.0, 1, 400_000, 23
        rng = np.random.default_rng(seed)
        p = fin3.probs
        early = rng.poisson(p[None, :] * s, size=(replicas, 3))
        late = early + rng.poisson(p[None, :] * (t - s), size=(replicas, 3))
        emp, se = _mc_cov((early >= l).sum(axis=1), (late >= l).sum(axis=1))
        exact = cov_K_same(fin3, 1, l, s, t)
        assert abs(emp - exact.value) <= 4.0 * se

    def test_star_mc_oracle_three_boxes(self, fin3):
        s, t, l, replicas, seed = 3.0, 8.0, 2, 400_000, 29
        rng = np.random.default_rng(seed)
        p = fin3.probs
        early = rng.poisson(p[None, :] * s, size=(replicas, 3))
        late = early + rng.poisson(p[None, :] * (t - s), size=(replicas, 3))
        emp, se = _mc_cov((early == l).sum(axis=1), (late == l).sum(axis=1))
        exact = cov_K_star_same(fin3, 1, l, s, t)
        assert abs(emp - exact.value) <= 4.0 * se


class TestCrossLevelCovariances:
    def test_reduces_to_same_level(self, geo):
        for s, t in ((7.0, 7.0), (4.0, 19.0)):
            a = cov_K_cross_level(geo, 1, 2, 2, s, t)
            b = cov_K_same(geo, 1, 2, s, t)
            assert a.value == pytest.approx(b.value, abs=1e-12)

    def test_single_box_nested_events(self):
        # l1 >= l2 with s <= t: {pi_s >= 2} forces {pi_t >= 1}
        solo = WeightFamily.finite([1.0])
        s, t = 2.0, 6.0
        want = float(poisson_tail(2, s)) - float(poisson_tail(2, s)) * float(
            poisson_tail(1, t)
        )
        est = cov_K_cross_level(solo, 1, 2, 1, s, t)
        assert est.value == pytest.approx(want, rel=1e-13)

    def test_mc_oracle_both_orders(self, fin3):
        s, t, replicas, seed = 3.0, 8.0, 400_000, 31
        rng = np.random.default_rng(seed)
        p = fin3.probs
        early = rng.poisson(p[None, :] * s, size=(replicas, 3))
        late = early + rng.poisson(p[None, :] * (t - s), size=(replicas, 3))
        for l1, l2 in ((2, 1), (1, 2), (1, 3)):
            emp, se = _mc_cov((early >= l1).sum(axis=1), (late >= l2).sum(axis=1))
            exact = cov_K_cross_level(fin3, 1, l1, l2, s, t)
            assert abs(emp - exact.value) <= 4.0 * se, (l1, l2)

    def test_times_attached_to_levels(self, geo):
        # l1 rides s, l2 rides t: swapping both must agree, swapping one must not
        a = cov_K_cross_level(geo, 1, 3, 1, 5.0, 12.0)
        b = cov_K_cross_level(geo, 1, 1, 3, 12.0, 5.0)
        assert a.value == pytest.approx(b.value, abs=1e-12)


class TestCrossGeneration:
    def test_single_box_chain_coincides(self):
        # one box per generation: the two indicators are the same event
        solo = WeightFamily.finite([1.0])
        s = 1.3
        est = cov_K_cross_gen(solo, 1, 2, 1, 1, s, s)
        want = math.exp(-s) * (1.0 - math.exp(-s))
        assert est.value == pytest.approx(want, rel=1e-12)

    def test_mc_oracle_nested_thinning(self, fin3):
        # independent oracle: balls present at t are each present at s
        # w.p. s/t and fall into a child box multinomially
        s, t, l, n, replicas, seed = 4.0, 9.0, 1, 1, 300_000, 37
        rng = np.random.default_rng(seed)
        p = fin3.probs
        parent_t = rng.poisson(p[None, :] * t, size=(replicas, 3))
        k1 = np.zeros(replicas)
        k2 = np.zeros(replicas)
        for k in range(3):
            parent_s = rng.binomial(parent_t[:, k], s / t)
            k1 += parent_s >= l
            children = rng.multinomial(parent_t[:, k], p)
            k2 += (children >= n).sum(axis=1)
        emp, se = _mc_cov(k1, k2)
        exact = cov_K_cross_gen(fin3, 1, 2, l, n, s, t)
        assert abs(emp - exact.value) <= 4.0 * se

    def test_mc_oracle_reversed_times(self, fin3):
        # second-generation count observed first (t < s branch)
        s, t, l, n, replicas, seed = 9.0, 4.0, 1, 2, 300_000, 41
        rng = np.random.default_rng(seed)
        p = fin3.probs
        parent_s = rng.poisson(p[None, :] * s, size=(replicas, 3))
        k1 = (parent_s >= l).sum(axis=1)
        k2 = np.zeros(replicas)
        for k in range(3):
            parent_t = rng.binomial(parent_s[:, k], t / s)
            children = rng.multinomial(parent_t, p)
            k2 += (children >= n).sum(axis=1)
        emp, se = _mc_cov(k1, k2)
        exact = cov_K_cross_gen(fin3, 1, 2, l, n, s, t)
        assert abs(emp - exact.value) <= 4.0 * se

    def test_normalized_decorrelation_trend(self, weib):
        # |cov| / sqrt(f_1 f_2) must fall along T in {8, 12, 16}
        from nested_karlin.kernels import c_f_g

        ratios = []
        for T in (8.0, 12.0, 16.0):
            t = math.exp(T)
            est = cov_K_cross_gen(weib, 1, 2, 1, 1, t, t, prune=1e-6)
            _, f1, _ = c_f_g(weib.asymptotic_params(1), t)
            _, f2, _ = c_f_g(weib.asymptotic_params(2), t)
            ratios.append(abs(est.value) / math.sqrt(f1 * f2))
        assert ratios[0] > ratios[1] > ratios[2]

    def test_generation_order_validated(self, fin3):
        with pytest.raises(ValidationError):
            cov_K_cross_gen(fin3, 2, 2, 1, 1, 1.0, 1.0)
        with pytest.raises(ValidationError):
            cov_K_cross_gen(fin3, 2, 1, 1, 1, 1.0, 1.0)


class TestCertification:
    @given(
        st.sampled_from(["geo", "weib"]),
        st.integers(1, 2),
        st.integers(1, 3),
        st.floats(1.0, 300.0),
    )
    @settings(max_examples=25, deadline=None)
    def test_halving_honesty_mean(self, kind, j, l, t):
        fam = WeightFamily.geometric(0.5) if kind == "geo" else WeightFamily.weibull_like(0.5)
        coarse = mean_K(fam, j, l, t, prune=1e-5)
        fine = mean_K(fam, j, l, t, prune=5e-6)
        assert abs(coarse.value - fine.value) <= coarse.error_bound + fine.error_bound

    def test_halving_honesty_covariances(self, geo, weib):
        for fam in (geo, weib):
            for fn, args in (
                (cov_K_same, (1, 1, 9.0, 30.0)),
                (cov_K_star_same, (1, 2, 9.0, 30.0)),
                (cov_K_cross_level, (1, 2, 1, 9.0, 30.0)),
            ):
                coarse = fn(fam, *args, prune=1e-4)
                fine = fn(fam, *args, prune=1e-8)
                assert abs(coarse.value - fine.value) <= (
                    coarse.error_bound + fine.error_bound
                ), (fam.kind, fn.__name__)
        coarse = cov_K_cross_gen(geo, 1, 2, 1, 1, 9.0, 30.0, prune=1e-4)
        fine = cov_K_cross_gen(geo, 1, 2, 1, 1, 9.0, 30.0, prune=1e-8)
        assert abs(coarse.value - fine.value) <= coarse.error_bound + fine.error_bound


class TestDepoissonizationConstant:
    def test_frozen_values(self):
        assert depoissonization_constant(1) == pytest.approx(
            1.0 + math.exp(-1.0), abs=1e-15
        )
        assert depoissonization_constant(2) == pytest.approx(2.3678794411714423, abs=1e-14)
        assert depoissonization_constant(3) == pytest.approx(6.367879441171443, abs=1e-13)

    def test_increasing_in_level(self):
        vals = [depoissonization_constant(l) for l in range(1, 8)]
        assert all(a < b for a, b in zip(vals, vals[1:]))

    def test_level_one_gap_is_actually_bounded(self, geo):
        # spot check the bound it certifies: |poissonized - binomial| at t = n
        for n in (10, 100, 2000):
            a = mean_K(geo, 1, 1, float(n)).value
            b = mean_K_binomial(geo, 1, 1, n).value
            assert abs(a - b) <= depoissonization_constant(1)
