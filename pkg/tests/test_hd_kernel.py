import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st

from hetgen.errors import DomainError
from hetgen.hd_kernel import LogBase, binary_entropy, h_d, h_d_inv

unit = st.floats(0.0, 1.0, allow_nan=False)
bases = st.sampled_from([LogBase.NATURAL, LogBase.TWO])

mpmath.mp.dps = 40


def mp_hb(x):
    x = mpmath.mpf(x)
    return -(x * mpmath.log(x) if x > 0 else 0) - ((1 - x) * mpmath.log(1 - x) if x < 1 else 0)


def mp_hd(a, b):
    return 2 * mp_hb((mpmath.mpf(a) + mpmath.mpf(b)) / 2) - mp_hb(a) - mp_hb(b)


class TestBinaryEntropy:
    def test_endpoints_are_zero(self):
        assert binary_entropy(0.0) == 0.0
        assert binary_entropy(1.0) == 0.0

    def test_half_is_log_two(self):
        assert binary_entropy(0.5) == pytest.approx(math.log(2), abs=1e-15)
        assert binary_entropy(0.5, "two") == pytest.approx(1.0, abs=1e-15)

    def test_frozen_value_at_one_tenth(self):
        # 0.3250830 from a 40-digit evaluation
        assert binary_entropy(0.1) == pytest.approx(0.3250830, abs=5e-8)
        assert binary_entropy(0.1) == pytest.approx(float(mp_hb("0.1")), abs=1e-15)

    @given(unit)
    def test_matches_high_precision(self, x):
        assert binary_entropy(x) == pytest.approx(float(mp_hb(x)), abs=1e-14)

    @given(unit, bases)
    def test_symmetric(self, x, base):
        assert binary_entropy(x, base) == pytest.approx(binary_entropy(1.0 - x, base), abs=1e-14)

    def test_vectorized(self):
        xs = np.linspace(0, 1, 11)
        out = binary_entropy(xs)
        assert out.shape == xs.shape
        assert np.allclose(out, [binary_entropy(float(x)) for x in xs])

    @pytest.mark.parametrize("bad", [-1e-9, 1.0 + 1e-9, float("nan"), float("inf")])
    def test_rejects_outside_unit_interval(self, bad):
        with pytest.raises(DomainError):
            binary_entropy(bad)

    def test_rejects_unknown_base(self):
        with pytest.raises(DomainError):
            binary_entropy(0.3, "ten")


class TestHD:
    def test_frozen_values(self):
        assert h_d(0.1, 0.0) == pytest.approx(0.0719475, abs=5e-8)
        assert h_d(0.1, 0.0) == pytest.approx(float(mp_hd("0.1", 0)), abs=1e-15)
        assert h_d(1.0, 0.0) == pytest.approx(2 * math.log(2), abs=1e-15)
        assert h_d(1.0, 0.0, "two") == pytest.approx(2.0, abs=1e-15)

    @given(unit, unit)
    def test_matches_high_precision(self, a, b):
        assert h_d(a, b) == pytest.approx(float(mp_hd(a, b)), abs=1e-13)

    @given(unit, bases)
    def test_zero_on_diagonal(self, c, base):
        assert h_d(c, c, base) == 0.0

    @given(unit, unit, bases)
    def test_symmetric_and_bounded(self, a, b, base):
        v = h_d(a, b, base)
        assert v == pytest.approx(h_d(b, a, base), abs=1e-15)
        top = 2.0 if base is LogBase.TWO else 2 * math.log(2)
        assert 0.0 <= v <= top + 1e-12

    @given(unit, unit, bases)
    def test_dominates_squared_gap(self, a, b, base):
        assert h_d(a, b, base) >= (a - b) ** 2 - 1e-12

    @given(unit)
    def test_dominates_identity_from_zero_in_base_two(self, x):
        assert h_d(x, 0.0, "two") >= x - 1e-12

    def test_identity_bound_fails_in_natural_base(self):
        # the linear lower bound from zero is a base-two statement
        assert h_d(0.1, 0.0, "natural") < 0.1

    @given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), bases)
    def test_increasing_right_of_second_argument(self, c, s, t, base):
        lo, hi = sorted((c + (1 - c) * s, c + (1 - c) * t))
        assert h_d(hi, c, base) >= h_d(lo, c, base) - 1e-12

    @given(unit, unit, unit, unit, bases)
    def test_midpoint_convex(self, a1, b1, a2, b2, base):
        mid = h_d((a1 + a2) / 2, (b1 + b2) / 2, base)
        assert mid <= (h_d(a1, b1, base) + h_d(a2, b2, base)) / 2 + 1e-12

    @given(st.floats(0, 0.5), st.floats(0, 0.5), st.floats(0, 1), st.floats(0, 1), bases)
    def test_shift_toward_half_does_not_increase(self, a, b, s, t, base):
        span = 0.5 - max(a, b)
        x1, x2 = sorted((span * s, span * t))
        assert h_d(a + x2, b + x2, base) <= h_d(a + x1, b + x1, base) + 1e-12

    def test_broadcasts(self):
        out = h_d(np.array([0.1, 0.2]), 0.0)
        assert out.shape == (2,)

    def test_rejects_outside_domain(self):
        with pytest.raises(DomainError):
            h_d(1.5, 0.0)


class TestHDInverse:
    def test_zero_budget_returns_anchor(self):
        assert h_d_inv(0.0, 0.3) == pytest.approx(0.3, abs=1e-12)

    def test_saturates(self):
        assert h_d_inv(10.0, 0.3) == 1.0

    def test_round_trip_example(self):
        assert h_d_inv(h_d(0.7, 0.3), 0.3) == pytest.approx(0.7, abs=1e-9)

    @given(unit, unit, bases)
    def test_round_trip(self, c, s, base):
        x = c + (1 - c) * s
        assert h_d_inv(h_d(x, c, base), c, base) == pytest.approx(x, abs=1e-9)

    @given(st.floats(0, 2), unit, bases)
    def test_feasible_and_within_sqrt_budget(self, y, c, base):
        x = h_d_inv(y, c, base)
        assert c - 1e-12 <= x <= 1.0
        assert h_d(x, c, base) <= y + 1e-9
        assert x <= c + math.sqrt(y) + 1e-9

    @given(st.floats(0, 2))
    def test_below_budget_from_zero_in_base_two(self, y):
        assert h_d_inv(y, 0.0, "two") <= y + 1e-9

    @given(st.floats(0, 1.5), st.floats(0, 1.5), unit)
    def test_monotone_in_budget(self, y1, y2, c):
        lo, hi = sorted((y1, y2))
        assert h_d_inv(lo, c) <= h_d_inv(hi, c) + 1e-12

    def test_matches_dense_grid_scan(self):
        grid = np.linspace(0.5, 1.0, 200_001)
        y = 0.05
        scan = grid[h_d(grid, 0.5) <= y].max()
        assert h_d_inv(y, 0.5) == pytest.approx(scan, abs=5e-6)

    def test_vectorized_matches_scalar(self, rng):
        ys, cs = 2 * rng.random(300), rng.random(300)
        expected = [h_d_inv(y, c) for y, c in zip(ys, cs)]
        assert np.allclose(h_d_inv(ys, cs), expected, atol=2e-12, rtol=0)
        assert h_d_inv(np.array([10.0]), 0.3)[0] == 1.0

    def test_scalar_and_array_paths_agree(self, rng):
        a, b = rng.random(500), rng.random(500)
        assert np.allclose(h_d(a, b), [h_d(x, y) for x, y in zip(a, b)], atol=1e-15, rtol=1e-13)

    @pytest.mark.parametrize("y,c", [(-0.1, 0.5), (0.1, -0.1), (0.1, 1.1), (float("nan"), 0.5)])
    def test_rejects_bad_arguments(self, y, c):
        with pytest.raises(DomainError):
            h_d_inv(y, c)


def exponential_moment(n, ones):
    """Exact subset average of exp(n h_D) for a 0/1 loss vector with ``ones`` ones."""
    total = 0.0
    for j in range(max(0, ones - n), min(ones, n) + 1):
        w = math.comb(ones, j) * math.comb(2 * n - ones, n - j) / math.comb(2 * n, n)
        total += w * math.exp(n * h_d(j / n, (ones - j) / n))
    return total


class TestExponentialMoment:
    def test_balanced_vector_matches_enumeration(self):
        import itertools
        n = 4
        loss = np.array([1.0] * n + [0.0] * n)
        vals = []
        for T in itertools.combinations(range(2 * n), n):
            mask = np.zeros(2 * n, dtype=bool)
            mask[list(T)] = True
            vals.append(math.exp(n * h_d(loss[mask].mean(), loss[~mask].mean())))
        assert np.mean(vals) == pytest.approx(exponential_moment(n, n), rel=1e-12)

    @pytest.mark.parametrize("n", [3, 6, 10, 20])
    def test_exceeds_n_for_small_samples(self, n):
        assert exponential_moment(n, n) > n

    @pytest.mark.parametrize("n", range(3, 7))
    def test_extreme_subsets_alone_exceed_n(self, n):
        # the all-or-nothing subsets contribute 2 * 4^n / C(2n, n) ~ 2 sqrt(pi n)
        assert 2 * 4 ** n / math.comb(2 * n, n) > n

    @pytest.mark.parametrize("n", [50, 100])
    def test_below_n_for_large_samples(self, n):
        assert max(exponential_moment(n, m) for m in range(2 * n + 1)) <= n
