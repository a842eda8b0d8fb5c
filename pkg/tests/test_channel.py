import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uavsemcom.channel import (ChannelParams, Position3D, all_rates, distance,
                               large_scale_gain, rate, realize_channel,
                               sample_small_scale, sic_sinr)

B = 5e6


def hand_sinr(rx):
    """Pairwise expansion: user i is interfered by every j decoded after it."""
    out = []
    for i, ri in enumerate(rx):
        interf = 0.0
        for j, rj in enumerate(rx):
            after = rj < ri or (rj == ri and j > i)
            if j != i and after:
                interf += rj
        out.append(ri / (1.0 + interf))
    return out


class TestDistance:
    @pytest.mark.parametrize("user, uav, expected", [
        ((0, 0, 0), (0, 0, 50), 50.0),
        ((30, 40, 0), (0, 0, 50), math.sqrt(900 + 1600 + 2500)),
        ((100, 0, 0), (100, 0, 100), 100.0),
    ])
    def test_examples(self, user, uav, expected):
        assert distance(Position3D(*user), Position3D(*uav)) == pytest.approx(expected, abs=1e-4)

    def test_not_below_altitude(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            u = (*rng.uniform(0, 200, 2), 0.0)
            v = (*rng.uniform(0, 200, 2), 100.0)
            assert distance(u, v) >= 100.0

    def test_rejects_grounded_uav(self):
        with pytest.raises(ValueError):
            distance((0, 0, 0), (1, 1, 0))


class TestLargeScaleGain:
    p = ChannelParams(beta0=1e-3, alpha=2.0)

    def test_reference_distance(self):
        assert large_scale_gain(1.0, self.p) == pytest.approx(1e-3)

    def test_hundred_metres(self):
        assert large_scale_gain(100.0, self.p) == pytest.approx(1e-7, rel=1e-12)

    def test_diagonal(self):
        assert large_scale_gain(70.7107, self.p) == pytest.approx(2.0e-7, rel=1e-5)

    def test_rejects_below_reference(self):
        with pytest.raises(ValueError):
            large_scale_gain(0.5, self.p)


class TestSmallScale:
    def test_los_limit(self):
        rng = np.random.default_rng(1)
        g = sample_small_scale(rng, 1e12, 1000)
        np.testing.assert_allclose(np.abs(g), 1.0, atol=1e-5)

    @pytest.mark.parametrize("k", [0.0, 0.5, 1.0, 10.0, 100.0])
    def test_unit_mean_power(self, k):
        rng = np.random.default_rng(2)
        g = sample_small_scale(rng, k, 100_000)
        assert np.mean(np.abs(g) ** 2) == pytest.approx(1.0, abs=0.02)

    def test_scalar_draw(self):
        assert isinstance(sample_small_scale(np.random.default_rng(0), 3.0), complex)

    def test_scattered_iq_variance(self):
        g = sample_small_scale(np.random.default_rng(3), 0.0, 100_000)
        assert np.var(g.real) == pytest.approx(0.5, abs=0.01)
        assert np.var(g.imag) == pytest.approx(0.5, abs=0.01)


class TestRealizeChannel:
    def test_los_limit_gain_and_cnr(self):
        p = ChannelParams(num_users=1, num_channels=1, rician_k=1e12, noise_power_w=5e-8)
        r = realize_channel([(0, 0, 0)], (0, 0, 100), p, np.random.default_rng(0))
        assert abs(r.gains[0, 0]) ** 2 == pytest.approx(1e-7, abs=1e-12)
        assert r.cnrs[0, 0] == pytest.approx(2.0, abs=1e-5)

    def test_shape_and_sign(self):
        p = ChannelParams(num_users=3, num_channels=2)
        r = realize_channel([(0, 0), (50, 50), (200, 10)], (100, 100, 100), p,
                            np.random.default_rng(0))
        assert r.gains.shape == (3, 2) and r.cnrs.shape == (3, 2)
        assert np.all(r.cnrs >= 0)
        np.testing.assert_allclose(r.cnrs, np.abs(r.gains) ** 2 / p.noise_power_w)

    def test_determinism(self):
        p = ChannelParams()
        users = np.random.default_rng(5).uniform(0, 200, (5, 2))
        a = realize_channel(users, (100, 100, 100), p, np.random.default_rng(9))
        b = realize_channel(users, (100, 100, 100), p, np.random.default_rng(9))
        assert np.array_equal(a.gains, b.gains)

    def test_psd_noise_flag(self):
        p = ChannelParams(num_users=1, num_channels=1, rician_k=1e12,
                          noise_power_w=1e-20, noise_is_psd=True)
        r = realize_channel([(0, 0, 0)], (0, 0, 100), p, np.random.default_rng(0))
        assert r.cnrs[0, 0] == pytest.approx(1e-7 / (1e-20 * 5e6), rel=1e-5)

    def test_wrong_user_count(self):
        with pytest.raises(ValueError):
            realize_channel([(0, 0)], (0, 0, 100), ChannelParams(num_users=2),
                            np.random.default_rng(0))

    @pytest.mark.parametrize("field, value", [("beta0", 0.0), ("alpha", 1.0), ("alpha", 7.0),
                                              ("rician_k", -1.0), ("bandwidth_hz", -5.0),
                                              ("noise_power_w", 0.0), ("num_users", 0),
                                              ("num_channels", 0)])
    def test_param_validation(self, field, value):
        with pytest.raises(ValueError, match=field):
            ChannelParams(**{field: value})


class TestSicSinr:
    def test_single_member(self):
        s = sic_sinr([10.0], [1.0], [0])
        assert s[0] == 10.0

    def test_two_members(self):
        s = sic_sinr([4.0, 1.0], [1.0, 1.0], [0, 1])
        np.testing.assert_allclose(s, [2.0, 1.0])

    def test_three_members(self):
        s = sic_sinr([9.0, 3.0, 1.0], [1.0, 1.0, 1.0], [0, 1, 2])
        np.testing.assert_allclose(s, [9 / 5, 3 / 2, 1.0])

    def test_ranks_by_received_power(self):
        # user 0 has the larger transmit power but the weaker received power
        s = sic_sinr([2.0, 1.0], [1.0, 8.0], [0, 1])
        np.testing.assert_allclose(s, [2.0, 8.0 / 3.0])

    def test_ties_break_by_index(self):
        s = sic_sinr([1.0, 1.0], [2.0, 2.0], [0, 1])
        np.testing.assert_allclose(s, [2.0 / 3.0, 2.0])

    def test_non_members_zero(self):
        s = sic_sinr([1.0, 5.0, 2.0], [1.0, 1.0, 1.0], [0, 2])
        assert s[1] == 0.0

    def test_strongest_and_weakest_denominators(self):
        rx = np.array([7.0, 2.0, 5.0, 1.0])
        s = sic_sinr(rx, np.ones(4), range(4))
        assert rx[0] / s[0] - 1.0 == pytest.approx(rx[1:].sum())
        assert rx[3] / s[3] == pytest.approx(1.0)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.fractions(min_value=0, max_value=50, max_denominator=20),
                    min_size=1, max_size=3))
    def test_matches_hand_expansion(self, values):
        rx = [float(v) for v in values]
        got = sic_sinr(rx, np.ones(len(rx)), range(len(rx)))
        want = hand_sinr(rx)
        for g, w in zip(got, want):
            assert g == pytest.approx(w, rel=1e-12, abs=0)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(0.01, 50), min_size=2, max_size=4), st.floats(1.0, 1.5))
    def test_own_power_monotone(self, rx, factor):
        rx = np.array(rx)
        i = int(np.argmin(rx))
        order = np.argsort(-rx, kind="stable")
        bumped = rx.copy()
        bumped[i] *= factor
        if not np.array_equal(np.argsort(-bumped, kind="stable"), order):
            return
        assert sic_sinr(bumped, np.ones(len(rx)), range(len(rx)))[i] >= \
            sic_sinr(rx, np.ones(len(rx)), range(len(rx)))[i]


class TestRate:
    def test_zero(self):
        assert rate(0.0, B) == 0.0

    def test_unit(self):
        assert rate(1.0, B) == pytest.approx(5e6)

    def test_ten(self):
        assert rate(10.0, B) == pytest.approx(1.7297e7, rel=1e-4)

    @given(st.floats(0, 1e4), st.floats(0, 1e4))
    def test_monotone(self, a, b):
        lo, hi = sorted((a, b))
        assert rate(hi, B) >= rate(lo, B)


class TestAllRates:
    def _real(self, cnrs):
        from uavsemcom.channel import ChannelRealization
        cnrs = np.asarray(cnrs, dtype=float)
        return ChannelRealization(np.sqrt(cnrs).astype(complex), cnrs)

    def test_unassigned(self):
        r = self._real(np.ones((3, 2)))
        assert np.all(all_rates(r, [0, 0, 0], [1, 1, 1], B) == 0)

    def test_one_user_per_channel(self):
        cnrs = np.array([[2.0, 3.0], [4.0, 5.0]])
        r = self._real(cnrs)
        got = all_rates(r, [2, 1], [1.5, 2.0], B)
        np.testing.assert_allclose(got, [B * np.log2(1 + 1.5 * 3.0), B * np.log2(1 + 2.0 * 4.0)])

    def test_shared_channel(self):
        r = self._real(np.array([[9.0], [3.0], [1.0]]))
        got = all_rates(r, [1, 1, 1], [1, 1, 1], B)
        np.testing.assert_allclose(got, [B * np.log2(2.8), B * np.log2(2.5), B * np.log2(2.0)])

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            all_rates(self._real(np.ones((2, 1))), [1], [1, 1], B)

    def test_exhaustive_against_per_channel_oracle(self):
        rng = np.random.default_rng(4)
        cnrs = rng.uniform(0.1, 10, (3, 2))
        powers = rng.uniform(0, 5, 3)
        r = self._real(cnrs)
        for assignment in itertools.product(range(3), repeat=3):
            got = all_rates(r, assignment, powers, B)
            for m in (1, 2):
                members = [n for n in range(3) if assignment[n] == m]
                want = hand_sinr([powers[n] * cnrs[n, m - 1] for n in members])
                for n, w in zip(members, want):
                    assert got[n] == pytest.approx(B * np.log2(1 + w), rel=1e-12)
            assert all(got[n] == 0 for n in range(3) if assignment[n] == 0)
