import itertools
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uavsemcom.channel import ChannelParams
from uavsemcom.env import (EnvConfig, HybridAction, MissionEnv, MissionState, decode_discrete,
                           encode_discrete, observe_continuous, observe_discrete, reset,
                           reward_components, step, trace_columns, trace_row, write_trace)
from uavsemcom.semantic import UtilityWeights

Q1 = 0.904765186945510


def los_single_user(**kw):
    """One user directly under the UAV's start point, deterministic LoS channel."""
    ch = ChannelParams(num_users=1, num_channels=1, rician_k=1e12)
    return EnvConfig(channel=ch, user_placement=[(100.0, 100.0)], **kw)


def hover(n, channel=1, power=5.0, eta=1.0):
    return HybridAction(np.full(n, channel), np.full(n, power), np.full(n, eta), np.zeros(2))


class TestReset:
    def test_paper_defaults(self):
        s = reset(EnvConfig(), np.random.default_rng(0))
        np.testing.assert_array_equal(s.remaining, np.full(5, 1e8))
        assert s.slot == 0
        np.testing.assert_array_equal(s.uav_xy, [100.0, 100.0])
        assert s.realization.cnrs.shape == (5, 3)

    def test_fixed_placement(self):
        pos = [(10.0, 20.0), (150.0, 30.0)]
        cfg = EnvConfig(channel=ChannelParams(num_users=2), user_placement=pos)
        s = reset(cfg, np.random.default_rng(0))
        np.testing.assert_array_equal(s.user_xy, pos)

    def test_uniform_placement_in_area(self):
        s = reset(EnvConfig(), np.random.default_rng(1))
        assert np.all((s.user_xy >= 0) & (s.user_xy <= 200))

    def test_same_seed_same_state(self):
        a = reset(EnvConfig(), np.random.default_rng(3))
        b = reset(EnvConfig(), np.random.default_rng(3))
        assert np.array_equal(a.user_xy, b.user_xy)
        assert np.array_equal(a.realization.gains, b.realization.gains)

    @pytest.mark.parametrize("field, value", [("area_size", 0.0), ("data_size", -1.0),
                                              ("fail_penalty", 5.0), ("max_time", 0.0)])
    def test_validation(self, field, value):
        with pytest.raises(ValueError, match=field):
            EnvConfig(**{field: value})

    def test_placement_length(self):
        with pytest.raises(ValueError, match="user_placement"):
            EnvConfig(user_placement=[(0.0, 0.0)])


class TestStep:
    def test_remaining_update(self):
        cfg = los_single_user()
        rng = np.random.default_rng(0)
        s = reset(cfg, rng)
        out = step(s, hover(1), cfg, rng)
        expected_rate = 5e6 * math.log2(11)
        assert out.diagnostics["rates"][0] == pytest.approx(expected_rate, rel=1e-6)
        assert out.next_state.remaining[0] == pytest.approx(1e8 - expected_rate, rel=1e-6)
        assert out.next_state.remaining[0] == pytest.approx(8.2703e7, rel=1e-5)
        assert out.next_state.slot == 1 and not out.done

    def test_finished_state_absorbs(self):
        cfg = los_single_user()
        rng = np.random.default_rng(0)
        s = reset(cfg, rng)
        s.remaining[:] = 0
        out = step(s, hover(1), cfg, rng)
        assert out.done and not out.failed
        assert out.next_state.slot == s.slot
        assert np.all(out.diagnostics["rates"] == 0)

    def test_out_of_bounds_clamped_and_penalised(self):
        cfg = los_single_user()
        rng = np.random.default_rng(0)
        s = reset(cfg, rng)
        s.uav_xy = np.array([5.0, 100.0])
        a = hover(1)
        a.delta_xy = np.array([-10.0, 0.0])
        out = step(s, a, cfg, rng)
        assert out.next_state.uav_xy[0] == 0.0
        assert out.reward_continuous == pytest.approx(out.reward_discrete + cfg.bounds_penalty)

    def test_in_bounds_rewards_equal(self):
        cfg = EnvConfig()
        rng = np.random.default_rng(2)
        out = step(reset(cfg, rng), hover(5), cfg, rng)
        assert out.reward_continuous == out.reward_discrete

    def test_failure_at_time_limit(self):
        cfg = los_single_user(max_time=3.0)
        rng = np.random.default_rng(0)
        s = reset(cfg, rng)
        silent = hover(1, channel=0)
        steps = 0
        while True:
            out = step(s, silent, cfg, rng)
            steps += 1
            s = out.next_state
            if out.done:
                break
        assert out.failed and steps == cfg.max_slots + 1
        assert out.reward_discrete == pytest.approx(cfg.time_penalty + 0.5 * Q1 - 0.5 + cfg.fail_penalty)

    def test_completion(self):
        cfg = los_single_user(data_size=1e7)
        rng = np.random.default_rng(0)
        out = step(reset(cfg, rng), hover(1), cfg, rng)
        assert out.done and not out.failed
        assert out.next_state.remaining[0] == 0

    def test_finished_users_stop_interfering(self):
        ch = ChannelParams(num_users=2, num_channels=1, rician_k=1e12)
        cfg = EnvConfig(channel=ch, user_placement=[(100.0, 100.0), (100.0, 100.0)])
        rng = np.random.default_rng(0)
        s = reset(cfg, rng)
        s.remaining[0] = 0.0
        out = step(s, hover(2), cfg, rng)
        # user 1 alone: no interference
        assert out.diagnostics["rates"][1] == pytest.approx(5e6 * math.log2(11), rel=1e-6)
        assert out.diagnostics["rates"][0] == 0

    def test_dimension_mismatch(self):
        cfg = EnvConfig()
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError):
            step(reset(cfg, rng), hover(4), cfg, rng)


class TestRewards:
    def test_no_active(self):
        cfg = EnvConfig()
        assert reward_components(np.zeros(5), np.ones(5), np.zeros(5, bool), 1, False, False,
                                 cfg) == (-1.0, -1.0)

    def test_quality_mode_one_user(self):
        cfg = replace(los_single_user(), weights=UtilityWeights(lam=1.0))
        r_d, r_c = reward_components([1.0], [1.0], [True], 1, False, False, cfg)
        assert r_d == pytest.approx(-1 + 0.90477, abs=1e-5)
        assert r_c == r_d

    def test_failed_in_bounds(self):
        cfg = los_single_user()
        ok = reward_components([1.0], [0.5], [True], 1, False, False, cfg)
        bad = reward_components([1.0], [0.5], [True], 1, True, False, cfg)
        assert bad[0] == pytest.approx(ok[0] + cfg.fail_penalty)
        assert bad[1] == bad[0]

    def test_utility_on_completion(self):
        cfg = replace(los_single_user(), utility_on_completion=True,
                      weights=UtilityWeights(lam=1.0))
        assert reward_components([1.0], [1.0], [True], 1, False, False, cfg,
                                 finished=[False]) == (-1.0, -1.0)
        r_d, _ = reward_components([1.0], [1.0], [True], 1, False, False, cfg, finished=[True])
        assert r_d == pytest.approx(-1 + Q1)


class TestEncoding:
    def test_zero(self):
        assert encode_discrete([0, 0], 3) == 0
        np.testing.assert_array_equal(decode_discrete(0, 2, 3), [0, 0])

    def test_base_m_plus_one(self):
        assert encode_discrete([2, 3], 3) == 14
        np.testing.assert_array_equal(decode_discrete(14, 2, 3), [2, 3])

    def test_round_trip_exhaustive(self):
        seen = set()
        for a in itertools.product(range(4), repeat=2):
            idx = encode_discrete(a, 3)
            seen.add(idx)
            assert tuple(decode_discrete(idx, 2, 3)) == a
        assert seen == set(range(16))

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            decode_discrete(16, 2, 3)
        with pytest.raises(ValueError):
            encode_discrete([4, 0], 3)

    @given(st.integers(1, 5), st.integers(1, 4), st.data())
    def test_decode_encode(self, n, m, data):
        idx = data.draw(st.integers(0, (m + 1) ** n - 1))
        assert encode_discrete(decode_discrete(idx, n, m), m) == idx


class TestObservation:
    def test_fresh_reset(self):
        cfg = EnvConfig()
        s = reset(cfg, np.random.default_rng(0))
        obs = observe_discrete(s, cfg)
        assert obs.shape == (20,)
        np.testing.assert_array_equal(obs[:5], 1.0)
        np.testing.assert_allclose(obs[5:], np.log10(1 + s.realization.cnrs).ravel() / 10)

    def test_finished_user(self):
        cfg = EnvConfig()
        s = reset(cfg, np.random.default_rng(0))
        s.remaining[2] = 0
        assert observe_discrete(s, cfg)[2] == 0.0

    def test_continuous(self):
        cfg = EnvConfig()
        s = reset(cfg, np.random.default_rng(0))
        obs = observe_continuous(s, cfg)
        assert obs.shape == (22,)
        np.testing.assert_array_equal(obs[-2:], [0.5, 0.5])
        assert np.all(np.isfinite(obs))


def random_action(rng, cfg):
    n = cfg.num_users
    return HybridAction(rng.integers(0, cfg.num_channels + 1, n),
                        rng.uniform(0, cfg.max_power, n),
                        rng.uniform(cfg.eta_min, 1, n),
                        rng.uniform(-cfg.max_step, cfg.max_step, 2))


class TestEpisodeInvariants:
    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2 ** 31))
    def test_invariants(self, seed):
        cfg = EnvConfig(data_size=2e7, max_time=15.0)
        rng = np.random.default_rng(seed)
        act_rng = np.random.default_rng(seed + 1)
        s = reset(cfg, rng)
        delivered = np.zeros(cfg.num_users)
        steps = 0
        while True:
            out = step(s, random_action(act_rng, cfg), cfg, rng)
            steps += 1
            nxt = out.next_state
            assert np.all(nxt.remaining <= s.remaining)
            delivered += out.diagnostics["delivered"]
            np.testing.assert_allclose(delivered + nxt.remaining, cfg.data_size, rtol=1e-9)
            assert np.linalg.norm(nxt.uav_xy - s.uav_xy) <= math.sqrt(2) * cfg.max_step + 1e-9
            if not out.diagnostics["out_of_bounds"]:
                assert out.reward_continuous == out.reward_discrete
            assert out.reward_continuous <= out.reward_discrete
            if out.failed:
                assert out.done
            s = nxt
            if out.done:
                break
        assert steps <= cfg.max_slots + 1
        assert (out.done and not out.failed) == (s.remaining.sum() == 0)

    def test_trajectory_determinism(self):
        cfg = EnvConfig(data_size=2e7)

        def run():
            env = MissionEnv(cfg, np.random.default_rng(11))
            act_rng = np.random.default_rng(12)
            env.reset()
            xs = []
            for _ in range(5):
                out = env.step(random_action(act_rng, cfg))
                xs.append((out.next_state.uav_xy.copy(), out.next_state.remaining.copy()))
            return xs

        for (a1, b1), (a2, b2) in zip(run(), run()):
            assert np.array_equal(a1, a2) and np.array_equal(b1, b2)


def test_trace_csv(tmp_path):
    cfg = EnvConfig(channel=ChannelParams(num_users=2))
    env = MissionEnv(cfg, np.random.default_rng(0))
    env.reset()
    rows = [trace_row(env.step(hover(2))) for _ in range(3)]
    path = tmp_path / "trace.csv"
    write_trace(path, rows, 2)
    lines = path.read_text().splitlines()
    assert lines[0].split(",") == trace_columns(2)
    assert lines[0] == "slot,uav_x,uav_y,remaining_0,remaining_1,rate_0,rate_1,reward_d,reward_c"
    assert len(lines) == 4


def test_action_validation():
    cfg = EnvConfig()
    hover(5).validate(cfg)
    bad = hover(5, power=6.0)
    with pytest.raises(ValueError):
        bad.validate(cfg)
