import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sepsim.errors import ScoringError
from sepsim.features import D, IDX
from sepsim.reward import (RewardConfig, TraceSummary, discounted_return,
                           step_reward, trajectory_reward)


def state(sofa, lactate):
    v = np.full(D, 1.0)
    v[IDX["sofa"]] = sofa
    v[IDX["lactate"]] = lactate
    return v


class TestStepReward:
    def test_stagnation(self):
        assert step_reward(state(5, 2.0), state(5, 2.0)) == pytest.approx(-0.025, abs=1e-12)

    def test_no_stagnation_at_zero_sofa(self):
        assert step_reward(state(0, 2.0), state(0, 2.0)) == pytest.approx(0.0, abs=1e-12)

    def test_worsening(self):
        expected = -0.125 * 2 - 2.0 * math.tanh(1.0)
        assert expected == pytest.approx(-1.77318, abs=1e-5)
        assert step_reward(state(4, 2.0), state(6, 3.0)) == pytest.approx(expected, abs=1e-12)

    def test_improvement_positive(self):
        assert step_reward(state(8, 4.0), state(6, 2.0)) > 0

    def test_missing_raises(self):
        bad = state(5, 2.0)
        bad[IDX["sofa"]] = np.nan
        with pytest.raises(ScoringError):
            step_reward(bad, state(5, 2.0))

    @given(st.integers(0, 24), st.integers(0, 24), st.floats(0.3, 20), st.floats(0.3, 20))
    def test_bounded(self, s0, s1, l0, l1):
        r = step_reward(state(s0, l0), state(s1, l1))
        assert abs(r) <= 0.025 + 0.125 * 24 + 2.0 + 1e-9

    def test_tanh_saturates(self):
        r10 = step_reward(state(5, 1.0), state(5, 11.0))
        r100 = step_reward(state(5, 1.0), state(5, 101.0))
        assert abs(r10 - r100) <= 2 * (1 - math.tanh(10)) + 1e-12

    @given(st.integers(0, 24), st.integers(0, 24))
    def test_indicator_exclusive(self, s0, s1):
        if s0 == s1:
            return
        r = step_reward(state(s0, 2.0), state(s1, 2.0))
        assert r == pytest.approx(-0.125 * (s1 - s0), abs=1e-12)


class TestTrajectoryReward:
    def test_clean_survival(self):
        raw, shaped = trajectory_reward(TraceSummary(step_rewards=[0.0] * 4, terminal="survived"))
        assert raw == 15.0 and shaped == 1.5

    def test_clip_low(self):
        raw, shaped = trajectory_reward(TraceSummary(step_rewards=[-30.0], terminal="truncated",
                                                     overrun=False))
        assert raw == -30.0 and shaped == -2.0

    def test_death_with_violations(self):
        raw, shaped = trajectory_reward(TraceSummary(step_rewards=[], terminal="died",
                                                     violation_steps=2))
        assert raw == -35.0 and shaped == -2.0

    def test_overrun_penalty(self):
        raw, _ = trajectory_reward(TraceSummary(step_rewards=[], terminal="truncated",
                                                overrun=True))
        assert raw == -5.0

    @given(st.lists(st.floats(-5, 5), max_size=20),
           st.sampled_from(["survived", "died", "truncated"]),
           st.integers(0, 5), st.booleans())
    def test_shaped_in_range_and_monotone(self, rewards, terminal, viols, overrun):
        raw, shaped = trajectory_reward(TraceSummary(rewards, terminal, viols, overrun))
        assert -2.0 <= shaped <= 2.0
        raw2, shaped2 = trajectory_reward(TraceSummary(rewards + [1.0], terminal, viols, overrun))
        if raw2 >= raw:
            assert shaped2 >= shaped


class TestDiscountedReturn:
    def test_undiscounted(self):
        assert discounted_return([1, 1, 1], terminal=0.0, gamma=1.0) == 3.0

    def test_geometric(self):
        assert discounted_return([1, 1, 1], terminal=0.0, gamma=0.5) == 1.75

    def test_terminal_at_final_index(self):
        assert discounted_return([0, 0, 0], terminal=15.0, gamma=0.99) == pytest.approx(14.7015)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            RewardConfig(scale=-1.0)
        with pytest.raises(ValueError):
            discounted_return([1.0], 0.0, gamma=0.0)
