"""Test stepping, rewards and traces."""

from dataclasses import replace

import numpy as np
import pytest

from cyrange.engine import (
    TRACE_FIELDS,
    ActionIndexError,
    Engine,
    EpisodeDoneError,
    TraceRecorder,
    compute_reward,
    goal_satisfied,
)
from cyrange.observation import ObservationError, default_layout
from cyrange.scenario import Privilege, ScenarioValidationError

# action indices of the shortest domain controller plan: abilities 3, 4, 7, 13, 5, 12
GAME2_PLAN = [2, 3, 6, 12, 4, 11]


def _random_episode(engine, seed, policy_seed):
    rng = np.random.default_rng(policy_seed)
    engine.reset(seed)
    results = []
    while not engine.done:
        results.append(engine.step(int(rng.integers(engine.action_count))))
    return results


def test_compute_reward(game2):
    """Test the reward of one step."""
    game = game2.game

    assert compute_reward(0, False, game) == -1
    assert compute_reward(3, False, game) == -3
    assert compute_reward(3, True, game) == 99
    with pytest.raises(ValueError):
        compute_reward(-1, False, game)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_reward_contract(game2, registry, seed):
    """Test every reward of random episodes against the executing hands."""
    engine = Engine(game2, registry=registry)

    for result in _random_episode(engine, seed, seed + 100):
        hands = len(result.info["executing_hands"])
        if result.info["goal_reached"]:
            assert result.reward == 99
            assert result.done
        elif hands:
            assert result.reward == -hands
        else:
            assert result.reward == -1
        assert len(result.info["successes"]) == hands


def test_episode_ends_at_max_steps(line, registry):
    """Test that a goal-less episode is cut at the step budget."""
    engine = Engine(replace(line, game=replace(line.game, max_steps=3)), registry=registry)
    engine.reset(0)

    results = [engine.step(0) for _ in range(3)]

    assert [r.done for r in results] == [False, False, True]
    assert not results[-1].info["goal_reached"]
    with pytest.raises(EpisodeDoneError):
        engine.step(0)


def test_reset_is_deterministic(game2, registry):
    """Test that a seed and an action sequence fix the whole episode."""
    first = _random_episode(Engine(game2, registry=registry), 42, 7)
    second = _random_episode(Engine(game2, registry=registry), 42, 7)

    assert first == second


def test_reset_restores_initial_state(game1, registry):
    """Test that reset drops everything learned in the previous episode."""
    engine = Engine(game1, registry=registry)
    initial = engine.reset(3)
    engine.step(4)

    np.testing.assert_array_equal(engine.reset(3), initial)
    assert engine.world.step_count == 0
    assert [h.host_id for h in engine.world.live_hands] == [1]


def test_step_errors(game1, registry):
    """Test stepping before reset and with bad indices."""
    engine = Engine(game1, registry=registry)

    with pytest.raises(EpisodeDoneError):
        engine.step(0)
    engine.reset(0)
    with pytest.raises(ActionIndexError):
        engine.step(engine.action_count)
    with pytest.raises(ActionIndexError):
        engine.step(-1)


def test_noop_step(game2, registry):
    """Test a step no hand can execute."""
    engine = Engine(game2, registry=registry)
    initial = engine.reset(0)

    result = engine.step(11)

    assert result.reward == -1
    assert result.info["executing_hands"] == []
    assert result.info["sim_latency_s"] == 0.0
    np.testing.assert_array_equal(result.observation, initial)


def test_game2_deterministic_plan(det_game2, registry):
    """Test rewards and hands along the shortest domain controller plan."""
    engine = Engine(det_game2, registry=registry)
    engine.reset(0)

    results = [engine.step(index) for index in GAME2_PLAN]

    assert [r.reward for r in results] == [-1, -1, -1, -1, -1, 99]
    assert [r.info["executing_hands"] for r in results] == [[0], [0], [0], [0], [1], [0, 1]]
    assert results[-1].done
    assert len(results[-1].info["notes"]) == 1
    assert engine.world.hand_on(9).privilege is Privilege.DOMAIN_ADMIN
    assert goal_satisfied(engine.world, engine.facts, det_game2.game.goal)


@pytest.mark.parametrize("first_phase", [(3, 4, 7, 13), (3, 7, 4, 13), (7, 3, 4, 13)])
def test_game2_discovery_orders(first_phase, det_game2, registry):
    """Test that each valid discovery order followed by 5 and 12 wins."""
    engine = Engine(det_game2, registry=registry)
    index = {ability.ability_id: i for i, ability in enumerate(engine.catalog)}
    engine.reset(0)

    results = [engine.step(index[ability_id]) for ability_id in first_phase + (5, 12)]

    assert [r.reward for r in results] == [-1, -1, -1, -1, -1, 99]
    assert results[-1].done


def test_game1_deterministic_plan(det_game1, registry):
    """Test the shortest exfiltration plan."""
    engine = Engine(det_game1, registry=registry)
    engine.reset(0)

    rewards = [engine.step(index).reward for index in (4, 5, 6, 7)]

    assert rewards == [-1, -1, -1, 99]
    assert engine.done


def test_line_plan_counts_every_hand(line, registry):
    """Test that a step costs one unit per executing hand."""
    engine = Engine(line, registry=registry)
    engine.reset(0)

    results = [engine.step(index) for index in (0, 1, 0, 1)]

    assert [r.reward for r in results] == [-1, -1, -2, 99]
    assert engine.world.hand_on(3).hand_id == 2


def test_info_extras(line, registry):
    """Test the optional delta and action mask."""
    engine = Engine(line, registry=registry, emit_delta=True, emit_action_mask=True)
    engine.reset(0)

    result = engine.step(0)

    assert result.info["action_mask"] == [True, True]
    rows = [row for row, _ in result.info["delta"]]
    assert rows == [1, 2]


def test_engine_validates(game1, registry):
    """Test that an invalid scenario is rejected at construction."""
    broken = replace(game1, game=replace(game1.game, initial_hands=((99, Privilege.USER),)))

    with pytest.raises(ScenarioValidationError) as err:
        Engine(broken, registry=registry)
    assert "game.initial_hands: unknown hosts [99]" in err.value.violations


def test_engine_checks_layout(game2, registry):
    """Test that a layout with too few rows is rejected."""
    with pytest.raises(ObservationError, match="enlarge max_host_rows"):
        Engine(game2, registry=registry, layout=default_layout(max_host_rows=4))


def test_trace_is_reproducible(game2, registry, tmp_path):
    """Test that two runs with the same seeds write identical traces."""
    for name in ("a.jsonl", "b.jsonl"):
        engine = Engine(game2, registry=registry)
        recorder = TraceRecorder()
        for episode in range(2):
            recorder.start_episode(episode)
            for result in _random_episode(engine, episode, 9):
                recorder.record(result)
        recorder.write(tmp_path / name)

    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    assert tuple(recorder.records[0]) == TRACE_FIELDS
    last = [r for r in recorder.records if r["episode"] == 1][-1]
    assert last["cumulative_reward"] == sum(
        r["reward"] for r in recorder.records if r["episode"] == 1
    )
