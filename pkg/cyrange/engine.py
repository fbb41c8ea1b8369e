"""Step orchestration, rewards and episode bookkeeping."""

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np

from cyrange.catalog import (
    AbilityRegistry,
    AbilitySpec,
    apply_effects,
    catalog_for_game,
    eligible_hands,
    sample_outcome,
)
from cyrange.logger import get_logger
from cyrange.observation import ObservationLayout, default_layout, encode_delta, encode_full
from cyrange.scenario import (
    GameConfig,
    GoalCondition,
    GoalKind,
    NetworkSpec,
    ScenarioSpec,
    ScenarioValidationError,
    validate_scenario,
)
from cyrange.state import FactDB, FactKind, Hand, WorldState, hand_fact
from cyrange.utils import write_jsonl

LOG = get_logger(__name__)

SEED_MASK = (1 << 64) - 1

TRACE_FIELDS = (
    "episode",
    "step",
    "action_id",
    "executing_hands",
    "successes",
    "reward",
    "cumulative_reward",
    "done",
    "sim_latency_s",
)


class EpisodeDoneError(RuntimeError):
    """A step was requested outside a live episode."""


class ActionIndexError(IndexError):
    """An action index is outside the game's action space."""


def compute_reward(executing_hand_count: int, goal_now_reached: bool, game: GameConfig) -> int:
    """Reward of one step.

    The goal step earns ``goal_reward`` whatever the number of hands. Otherwise
    each executing hand costs ``step_cost_per_hand``, and a step nobody could
    execute costs ``noop_cost``.
    """
    if executing_hand_count < 0:
        raise ValueError("executing_hand_count must be non-negative")
    if goal_now_reached:
        return game.goal_reward
    if executing_hand_count > 0:
        return game.step_cost_per_hand * executing_hand_count
    return game.noop_cost


def reachable(network: NetworkSpec, src: int, dst: int) -> bool:
    """Return whether ``src`` reaches ``dst``; see ``NetworkSpec.reachable``."""
    return network.reachable(src, dst)


def goal_satisfied(world: WorldState, facts: FactDB, goal: GoalCondition) -> bool:
    """Evaluate a game goal against the current state."""
    if goal.kind is GoalKind.EXFIL_TARGET_FILE:
        return facts.has(FactKind.EXFILTRATED)
    return any(
        hand.host_id == goal.host_id and hand.privilege >= goal.privilege  # type: ignore[operator]
        for hand in world.live_hands
    )


@dataclass(frozen=True, eq=False)
class StepResult:
    """Outcome of one step."""

    observation: np.ndarray
    reward: int
    done: bool
    info: Dict[str, Any] = field(default_factory=dict)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, StepResult):
            return NotImplemented
        return (
            np.array_equal(self.observation, other.observation)
            and self.reward == other.reward
            and self.done == other.done
            and self.info == other.info
        )


class Engine:
    """Ground truth, hands and the fact database of one environment.

    An engine is single-threaded. Independent engines share nothing but the
    immutable scenario and catalog.

    Parameters
    ----------
    scenario : ScenarioSpec
        The scenario. Validated at construction, never at reset.
    registry : AbilityRegistry, optional (default None)
        Ability registry; defaults to the plugin registry.
    layout : ObservationLayout, optional (default None)
        Observation layout; defaults to ``default_layout()``.
    emit_delta : bool, optional (default False)
        Add the changed rows under ``info["delta"]``.
    emit_action_mask : bool, optional (default False)
        Add a per-action eligibility mask under ``info["action_mask"]``.

    Raises
    ------
    ScenarioValidationError
        If the scenario breaks a semantic rule.
    ObservationError
        If the scenario has more hosts than the layout has rows.
    """

    def __init__(
        self,
        scenario: ScenarioSpec,
        registry: Optional[AbilityRegistry] = None,
        layout: Optional[ObservationLayout] = None,
        emit_delta: bool = False,
        emit_action_mask: bool = False,
    ):
        violations = validate_scenario(scenario, registry=registry)
        if violations:
            raise ScenarioValidationError(violations)
        self.scenario = scenario
        self.catalog: List[AbilitySpec] = catalog_for_game(scenario, registry)
        self.layout = default_layout() if layout is None else layout
        self.layout.check_scenario(scenario)
        self.emit_delta = emit_delta
        self.emit_action_mask = emit_action_mask

        self.world: Optional[WorldState] = None
        self.facts = FactDB()
        self.seed: Optional[int] = None
        self.done = True

    @property
    def action_count(self) -> int:
        return len(self.catalog)

    @property
    def observation_shape(self):
        return self.layout.shape

    def reset(self, seed: int) -> np.ndarray:
        """Start a new episode.

        Hands go back to their initial hosts and the fact database keeps only
        what each initial hand knows about itself.

        Parameters
        ----------
        seed : int
            Seed of the episode's random stream, reduced to 64 bits.

        Returns
        -------
        np.ndarray
            The initial observation.
        """
        self.seed = int(seed) & SEED_MASK
        rng = np.random.default_rng(self.seed)
        hands = tuple(
            Hand(hand_id, host_id, privilege)
            for hand_id, (host_id, privilege) in enumerate(self.scenario.game.initial_hands)
        )
        facts = FactDB()
        for hand in hands:
            facts = facts.add_host_facts(hand.host_id, [hand_fact(hand.hand_id, hand.privilege)])
        self.world = WorldState(scenario=self.scenario, hands=hands, rng=rng)
        self.facts = facts
        self.done = False
        LOG.debug(f"Reset {self.scenario.name} with seed {self.seed}")
        return self.observe()

    def observe(self) -> np.ndarray:
        """Encode the current fact database from scratch."""
        return encode_full(self.facts, self.world, self.layout)

    def action_mask(self) -> np.ndarray:
        """Whether each action has at least one eligible hand right now."""
        if self.world is None:
            return np.zeros(self.action_count, dtype=bool)
        return np.array(
            [bool(eligible_hands(ability, self.world, self.facts)) for ability in self.catalog],
            dtype=bool,
        )

    def step(self, action_index: int) -> StepResult:
        """Execute one action on every eligible hand.

        Outcomes are drawn for all executing hands in ascending hand id order
        before any effect is applied.

        Parameters
        ----------
        action_index : int
            Position in ``game.action_ids``.

        Returns
        -------
        StepResult
            The observation, reward, done flag and step info.

        Raises
        ------
        EpisodeDoneError
            If no episode is live.
        ActionIndexError
            If the index is outside the action space.
        """
        if self.world is None or self.done:
            raise EpisodeDoneError("The episode is over; call reset() first")
        if not 0 <= int(action_index) < self.action_count:
            raise ActionIndexError(
                f"Action index {action_index} outside [0, {self.action_count})"
            )
        action_index = int(action_index)
        ability = self.catalog[action_index]
        game = self.scenario.game
        previous = self.facts

        world = self.world
        facts = previous.clear_outcomes()
        hands = eligible_hands(ability, world, facts)
        successes = [sample_outcome(ability, hand_id, world, world.rng) for hand_id in hands]
        notes: List[str] = []
        for hand_id, success in zip(hands, successes):
            world, facts = apply_effects(ability, hand_id, success, world, facts, notes)

        goal_now = goal_satisfied(world, facts, game.goal)
        world = replace(world, step_count=world.step_count + 1, goal_reached=goal_now)
        reward = compute_reward(len(hands), goal_now, game)
        done = goal_now or world.step_count >= game.max_steps
        self.world, self.facts, self.done = world, facts, done

        info: Dict[str, Any] = {
            "step": world.step_count,
            "action_index": action_index,
            "action_id": ability.ability_id,
            "executing_hands": hands,
            "successes": successes,
            "sim_latency_s": ability.sim_latency_s if hands else 0.0,
            "goal_reached": goal_now,
            "notes": notes,
        }
        if self.emit_delta:
            info["delta"] = [
                (row.row, row.values.tolist())
                for row in encode_delta(previous, facts, self.layout)
            ]
        if self.emit_action_mask:
            info["action_mask"] = self.action_mask().tolist()
        if done:
            LOG.debug(
                f"Episode over after {world.step_count} steps (goal reached: {goal_now})"
            )
        return StepResult(observation=self.observe(), reward=reward, done=done, info=info)


class TraceRecorder:
    """Collect one trace record per step.

    Records follow ``TRACE_FIELDS``; ``cumulative_reward`` restarts with each
    episode.
    """

    def __init__(self):
        self.records: List[Dict[str, Any]] = []
        self.episode = 0
        self._cumulative = 0

    def start_episode(self, episode: int) -> None:
        self.episode = episode
        self._cumulative = 0

    def record(self, result: StepResult) -> Dict[str, Any]:
        self._cumulative += result.reward
        info = result.info
        record = {
            "episode": self.episode,
            "step": info["step"],
            "action_id": info["action_id"],
            "executing_hands": list(info["executing_hands"]),
            "successes": list(info["successes"]),
            "reward": result.reward,
            "cumulative_reward": self._cumulative,
            "done": result.done,
            "sim_latency_s": info["sim_latency_s"],
        }
        self.records.append(record)
        return record

    def write(self, filename: Union[str, Path]) -> None:
        write_jsonl(filename, self.records)
