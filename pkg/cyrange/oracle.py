"""Breadth-first planner over the deterministic game."""

from collections import deque
from dataclasses import dataclass
from typing import Deque, List, Optional, Set, Tuple

from cyrange.catalog import AbilityRegistry, apply_effects, catalog_for_game, eligible_hands
from cyrange.engine import Engine, goal_satisfied
from cyrange.logger import get_logger
from cyrange.scenario import ScenarioSpec, deterministic
from cyrange.state import FactDB, WorldState

LOG = get_logger(__name__)

DEFAULT_MAX_STATES = 500_000


@dataclass(frozen=True)
class OracleResult:
    """Outcome of a plan search.

    ``plan`` holds action indices and ``ability_ids`` the matching catalog ids.
    An unreachable goal is a result, not an error; ``reason`` explains it.
    """

    reachable: bool
    plan: Tuple[int, ...] = ()
    ability_ids: Tuple[int, ...] = ()
    plan_return: Optional[int] = None
    explored: int = 0
    reason: str = ""

    @property
    def length(self) -> int:
        return len(self.plan)


def plan_return(spec: ScenarioSpec, plan: Tuple[int, ...], registry: Optional[AbilityRegistry] = None) -> int:
    """Replay a plan in a deterministic engine and sum the rewards."""
    engine = Engine(deterministic(spec), registry=registry)
    engine.reset(0)
    return sum(engine.step(index).reward for index in plan)


def bfs_oracle(
    spec: ScenarioSpec,
    registry: Optional[AbilityRegistry] = None,
    max_states: int = DEFAULT_MAX_STATES,
) -> OracleResult:
    """Find a shortest plan reaching the goal when every execution succeeds.

    States are (knowledge, live hands); actions without an eligible hand are
    skipped since they cannot change the state. The goal is tested as states
    are generated, so the first hit is a minimum-length plan.

    Parameters
    ----------
    spec : ScenarioSpec
        The scenario; success probabilities are forced to 1.
    registry : AbilityRegistry, optional (default None)
        Ability registry.
    max_states : int, optional
        Give up after storing this many states.

    Returns
    -------
    OracleResult
        The plan and its return, or an unreachable result with a reason.
    """
    det = deterministic(spec)
    catalog = catalog_for_game(det, registry)
    game = det.game
    if not any(ability.can_satisfy(game.goal) for ability in catalog):
        return OracleResult(reachable=False, reason="no goal-capable action in the action space")

    engine = Engine(det, registry=registry)
    engine.reset(0)
    assert engine.world is not None
    start: Tuple[WorldState, FactDB, Tuple[int, ...]] = (engine.world, engine.facts, ())
    seen: Set[Tuple] = {(engine.facts.knowledge_key(), engine.world.hands_key())}
    queue: Deque[Tuple[WorldState, FactDB, Tuple[int, ...]]] = deque([start])

    while queue:
        world, facts, plan = queue.popleft()
        if len(plan) >= game.max_steps:
            continue
        for index, ability in enumerate(catalog):
            hands = eligible_hands(ability, world, facts)
            if not hands:
                continue
            new_world, new_facts = world, facts.clear_outcomes()
            for hand_id in hands:
                new_world, new_facts = apply_effects(ability, hand_id, True, new_world, new_facts)
            new_plan = plan + (index,)
            if goal_satisfied(new_world, new_facts, game.goal):
                LOG.debug(f"Plan of length {len(new_plan)} found after {len(seen)} states")
                return OracleResult(
                    reachable=True,
                    plan=new_plan,
                    ability_ids=tuple(catalog[i].ability_id for i in new_plan),
                    plan_return=plan_return(spec, new_plan, registry),
                    explored=len(seen),
                )
            key = (new_facts.knowledge_key(), new_world.hands_key())
            if key in seen:
                continue
            seen.add(key)
            if len(seen) > max_states:
                return OracleResult(
                    reachable=False,
                    explored=len(seen),
                    reason=f"search stopped after {max_states} states without reaching the goal",
                )
            queue.append((new_world, new_facts, new_plan))

    return OracleResult(
        reachable=False,
        explored=len(seen),
        reason=(
            f"goal unreachable within {game.max_steps} steps; "
            f"{len(seen)} distinct states explored"
        ),
    )


def describe_plan(spec: ScenarioSpec, result: OracleResult, registry: Optional[AbilityRegistry] = None) -> List[Tuple[int, int, str]]:
    """(step, ability id, ability name) rows of a plan."""
    catalog = catalog_for_game(spec, registry)
    return [(step, catalog[index].ability_id, catalog[index].name) for step, index in enumerate(result.plan, start=1)]
