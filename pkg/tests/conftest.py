"""Shared fixtures: bundled games, small scenarios and a fake ability plugin."""

from typing import Dict, List

import pluggy
import pytest

from cyrange import hookspecs, lib
from cyrange.catalog import AbilityRegistry, AbilitySpec, Effect, Predicate, Tactic, Target
from cyrange.scenario import (
    GameConfig,
    GoalCondition,
    GoalKind,
    HostSpec,
    NetworkSpec,
    OperatingSystem,
    Privilege,
    Role,
    ScenarioSpec,
    builtin_game1,
    builtin_game2,
    deterministic,
)
from cyrange.state import FactKind

hookimpl = pluggy.HookimplMarker("cyrange")

# ids far from the built-in ones
SCOUT_ID = 901
BEACON_ID = 902

SCOUT = AbilitySpec(
    SCOUT_ID,
    "scout_peers",
    Tactic.DISCOVERY,
    "T1046",
    preconditions=(Predicate.privilege_at_least(Privilege.USER),),
    effects=(Effect.add_fact(FactKind.NETWORK, target=Target.TRAFFIC_PEERS),),
    base_success=1.0,
)

BEACON = AbilitySpec(
    BEACON_ID,
    "beacon_jump",
    Tactic.LATERAL_MOVEMENT,
    "T1021",
    preconditions=(Predicate.privilege_at_least(Privilege.USER),),
    effects=(Effect.spawn_hand(Privilege.USER, Target.TRAFFIC_PEERS),),
    base_success=1.0,
)


class FakeAbilities:
    """Contribute two extra abilities."""

    @hookimpl
    def register_abilities(self) -> List[AbilitySpec]:
        """Return the scout and beacon abilities."""
        return [SCOUT, BEACON]


class FakeRunHooks:
    """Record the run hooks."""

    def __init__(self):
        self.calls: List[Dict] = []

    @hookimpl
    def pre_run_hook(self, manifest: Dict):
        """Record the manifest."""
        self.calls.append({"hook": "pre", "manifest": dict(manifest)})

    @hookimpl
    def post_run_hook(self, report, manifest: Dict):
        """Record the report and manifest."""
        self.calls.append({"hook": "post", "report": report, "manifest": dict(manifest)})


@pytest.fixture
def plugin_manager():
    """A plugin manager with the built-in catalog and the fake abilities."""
    pm = pluggy.PluginManager("cyrange")
    pm.add_hookspecs(hookspecs)
    pm.register(lib)
    pm.register(FakeAbilities())

    return pm


@pytest.fixture
def registry(plugin_manager):
    """Registry built from the fake plugin manager."""
    return AbilityRegistry.from_plugins(plugin_manager)


@pytest.fixture
def game1() -> ScenarioSpec:
    return builtin_game1()


@pytest.fixture
def game2() -> ScenarioSpec:
    return builtin_game2()


@pytest.fixture
def det_game1(game1) -> ScenarioSpec:
    return deterministic(game1)


@pytest.fixture
def det_game2(game2) -> ScenarioSpec:
    return deterministic(game2)


def line_scenario(action_ids=(SCOUT_ID, BEACON_ID), max_steps: int = 10) -> ScenarioSpec:
    """Three hosts on one subnet, traffic 1-2 and 2-3, goal: a user hand on host 3."""
    network = NetworkSpec(
        hosts=tuple(
            HostSpec(host_id=i, os=OperatingSystem.UBUNTU, subnet_id=1, role=Role.NONE)
            for i in (1, 2, 3)
        ),
        subnets=(1,),
        traffic_pairs=frozenset({frozenset({1, 2}), frozenset({2, 3})}),
    )
    game = GameConfig(
        action_ids=tuple(action_ids),
        max_steps=max_steps,
        goal=GoalCondition(GoalKind.HAND_ON_HOST_WITH_PRIVILEGE, 3, Privilege.USER),
        initial_hands=((1, Privilege.USER),),
    )
    return ScenarioSpec(name="line", network=network, game=game)


@pytest.fixture
def line() -> ScenarioSpec:
    return line_scenario()
