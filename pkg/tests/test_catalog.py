"""Test abilities, the registry and effect application."""

from dataclasses import replace

import numpy as np
import pytest

from cyrange.catalog import (
    AbilityRegistry,
    AbilitySpec,
    DuplicateAbilityError,
    Effect,
    Tactic,
    UnknownAbilityError,
    apply_effects,
    catalog_for_game,
    default_registry,
    eligible_hands,
    get_plugin_manager,
    harvest,
    sample_outcome,
)
from cyrange.lib import BUILTIN_ABILITIES
from cyrange.scenario import GoalCondition, GoalKind, Privilege
from cyrange.state import Fact, FactDB, FactKind, Hand, WorldState, hand_fact

from .conftest import BEACON_ID, SCOUT, SCOUT_ID


@pytest.fixture
def start(game2):
    """Game 2 with its single user hand on host 2."""
    world = WorldState(scenario=game2, hands=(Hand(0, 2, Privilege.USER),))
    facts = FactDB().add_host_facts(2, [hand_fact(0, Privilege.USER)])
    return world, facts


def _run(ability_id, world, facts, success=True, notes=None):
    ability = default_registry()[ability_id]
    for hand_id in eligible_hands(ability, world, facts):
        world, facts = apply_effects(ability, hand_id, success, world, facts, notes)
    return world, facts


def test_default_registry():
    """Test the built-in catalog."""
    registry = default_registry()

    assert sorted(registry) == list(range(1, 14)) + list(range(21, 31))
    assert registry[12].name == "domain_admin_logon"
    assert registry[28].is_goal_capable
    assert registry[13].is_goal_capable
    assert not registry[27].is_goal_capable
    with pytest.raises(UnknownAbilityError):
        registry[99]


def test_get_plugin_manager():
    """Test that the default plugin is registered."""
    pm = get_plugin_manager()

    abilities = [a for batch in pm.hook.register_abilities() for a in batch]
    assert {a.ability_id for a in abilities} >= {1, 13, 21, 30}


def test_registry_merges_plugins(registry):
    """Test that plugin abilities are merged with the built-ins."""
    assert len(registry) == len(BUILTIN_ABILITIES) + 2
    assert registry[SCOUT_ID] is SCOUT
    assert registry[BEACON_ID].tactic is Tactic.LATERAL_MOVEMENT


def test_registry_rejects_duplicates():
    """Test that an id can only be registered once."""
    with pytest.raises(DuplicateAbilityError, match="registered twice"):
        AbilityRegistry([SCOUT, SCOUT])


def test_ability_validation():
    """Test the range checks of an ability."""
    with pytest.raises(ValueError, match="base_success"):
        AbilitySpec(1, "x", Tactic.DISCOVERY, "T1", base_success=1.5)
    with pytest.raises(ValueError, match="antivirus_factor"):
        AbilitySpec(1, "x", Tactic.DISCOVERY, "T1", antivirus_factor=2.0)
    with pytest.raises(ValueError, match="hand"):
        AbilitySpec(1, "x", Tactic.DISCOVERY, "T1", effects=(Effect.add_fact(FactKind.HAND),))


def test_can_satisfy(game1, game2):
    """Test that goal capability follows the effects."""
    registry = default_registry()
    exfil, domain_admin = game1.game.goal, game2.game.goal
    user_on_host = GoalCondition(GoalKind.HAND_ON_HOST_WITH_PRIVILEGE, 3, Privilege.USER)

    assert registry[28].can_satisfy(exfil)
    assert not registry[27].can_satisfy(exfil)
    assert registry[12].can_satisfy(domain_admin)
    assert not registry[13].can_satisfy(domain_admin)
    assert not registry[4].can_satisfy(domain_admin)
    assert registry[4].can_satisfy(user_on_host)
    assert registry[13].can_satisfy(user_on_host)
    assert not registry[28].can_satisfy(user_on_host)


def test_catalog_for_game(game1, line, registry):
    """Test that action indices follow the game's action ids."""
    catalog = catalog_for_game(game1)

    assert [a.ability_id for a in catalog] == list(range(21, 31))
    assert [a.ability_id for a in catalog_for_game(line, registry)] == [SCOUT_ID, BEACON_ID]
    with pytest.raises(UnknownAbilityError):
        catalog_for_game(line)


def test_success_probabilities(game2, start):
    """Test tactic defaults, antivirus and overrides."""
    world, _ = start
    registry = default_registry()
    network = game2.network

    assert registry[1].success_prob(network.host(3), world) == pytest.approx(0.95)
    assert registry[12].success_prob(network.host(3), world) == pytest.approx(0.5)
    assert registry[6].success_prob(network.host(3), world) == pytest.approx(0.6)
    assert registry[6].success_prob(network.host(1), world) == pytest.approx(0.3)
    assert registry[6].describe_success() == "0.60 (x0.5 with antivirus)"

    overridden = WorldState(scenario=replace(game2, catalog_overrides=((6, 1.0),)))
    assert registry[6].success_prob(network.host(1), overridden) == 1.0


def test_sample_outcome_consumes_one_draw(start):
    """Test that each execution draws exactly one number."""
    world, _ = start
    rng = np.random.default_rng(7)
    reference = np.random.default_rng(7)

    sample_outcome(default_registry()[12], 0, world, rng)
    reference.random()

    assert rng.random() == reference.random()


def test_lateral_success_rate(start):
    """Test the empirical success rate of a lateral movement."""
    world, _ = start
    rng = np.random.default_rng(2024)
    ability = default_registry()[13]
    draws = 10_000

    successes = sum(sample_outcome(ability, 0, world, rng) for _ in range(draws))

    assert successes / draws == pytest.approx(0.5, abs=0.02)


def test_harvest(game2):
    """Test raw fact values."""
    network = game2.network

    assert len(harvest(FactKind.LOCAL_USER, network.host(8), network)) == 9
    assert harvest(FactKind.REMOTE, network.host(2), network) == ("10.0.3.6",)
    assert harvest(FactKind.DOMAIN_NAME, network.host(2), network) == ("corp.local",)
    assert harvest(FactKind.DEFENSE, network.host(1), network) == ("antivirus",)


def test_domain_path(start):
    """Test the effects along the shortest domain controller path."""
    world, facts = start

    assert eligible_hands(default_registry()[4], world, facts) == []

    world, facts = _run(3, world, facts)
    assert facts.has(FactKind.MODIFIABLE_SERVICE, 2)
    assert facts.has(FactKind.OS, 2, "ubuntu")
    assert not facts.has(FactKind.DEFENSE, 2)
    assert eligible_hands(default_registry()[4], world, facts) == [0]

    world, facts = _run(4, world, facts)
    assert world.hand(0).privilege is Privilege.ADMIN
    assert facts.privilege_on(2) is Privilege.ADMIN

    world, facts = _run(7, world, facts)
    assert facts.discovery_order() == [2, 1, 6, 9]
    assert facts.has(FactKind.ROLE, 9, "domain_controller")
    assert facts.has(FactKind.REMOTE, 2, "10.0.3.6")
    assert facts.has(FactKind.DOMAIN_NAME)
    assert not facts.has(FactKind.ROLE, 1)

    world, facts = _run(13, world, facts)
    assert world.hand_on(6) == Hand(1, 6, Privilege.USER)

    assert eligible_hands(default_registry()[5], world, facts) == [1]
    world, facts = _run(5, world, facts)
    assert facts.has(FactKind.DOMAIN_ADMIN_CRED)
    assert not facts.has(FactKind.LOCAL_CRED)

    assert eligible_hands(default_registry()[12], world, facts) == [0, 1]
    notes = []
    world, facts = _run(12, world, facts, notes=notes)
    assert world.hand_on(9).privilege is Privilege.DOMAIN_ADMIN
    assert len(notes) == 1


def test_failure_only_marks_outcome(start):
    """Test that a failed execution adds no facts."""
    world, facts = start

    new_world, new_facts = _run(3, world, facts, success=False)

    assert new_world == world
    assert new_facts.outcome_on(2) is False
    assert new_facts.knowledge_key() == facts.knowledge_key()


def test_spawn_needs_discovered_target(start):
    """Test that a spawn without a discovered target is a no-op."""
    world, facts = _run(4, *_run(3, *start))
    facts = facts.add_host_facts(2, [Fact(FactKind.REMOTE, "10.0.3.6")])
    notes = []

    world, facts = _run(13, world, facts, notes=notes)

    assert world.hand_on(6) is None
    assert notes and "no free host" in notes[0]


def test_spawn_on_occupied_peer_is_noted(start):
    """Test that a second spawn onto the same peer is refused."""
    world, facts = _run(13, *_run(7, *_run(4, *_run(3, *start))))
    notes = []

    world, facts = _run(13, world, facts, notes=notes)

    assert len(world.live_hands) == 2
    assert len(notes) == 1


def test_exfiltration(det_game1):
    """Test the exfiltration flag on the shortest collection path."""
    registry = default_registry()
    world = WorldState(scenario=det_game1, hands=(Hand(0, 1, Privilege.USER),))
    facts = FactDB().add_host_facts(1, [hand_fact(0, Privilege.USER)])

    assert eligible_hands(registry[26], world, facts) == []
    for ability_id in (25, 26, 27, 28):
        ability = registry[ability_id]
        assert eligible_hands(ability, world, facts) == [0]
        world, facts = apply_effects(ability, 0, True, world, facts)

    assert facts.has(FactKind.FILE, 3, "target_file")
    assert facts.has(FactKind.EXFILTRATED)
    assert eligible_hands(registry[30], world, facts) == []
