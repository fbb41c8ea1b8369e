"""Test the fact database and world state."""

import pytest

from cyrange.scenario import Privilege
from cyrange.state import Fact, FactDB, FactKind, Hand, WorldState, hand_fact


def test_discovery_order_and_lookup():
    """Test that hosts keep their first-discovery order."""
    facts = (
        FactDB()
        .add_host_facts(3, [Fact(FactKind.NETWORK, "10.0.2.3")])
        .add_host_facts(1, [hand_fact(0, Privilege.USER)])
        .add_host_facts(3, [Fact(FactKind.OS, "windows10")])
    )

    assert facts.discovery_order() == [3, 1]
    assert facts.has(FactKind.OS, 3)
    assert not facts.has(FactKind.OS, 1)
    assert facts.has(FactKind.OS)
    assert facts.has(FactKind.OS, 3, "windows10")
    assert not facts.has(FactKind.OS, 3, "ubuntu")
    assert facts.privilege_on(1) is Privilege.USER
    assert facts.privilege_on(3) is Privilege.NONE
    assert facts.fact_count() == 3


def test_adding_nothing_discovers_nothing():
    """Test that an empty fact list leaves the database untouched."""
    facts = FactDB()

    assert facts.add_host_facts(5, []) is facts
    assert not facts.is_discovered(5)


def test_privilege_is_the_highest_reported():
    """Test that hand facts accumulate."""
    facts = FactDB().add_host_facts(
        2, [hand_fact(0, Privilege.USER), hand_fact(0, Privilege.ADMIN)]
    )

    assert facts.privilege_on(2) is Privilege.ADMIN


def test_network_facts():
    """Test network scoped facts ignore host ids."""
    facts = FactDB().add_network_facts([Fact(FactKind.DOMAIN_NAME, "corp.local")])

    assert facts.has(FactKind.DOMAIN_NAME)
    assert facts.has(FactKind.DOMAIN_NAME, 4)
    assert facts.discovery_order() == []


def test_outcomes_are_replaced():
    """Test the success markers."""
    facts = FactDB().add_host_facts(1, [hand_fact(0, Privilege.USER)])
    marked = facts.with_outcome(1, True).with_outcome(1, False)

    assert marked.outcome_on(1) is False
    assert marked.outcome_on(2) is None
    assert marked.clear_outcomes().outcome_on(1) is None
    assert facts.issubset(marked)
    assert marked.knowledge_key() == facts.knowledge_key()


def test_issubset_and_key():
    """Test containment and order independent keys."""
    a = FactDB().add_host_facts(1, [Fact(FactKind.OS, "ubuntu")])
    b = a.add_host_facts(2, [Fact(FactKind.OS, "windows10")])
    c = (
        FactDB()
        .add_host_facts(2, [Fact(FactKind.OS, "windows10")])
        .add_host_facts(1, [Fact(FactKind.OS, "ubuntu")])
    )

    assert a.issubset(b)
    assert not b.issubset(a)
    assert b.knowledge_key() == c.knowledge_key()
    assert b != c


def test_world_hands(game2):
    """Test hand bookkeeping."""
    world = WorldState(scenario=game2, hands=(Hand(0, 2, Privilege.USER),))
    world = world.with_hand(Hand(1, 6, Privilege.USER))
    world = world.with_hand(Hand(0, 2, Privilege.ADMIN))

    assert [hand.hand_id for hand in world.live_hands] == [0, 1]
    assert world.hand(0).privilege is Privilege.ADMIN
    assert world.hand_on(6).hand_id == 1
    assert world.hand_on(9) is None
    assert world.next_hand_id() == 2
    assert world.hands_key() == ((0, 2, 2), (1, 6, 1))
    with pytest.raises(KeyError):
        world.hand(7)
