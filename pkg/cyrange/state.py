"""Ground-truth world state and the red agent's fact database."""

from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from typing import Dict, FrozenSet, Iterable, List, Optional, Tuple

import numpy as np

from cyrange.scenario import Privilege, ScenarioSpec


class FactKind(str, Enum):
    """Kinds of facts the hands report back to the C2."""

    # host scope
    HAND = "hand"
    LOCAL_USER = "local_user"
    LOCAL_CRED = "local_cred"
    OS = "os"
    ROLE = "role"
    MODIFIABLE_SERVICE = "modifiable_service"
    FILE = "file"
    DEFENSE = "defense"
    NETWORK = "network"
    SYSTEM = "system"
    REMOTE = "remote"
    # network scope
    DOMAIN_NAME = "domain_name"
    DOMAIN_USER_CRED = "domain_user_cred"
    DOMAIN_ADMIN_CRED = "domain_admin_cred"
    EMAIL_SERVER = "email_server"
    ORG_INFO = "org_info"
    EXFILTRATED = "exfiltrated"

    @property
    def is_network(self) -> bool:
        return self in NETWORK_KINDS


NETWORK_KINDS = frozenset(
    {
        FactKind.DOMAIN_NAME,
        FactKind.DOMAIN_USER_CRED,
        FactKind.DOMAIN_ADMIN_CRED,
        FactKind.EMAIL_SERVER,
        FactKind.ORG_INFO,
        FactKind.EXFILTRATED,
    }
)


@dataclass(frozen=True, order=True)
class Fact:
    """One piece of harvested information with its raw value."""

    kind: FactKind
    value: str


def hand_fact(hand_id: int, privilege: Privilege) -> Fact:
    """The fact a hand reports about itself."""
    return Fact(FactKind.HAND, f"{hand_id}:{privilege.label}")


@dataclass(frozen=True)
class FactDB:
    """Accumulated knowledge of the red agent.

    Host facts are kept per host in the order hosts were first discovered.
    ``outcomes`` holds the per-host success marker of the most recent step
    only; it is the one part of the database that is replaced rather than
    extended.
    """

    hosts: Tuple[Tuple[int, FrozenSet[Fact]], ...] = ()
    network: FrozenSet[Fact] = frozenset()
    outcomes: Tuple[Tuple[int, bool], ...] = ()

    @cached_property
    def _index(self) -> Dict[int, FrozenSet[Fact]]:
        return dict(self.hosts)

    def discovery_order(self) -> List[int]:
        """Discovered host ids, first discovery first."""
        return [host_id for host_id, _ in self.hosts]

    def is_discovered(self, host_id: int) -> bool:
        return host_id in self._index

    def facts_on(self, host_id: int) -> FrozenSet[Fact]:
        return self._index.get(host_id, frozenset())

    def has(self, kind: FactKind, host_id: Optional[int] = None, value: Optional[str] = None) -> bool:
        """Return whether a fact of ``kind`` is known.

        Network kinds ignore ``host_id``; host kinds with ``host_id=None`` look
        at every discovered host.
        """
        if kind.is_network:
            pool: Iterable[Fact] = self.network
        elif host_id is None:
            pool = (fact for _, facts in self.hosts for fact in facts)
        else:
            pool = self.facts_on(host_id)
        return any(f.kind is kind and (value is None or f.value == value) for f in pool)

    def count(self, kind: FactKind, host_id: int) -> int:
        return sum(1 for fact in self.facts_on(host_id) if fact.kind is kind)

    def privilege_on(self, host_id: int) -> Privilege:
        """Highest privilege a hand ever reported on this host."""
        levels = [
            Privilege.parse(fact.value.split(":", 1)[1])
            for fact in self.facts_on(host_id)
            if fact.kind is FactKind.HAND
        ]
        return max(levels, default=Privilege.NONE)

    def outcome_on(self, host_id: int) -> Optional[bool]:
        for hid, success in self.outcomes:
            if hid == host_id:
                return success
        return None

    def add_host_facts(self, host_id: int, facts: Iterable[Fact]) -> "FactDB":
        """Return a copy with ``facts`` added to ``host_id``.

        Adding nothing to an undiscovered host does not discover it.
        """
        new = frozenset(facts)
        if host_id in self._index:
            merged = self._index[host_id] | new
            if merged == self._index[host_id]:
                return self
            hosts = tuple(
                (hid, merged if hid == host_id else existing) for hid, existing in self.hosts
            )
        elif new:
            hosts = self.hosts + ((host_id, new),)
        else:
            return self
        return replace(self, hosts=hosts)

    def add_network_facts(self, facts: Iterable[Fact]) -> "FactDB":
        merged = self.network | frozenset(facts)
        return self if merged == self.network else replace(self, network=merged)

    def with_outcome(self, host_id: int, success: bool) -> "FactDB":
        """Record the success marker of the current step on a host."""
        kept = tuple((hid, flag) for hid, flag in self.outcomes if hid != host_id)
        return replace(self, outcomes=kept + ((host_id, success),))

    def clear_outcomes(self) -> "FactDB":
        return replace(self, outcomes=()) if self.outcomes else self

    def fact_count(self) -> int:
        """Total number of facts, success markers excluded."""
        return len(self.network) + sum(len(facts) for _, facts in self.hosts)

    def issubset(self, other: "FactDB") -> bool:
        """Knowledge containment, ignoring success markers and discovery order."""
        if not self.network <= other.network:
            return False
        return all(facts <= other.facts_on(host_id) for host_id, facts in self.hosts)

    def knowledge_key(self) -> Tuple:
        """A hashable key of the knowledge, independent of discovery order."""
        return (
            tuple(sorted((hid, tuple(sorted(facts))) for hid, facts in self.hosts)),
            tuple(sorted(self.network)),
        )


@dataclass(frozen=True)
class Hand:
    """An implant on a compromised host."""

    hand_id: int
    host_id: int
    privilege: Privilege
    alive: bool = True


@dataclass(frozen=True)
class WorldState:
    """Ground-truth engine state for one episode."""

    scenario: ScenarioSpec
    hands: Tuple[Hand, ...] = ()
    step_count: int = 0
    goal_reached: bool = False
    rng: np.random.Generator = field(
        default_factory=lambda: np.random.default_rng(0), compare=False, repr=False
    )

    @property
    def live_hands(self) -> List[Hand]:
        return sorted((hand for hand in self.hands if hand.alive), key=lambda h: h.hand_id)

    def hand(self, hand_id: int) -> Hand:
        for hand in self.hands:
            if hand.hand_id == hand_id:
                return hand
        raise KeyError(f"Unknown hand id: {hand_id}")

    def hand_on(self, host_id: int) -> Optional[Hand]:
        for hand in self.hands:
            if hand.alive and hand.host_id == host_id:
                return hand
        return None

    def next_hand_id(self) -> int:
        return max((hand.hand_id for hand in self.hands), default=-1) + 1

    def with_hand(self, hand: Hand) -> "WorldState":
        """Return a copy where ``hand`` is added or replaces the hand with its id."""
        hands = tuple(h for h in self.hands if h.hand_id != hand.hand_id) + (hand,)
        return replace(self, hands=tuple(sorted(hands, key=lambda h: h.hand_id)))

    def hands_key(self) -> Tuple[Tuple[int, int, int], ...]:
        return tuple((h.hand_id, h.host_id, int(h.privilege)) for h in self.live_hands)
