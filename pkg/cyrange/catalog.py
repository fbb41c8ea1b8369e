"""Abilities: the vocabulary of actions a hand can execute."""

from collections.abc import Mapping
from dataclasses import dataclass, replace
from enum import Enum
from functools import lru_cache
from typing import Any, Iterable, Iterator, List, Optional, Tuple

import numpy as np
import pluggy

from cyrange import hookspecs
from cyrange.logger import get_logger
from cyrange.scenario import (
    GoalCondition,
    GoalKind,
    HostSpec,
    NetworkSpec,
    Privilege,
    Role,
    ScenarioSpec,
)
from cyrange.state import Fact, FactDB, FactKind, Hand, WorldState, hand_fact

LOG = get_logger(__name__)


class UnknownAbilityError(KeyError):
    """An ability id is not in the registry."""


class DuplicateAbilityError(ValueError):
    """Two plugins registered the same ability id."""


class Tactic(str, Enum):
    """ATT&CK tactics covered by the catalog."""

    DISCOVERY = "discovery"
    CREDENTIAL_ACCESS = "credential_access"
    PRIVILEGE_ESCALATION = "privilege_escalation"
    LATERAL_MOVEMENT = "lateral_movement"
    COLLECTION = "collection"
    EXFILTRATION = "exfiltration"


TACTIC_SUCCESS = {
    Tactic.DISCOVERY: 0.95,
    Tactic.PRIVILEGE_ESCALATION: 0.9,
    Tactic.CREDENTIAL_ACCESS: 0.9,
    Tactic.LATERAL_MOVEMENT: 0.5,
    Tactic.COLLECTION: 0.95,
    Tactic.EXFILTRATION: 0.95,
}


class Scope(str, Enum):
    """Where a ``fact_present`` predicate looks."""

    HAND_HOST = "hand_host"
    ANY_HOST = "any_host"
    NETWORK = "network"


class Target(str, Enum):
    """Which hosts an effect lands on."""

    HAND_HOST = "hand_host"
    TRAFFIC_PEERS = "traffic_peers"
    REACHABLE_HOSTS = "reachable_hosts"
    DOMAIN_CONTROLLER = "domain_controller"
    NETWORK = "network"


class PredicateKind(str, Enum):
    HAND_PRIVILEGE_AT_LEAST = "hand_privilege_at_least"
    FACT_PRESENT = "fact_present"
    REACHABLE_FROM_HAND_HOST = "reachable_from_hand_host"
    HOST_PROPERTY = "host_property"


class EffectKind(str, Enum):
    ADD_FACT = "add_fact"
    SPAWN_HAND = "spawn_hand"
    ELEVATE_HAND = "elevate_hand"
    EXFIL_FLAG = "exfil_flag"


@dataclass(frozen=True)
class Predicate:
    """A per-hand precondition.

    Build instances with the classmethods rather than the constructor.
    """

    kind: PredicateKind
    privilege: Optional[Privilege] = None
    fact: Optional[FactKind] = None
    value: Optional[str] = None
    scope: Scope = Scope.HAND_HOST
    role: Optional[Role] = None
    attribute: Optional[str] = None
    allowed: Tuple[Any, ...] = ()

    @classmethod
    def privilege_at_least(cls, privilege: Privilege) -> "Predicate":
        return cls(PredicateKind.HAND_PRIVILEGE_AT_LEAST, privilege=privilege)

    @classmethod
    def fact_present(
        cls, fact: FactKind, value: Optional[str] = None, scope: Scope = Scope.HAND_HOST
    ) -> "Predicate":
        if fact.is_network:
            scope = Scope.NETWORK
        return cls(PredicateKind.FACT_PRESENT, fact=fact, value=value, scope=scope)

    @classmethod
    def reachable_role(cls, role: Role) -> "Predicate":
        """A discovered host with ``role`` is reachable from the hand's host."""
        return cls(PredicateKind.REACHABLE_FROM_HAND_HOST, role=role)

    @classmethod
    def host_property(cls, attribute: str, *allowed: Any) -> "Predicate":
        """An attribute of the hand's own host takes one of ``allowed``."""
        return cls(PredicateKind.HOST_PROPERTY, attribute=attribute, allowed=allowed)

    def holds(self, facts: FactDB, world: WorldState, hand: Hand) -> bool:
        """Evaluate the predicate for one hand."""
        network = world.scenario.network
        if self.kind is PredicateKind.HAND_PRIVILEGE_AT_LEAST:
            return hand.privilege >= self.privilege  # type: ignore[operator]
        if self.kind is PredicateKind.FACT_PRESENT:
            assert self.fact is not None
            if self.scope is Scope.HAND_HOST:
                return facts.has(self.fact, hand.host_id, self.value)
            return facts.has(self.fact, None, self.value)
        if self.kind is PredicateKind.REACHABLE_FROM_HAND_HOST:
            assert self.role is not None
            return any(
                host.role is self.role
                and host.host_id != hand.host_id
                and network.reachable(hand.host_id, host.host_id)
                and facts.has(FactKind.ROLE, host.host_id, self.role.value)
                for host in network.hosts
            )
        return getattr(network.host(hand.host_id), str(self.attribute)) in self.allowed


@dataclass(frozen=True)
class Effect:
    """What a successful execution changes.

    ``when`` names a ``HostSpec`` attribute that must be truthy on the target
    host; for network-scoped facts it is checked on the hand's host.
    """

    kind: EffectKind
    fact: Optional[FactKind] = None
    value: Optional[str] = None
    target: Target = Target.HAND_HOST
    when: Optional[str] = None
    privilege: Optional[Privilege] = None

    @classmethod
    def add_fact(
        cls,
        fact: FactKind,
        value: Optional[str] = None,
        target: Target = Target.HAND_HOST,
        when: Optional[str] = None,
    ) -> "Effect":
        if fact.is_network:
            target = Target.NETWORK
        return cls(EffectKind.ADD_FACT, fact=fact, value=value, target=target, when=when)

    @classmethod
    def spawn_hand(
        cls, privilege: Privilege, target: Target, when: Optional[str] = None
    ) -> "Effect":
        return cls(EffectKind.SPAWN_HAND, privilege=privilege, target=target, when=when)

    @classmethod
    def elevate_hand(cls, privilege: Privilege) -> "Effect":
        return cls(EffectKind.ELEVATE_HAND, privilege=privilege)

    @classmethod
    def exfil_flag(cls) -> "Effect":
        return cls(EffectKind.EXFIL_FLAG)


@dataclass(frozen=True)
class AbilitySpec:
    """One red-team action.

    Parameters
    ----------
    ability_id : int
        The catalog id.
    name : str
        Short snake-case name.
    tactic : Tactic
        The ATT&CK tactic.
    technique : str
        The ATT&CK technique id, e.g. ``T1082``.
    preconditions : tuple
        Predicates every executing hand must satisfy.
    effects : tuple
        Effects applied when an execution succeeds.
    base_success : float, optional
        Success probability. ``None`` uses the tactic default.
    antivirus_factor : float, optional (default 1.0)
        Multiplier applied on hosts running antivirus.
    sim_latency_s : float, optional (default 1.0)
        Simulated latency written to traces. Nothing waits on it.
    description : str, optional
        Free text shown by ``cyrange inspect``.
    """

    ability_id: int
    name: str
    tactic: Tactic
    technique: str
    preconditions: Tuple[Predicate, ...] = ()
    effects: Tuple[Effect, ...] = ()
    base_success: Optional[float] = None
    antivirus_factor: float = 1.0
    sim_latency_s: float = 1.0
    description: str = ""

    def __post_init__(self):
        if self.base_success is not None and not 0.0 <= self.base_success <= 1.0:
            raise ValueError(f"Ability {self.ability_id}: base_success outside [0, 1]")
        if not 0.0 <= self.antivirus_factor <= 1.0:
            raise ValueError(f"Ability {self.ability_id}: antivirus_factor outside [0, 1]")
        if self.sim_latency_s < 0:
            raise ValueError(f"Ability {self.ability_id}: negative sim_latency_s")
        for effect in self.effects:
            if effect.kind is EffectKind.ADD_FACT and effect.fact in (
                FactKind.HAND,
                FactKind.EXFILTRATED,
            ):
                raise ValueError(
                    f"Ability {self.ability_id}: {effect.fact.value} facts come from "
                    "hand and exfiltration effects only"
                )

    def can_satisfy(self, goal: GoalCondition) -> bool:
        """Whether a success can complete ``goal``.

        Exfiltration goals need an exfiltration effect. Hand goals need a spawn
        or an elevation granting at least the goal privilege; the landing host
        is not checked.
        """
        if goal.kind is GoalKind.EXFIL_TARGET_FILE:
            return any(effect.kind is EffectKind.EXFIL_FLAG for effect in self.effects)
        return any(
            effect.kind in (EffectKind.SPAWN_HAND, EffectKind.ELEVATE_HAND)
            and effect.privilege is not None
            and (goal.privilege is None or effect.privilege >= goal.privilege)
            for effect in self.effects
        )

    @property
    def is_goal_capable(self) -> bool:
        """Whether a success can complete some goal."""
        return any(
            effect.kind in (EffectKind.EXFIL_FLAG, EffectKind.SPAWN_HAND, EffectKind.ELEVATE_HAND)
            for effect in self.effects
        )

    @property
    def nominal_success(self) -> float:
        """Success probability on a host without defenses."""
        if self.base_success is not None:
            return self.base_success
        return TACTIC_SUCCESS[self.tactic]

    def success_prob(self, host: HostSpec, world: WorldState) -> float:
        """Probability that one execution on ``host`` succeeds.

        A scenario override replaces the whole model with a constant.
        """
        override = world.scenario.override_for(self.ability_id)
        if override is not None:
            return float(min(max(override, 0.0), 1.0))
        prob = self.nominal_success
        if host.has_antivirus:
            prob *= self.antivirus_factor
        return float(min(max(prob, 0.0), 1.0))

    def describe_success(self) -> str:
        text = f"{self.nominal_success:.2f}"
        if self.antivirus_factor != 1.0:
            text += f" (x{self.antivirus_factor:g} with antivirus)"
        return text


class AbilityRegistry(Mapping):
    """Read-only mapping of ability id to ``AbilitySpec``.

    Raises
    ------
    DuplicateAbilityError
        If two abilities share an id.
    """

    def __init__(self, abilities: Iterable[AbilitySpec]):
        self._abilities = {}
        for ability in abilities:
            if ability.ability_id in self._abilities:
                raise DuplicateAbilityError(
                    f"Ability id {ability.ability_id} registered twice "
                    f"({self._abilities[ability.ability_id].name}, {ability.name})"
                )
            self._abilities[ability.ability_id] = ability

    def __getitem__(self, ability_id: int) -> AbilitySpec:
        try:
            return self._abilities[ability_id]
        except KeyError:
            raise UnknownAbilityError(f"Unknown ability id: {ability_id}") from None

    def __iter__(self) -> Iterator[int]:
        return iter(sorted(self._abilities))

    def __len__(self) -> int:
        return len(self._abilities)

    @classmethod
    def from_plugins(cls, pm: pluggy.PluginManager) -> "AbilityRegistry":
        """Merge the abilities every plugin registers."""
        return cls(ability for batch in pm.hook.register_abilities() for ability in batch)


def get_plugin_manager() -> pluggy.PluginManager:
    """Get the plugin manager.

    Registers the built-in ability catalog as the default plugin.

    Returns
    -------
    PluginManager
        The plugin manager.
    """
    from cyrange import lib

    pm = pluggy.PluginManager("cyrange")
    pm.add_hookspecs(hookspecs)
    pm.load_setuptools_entrypoints("cyrange")
    pm.register(lib)

    return pm


@lru_cache(maxsize=None)
def default_registry() -> AbilityRegistry:
    """The registry built from every installed plugin."""
    return AbilityRegistry.from_plugins(get_plugin_manager())


def catalog_for_game(
    spec: ScenarioSpec, registry: Optional[AbilityRegistry] = None
) -> List[AbilitySpec]:
    """Resolve the game's action space.

    Parameters
    ----------
    spec : ScenarioSpec
        The scenario.
    registry : AbilityRegistry, optional (default None)
        Defaults to ``default_registry()``.

    Returns
    -------
    list
        Abilities in ``game.action_ids`` order; action index ``i`` is entry ``i``.

    Raises
    ------
    ValueError
        If the action space is empty.
    UnknownAbilityError
        If an id is not registered.
    """
    registry = default_registry() if registry is None else registry
    if not spec.game.action_ids:
        raise ValueError(f"Scenario {spec.name} has an empty action space")
    return [registry[aid] for aid in spec.game.action_ids]


def harvest(kind: FactKind, host: HostSpec, network: NetworkSpec) -> Tuple[str, ...]:
    """Raw values an ability reads off a host for a fact kind.

    Values are identifiers (addresses, account names) that stay in the fact
    database; the observation only ever encodes their presence or count.
    """
    domain = network.domain_name
    if kind is FactKind.LOCAL_USER:
        return tuple(f"user{i}@host{host.host_id}" for i in range(host.local_users))
    if kind is FactKind.LOCAL_CRED:
        return (f"administrator:{host.host_id}@host{host.host_id}",)
    if kind is FactKind.OS:
        return (host.os.value,)
    if kind is FactKind.ROLE:
        return (host.role.value,)
    if kind is FactKind.MODIFIABLE_SERVICE:
        return (f"svc-update@host{host.host_id}",)
    if kind is FactKind.FILE:
        return (f"\\\\{host.address}\\share",)
    if kind is FactKind.DEFENSE:
        return tuple(sorted(defense.value for defense in host.defenses))
    if kind is FactKind.NETWORK:
        return (host.address,)
    if kind is FactKind.SYSTEM:
        return (f"sysinfo:{host.os.value}",)
    if kind is FactKind.REMOTE:
        return tuple(network.host(peer).address for peer in network.peers(host.host_id))
    if kind is FactKind.DOMAIN_NAME:
        return (domain,)
    if kind is FactKind.DOMAIN_USER_CRED:
        return (f"{domain}\\svc_host{host.host_id}",)
    if kind is FactKind.DOMAIN_ADMIN_CRED:
        return (f"{domain}\\administrator",)
    if kind is FactKind.EMAIL_SERVER:
        return (f"mail.{domain}",)
    if kind is FactKind.ORG_INFO:
        return (f"org:{domain}",)
    return ()


def eligible_hands(ability: AbilitySpec, world: WorldState, facts: FactDB) -> List[int]:
    """Live hands satisfying every precondition, ascending by hand id."""
    return [
        hand.hand_id
        for hand in world.live_hands
        if all(pred.holds(facts, world, hand) for pred in ability.preconditions)
    ]


def sample_outcome(
    ability: AbilitySpec, hand_id: int, world: WorldState, rng: np.random.Generator
) -> bool:
    """Draw the outcome of one execution; consumes exactly one draw."""
    host = world.scenario.network.host(world.hand(hand_id).host_id)
    return bool(rng.random() < ability.success_prob(host, world))


def _target_hosts(
    target: Target, hand: Hand, world: WorldState, facts: FactDB, spawning: bool
) -> List[int]:
    network = world.scenario.network
    if target in (Target.HAND_HOST, Target.NETWORK):
        return [hand.host_id]
    if target is Target.TRAFFIC_PEERS:
        hosts = network.peers(hand.host_id)
    elif target is Target.REACHABLE_HOSTS:
        hosts = network.reachable_from(hand.host_id)
    else:
        dc = network.domain_controller
        hosts = [] if dc is None or dc.host_id == hand.host_id else [dc.host_id]
    if not spawning:
        return hosts
    # spawns need a route and a discovered target
    return [
        host_id
        for host_id in hosts
        if network.reachable(hand.host_id, host_id)
        and facts.is_discovered(host_id)
        and (target is Target.DOMAIN_CONTROLLER or not network.host(host_id).is_domain_controller)
    ]


def _when(effect: Effect, host: HostSpec) -> bool:
    return effect.when is None or bool(getattr(host, effect.when))


def apply_effects(
    ability: AbilitySpec,
    hand_id: int,
    success: bool,
    world: WorldState,
    facts: FactDB,
    notes: Optional[List[str]] = None,
) -> Tuple[WorldState, FactDB]:
    """Apply the result of one execution.

    On failure only the success marker of the hand's host changes. Facts are
    never removed.

    Parameters
    ----------
    ability : AbilitySpec
        The executed ability.
    hand_id : int
        The executing hand.
    success : bool
        The sampled outcome.
    world : WorldState
        The world before the execution.
    facts : FactDB
        The fact database before the execution.
    notes : list, optional (default None)
        Receives trace notes, e.g. spawns refused because every candidate host
        already has a hand.

    Returns
    -------
    WorldState
        The updated world.
    FactDB
        The updated fact database.
    """
    hand = world.hand(hand_id)
    network = world.scenario.network
    facts = facts.with_outcome(hand.host_id, success)
    if not success:
        return world, facts

    for effect in ability.effects:
        if effect.kind is EffectKind.ADD_FACT:
            assert effect.fact is not None
            for host_id in _target_hosts(effect.target, hand, world, facts, spawning=False):
                host = network.host(host_id)
                if not _when(effect, host):
                    continue
                values = (effect.value,) if effect.value else harvest(effect.fact, host, network)
                new = [Fact(effect.fact, value) for value in values]
                if effect.fact.is_network:
                    facts = facts.add_network_facts(new)
                else:
                    facts = facts.add_host_facts(host_id, new)
        elif effect.kind is EffectKind.ELEVATE_HAND:
            assert effect.privilege is not None
            if effect.privilege > hand.privilege:
                hand = replace(hand, privilege=effect.privilege)
                world = world.with_hand(hand)
                facts = facts.add_host_facts(hand.host_id, [hand_fact(hand.hand_id, hand.privilege)])
        elif effect.kind is EffectKind.SPAWN_HAND:
            assert effect.privilege is not None
            candidates = [
                host_id
                for host_id in _target_hosts(effect.target, hand, world, facts, spawning=True)
                if _when(effect, network.host(host_id))
            ]
            free = [host_id for host_id in candidates if world.hand_on(host_id) is None]
            if not free:
                note = (
                    f"ability {ability.ability_id}: hand {hand_id} found no free host "
                    f"to spawn on (candidates {candidates})"
                )
                LOG.debug(note)
                if notes is not None:
                    notes.append(note)
                continue
            new_hand = Hand(world.next_hand_id(), free[0], effect.privilege)
            world = world.with_hand(new_hand)
            facts = facts.add_host_facts(
                new_hand.host_id, [hand_fact(new_hand.hand_id, new_hand.privilege)]
            )
            LOG.debug(f"Spawned hand {new_hand.hand_id} on host {new_hand.host_id}")
        else:
            facts = facts.add_network_facts([Fact(FactKind.EXFILTRATED, "target_file")])

    return world, facts
