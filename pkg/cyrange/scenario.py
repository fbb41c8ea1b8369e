"""Network scenarios and game configurations."""

import json
from dataclasses import dataclass, field, replace
from enum import Enum, IntEnum
from functools import cached_property
from pathlib import Path
from typing import (
    TYPE_CHECKING,
    Any,
    Dict,
    FrozenSet,
    List,
    Mapping,
    Optional,
    Sequence,
    Tuple,
    Union,
)

from cyrange.logger import get_logger
from cyrange.schema import SCENARIO_SCHEMA, SCHEMA_VERSION, CyrangeValidator, flatten_errors

if TYPE_CHECKING:
    from cyrange.catalog import AbilityRegistry

LOG = get_logger(__name__)

BUILTIN_NAMES = ("game1", "game2")


class ScenarioError(ValueError):
    """Base class for scenario problems."""


class ScenarioSyntaxError(ScenarioError):
    """The scenario document is not valid UTF-8 JSON."""

    def __init__(self, message: str, lineno: int, colno: int):
        super().__init__(f"{message} (line {lineno}, column {colno})")
        self.lineno = lineno
        self.colno = colno


class ScenarioSchemaError(ScenarioError):
    """The scenario document does not match the published schema."""

    def __init__(self, errors: List[str]):
        super().__init__("Scenario schema violations: " + "; ".join(errors))
        self.errors = errors


class ScenarioValidationError(ScenarioError):
    """The scenario is well-formed but breaks a semantic rule."""

    def __init__(self, violations: List[str]):
        super().__init__("Invalid scenario: " + "; ".join(violations))
        self.violations = violations


class UnknownHostError(KeyError):
    """A host id does not exist in the network."""


class OperatingSystem(str, Enum):
    """Operating systems a host can run."""

    WINDOWS10 = "windows10"
    UBUNTU = "ubuntu"
    WINDOWS_SERVER_2016 = "windows_server_2016"

    @property
    def family(self) -> str:
        """Either ``"windows"`` or ``"linux"``."""
        return "linux" if self is OperatingSystem.UBUNTU else "windows"


class Role(str, Enum):
    """Server roles."""

    NONE = "none"
    DOMAIN_CONTROLLER = "domain_controller"
    WEB_SERVER = "web_server"
    EMAIL_SERVER = "email_server"


class Privilege(IntEnum):
    """Privilege ladder of a hand."""

    NONE = 0
    USER = 1
    ADMIN = 2
    DOMAIN_ADMIN = 3

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, value: Union[str, int, "Privilege"]) -> "Privilege":
        """Build a privilege from its lowercase name or its level."""
        if isinstance(value, str):
            return cls[value.strip().upper()]
        return cls(value)


class Defense(str, Enum):
    """Host defensive configurations."""

    ANTIVIRUS = "antivirus"


class GoalKind(str, Enum):
    """Kinds of game goals."""

    EXFIL_TARGET_FILE = "exfil_target_file"
    HAND_ON_HOST_WITH_PRIVILEGE = "hand_on_host_with_privilege"


@dataclass(frozen=True)
class HostSpec:
    """Ground truth about one host."""

    host_id: int
    os: OperatingSystem
    subnet_id: int
    role: Role = Role.NONE
    local_users: int = 0
    has_local_admin_cred: bool = False
    has_domain_admin_session: bool = False
    modifiable_service: bool = False
    target_files: bool = False
    defenses: FrozenSet[Defense] = frozenset()

    @property
    def os_family(self) -> str:
        return self.os.family

    @property
    def is_windows(self) -> bool:
        return self.os_family == "windows"

    @property
    def is_linux(self) -> bool:
        return self.os_family == "linux"

    @property
    def is_domain_controller(self) -> bool:
        return self.role is Role.DOMAIN_CONTROLLER

    @property
    def has_antivirus(self) -> bool:
        return Defense.ANTIVIRUS in self.defenses

    @property
    def address(self) -> str:
        """The IP address used for raw facts."""
        return f"10.0.{self.subnet_id}.{self.host_id}"


@dataclass(frozen=True)
class NetworkSpec:
    """Topology, firewall rules and traffic of a scenario network.

    Parameters
    ----------
    hosts : tuple
        The hosts in document order.
    subnets : tuple
        The subnet ids.
    firewall_allow : frozenset
        Ordered ``(src, dst)`` pairs allowed across subnets.
    internet_reachable : frozenset
        Hosts reachable from outside the network.
    traffic_pairs : frozenset
        Unordered host pairs that exchange traffic. Only used to seed discovery
        facts, no packets are simulated.
    domain_name : str
        Domain name used in raw fact values.
    """

    hosts: Tuple[HostSpec, ...]
    subnets: Tuple[int, ...]
    firewall_allow: FrozenSet[Tuple[int, int]] = frozenset()
    internet_reachable: FrozenSet[int] = frozenset()
    traffic_pairs: FrozenSet[FrozenSet[int]] = frozenset()
    domain_name: str = "corp.local"

    @cached_property
    def _by_id(self) -> Dict[int, HostSpec]:
        return {host.host_id: host for host in self.hosts}

    @property
    def host_ids(self) -> List[int]:
        """Host ids in ascending order."""
        return sorted(self._by_id)

    def has_host(self, host_id: int) -> bool:
        return host_id in self._by_id

    def host(self, host_id: int) -> HostSpec:
        """Look up a host.

        Raises
        ------
        UnknownHostError
            If the host does not exist.
        """
        try:
            return self._by_id[host_id]
        except KeyError:
            raise UnknownHostError(f"Unknown host id: {host_id}") from None

    @property
    def domain_controller(self) -> Optional[HostSpec]:
        for host in self.hosts:
            if host.is_domain_controller:
                return host
        return None

    def peers(self, host_id: int) -> List[int]:
        """Traffic peers of a host, ascending."""
        return sorted(
            other
            for pair in self.traffic_pairs
            if host_id in pair and len(pair) == 2
            for other in pair
            if other != host_id
        )

    def reachable(self, src: int, dst: int) -> bool:
        """Return whether ``src`` can open a connection to ``dst``.

        True when both hosts share a subnet, when a firewall rule allows the
        ordered pair, or when ``dst`` is the domain controller.

        Raises
        ------
        UnknownHostError
            If either host does not exist.
        """
        source = self.host(src)
        target = self.host(dst)
        return (
            source.subnet_id == target.subnet_id
            or (src, dst) in self.firewall_allow
            or target.is_domain_controller
        )

    def reachable_from(self, src: int) -> List[int]:
        """Hosts other than ``src`` reachable from it, ascending."""
        return [dst for dst in self.host_ids if dst != src and self.reachable(src, dst)]


@dataclass(frozen=True)
class GoalCondition:
    """What ends a game with the goal reward."""

    kind: GoalKind
    host_id: Optional[int] = None
    privilege: Optional[Privilege] = None


@dataclass(frozen=True)
class GameConfig:
    """Action space, budget, reward scheme and starting hands of a game."""

    action_ids: Tuple[int, ...]
    max_steps: int
    goal: GoalCondition
    initial_hands: Tuple[Tuple[int, Privilege], ...]
    step_cost_per_hand: int = -1
    goal_reward: int = 99
    noop_cost: int = -1


@dataclass(frozen=True)
class ScenarioSpec:
    """A network plus a game played on it.

    ``catalog_overrides`` holds ``(ability_id, probability)`` pairs sorted by id;
    an override replaces the ability's whole success model with a constant.
    """

    name: str
    network: NetworkSpec
    game: GameConfig
    catalog_overrides: Tuple[Tuple[int, float], ...] = field(default_factory=tuple)

    def override_for(self, ability_id: int) -> Optional[float]:
        for aid, prob in self.catalog_overrides:
            if aid == ability_id:
                return prob
        return None


def _position(text: str, pos: int) -> Tuple[int, int]:
    lineno = text.count("\n", 0, pos) + 1
    colno = pos - text.rfind("\n", 0, pos)
    return lineno, colno


def _from_document(doc: Mapping[str, Any]) -> ScenarioSpec:
    net = doc["network"]
    hosts = tuple(
        HostSpec(
            host_id=host["host_id"],
            os=OperatingSystem(host["os"]),
            subnet_id=host["subnet_id"],
            role=Role(host["role"]),
            local_users=host["local_users"],
            has_local_admin_cred=host["has_local_admin_cred"],
            has_domain_admin_session=host["has_domain_admin_session"],
            modifiable_service=host["modifiable_service"],
            target_files=host["target_files"],
            defenses=frozenset(Defense(item) for item in host["defenses"]),
        )
        for host in net["hosts"]
    )
    network = NetworkSpec(
        hosts=hosts,
        subnets=tuple(net["subnets"]),
        firewall_allow=frozenset((src, dst) for src, dst in net["firewall_allow"]),
        internet_reachable=frozenset(net["internet_reachable"]),
        traffic_pairs=frozenset(frozenset(pair) for pair in net["traffic_pairs"]),
        domain_name=net["domain_name"],
    )
    game_doc = doc["game"]
    goal_doc = game_doc["goal"]
    goal = GoalCondition(
        kind=GoalKind(goal_doc["kind"]),
        host_id=goal_doc["host_id"],
        privilege=(
            None if goal_doc["privilege"] is None else Privilege.parse(goal_doc["privilege"])
        ),
    )
    game = GameConfig(
        action_ids=tuple(game_doc["action_ids"]),
        max_steps=game_doc["max_steps"],
        goal=goal,
        initial_hands=tuple(
            (hand["host_id"], Privilege.parse(hand["privilege"]))
            for hand in game_doc["initial_hands"]
        ),
        step_cost_per_hand=game_doc["step_cost_per_hand"],
        goal_reward=game_doc["goal_reward"],
        noop_cost=game_doc["noop_cost"],
    )
    overrides = tuple(
        sorted((int(key), float(value)) for key, value in doc["catalog_overrides"].items())
    )

    return ScenarioSpec(name=doc["name"], network=network, game=game, catalog_overrides=overrides)


def parse_scenario(
    text: Union[str, bytes], registry: Optional["AbilityRegistry"] = None
) -> ScenarioSpec:
    """Parse and validate a scenario document.

    Parameters
    ----------
    text : str or bytes
        A UTF-8 JSON document following the scenario schema.
    registry : AbilityRegistry, optional (default None)
        The registry used to resolve ``game.action_ids``. Defaults to the
        registry built from all installed plugins.

    Returns
    -------
    ScenarioSpec
        The resolved scenario.

    Raises
    ------
    ScenarioSyntaxError
        If the document is not UTF-8 encoded JSON. Carries the line and column.
    ScenarioSchemaError
        If the document does not follow the schema, including unknown fields.
    ScenarioValidationError
        If ``validate_scenario`` reports any violation.
    """
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as err:
            prefix = text[: err.start].decode("utf-8")
            lineno, colno = _position(prefix, len(prefix))
            raise ScenarioSyntaxError(
                f"Invalid UTF-8 byte 0x{text[err.start]:02x}", lineno, colno
            ) from err
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as err:
        raise ScenarioSyntaxError(err.msg, err.lineno, err.colno) from err
    if not isinstance(raw, dict):
        lineno, colno = _position(text, 0)
        raise ScenarioSyntaxError("Expected a JSON object", lineno, colno)

    validator = CyrangeValidator(schema=SCENARIO_SCHEMA)
    if not validator.validate(raw):
        errors = flatten_errors(validator.errors)
        LOG.error(f"Scenario schema validation failed: {errors}")
        raise ScenarioSchemaError(errors)

    spec = _from_document(validator.document)
    violations = validate_scenario(spec, registry=registry)
    if violations:
        LOG.error(f"Scenario validation failed: {violations}")
        raise ScenarioValidationError(violations)

    return spec


def serialize_scenario(spec: ScenarioSpec) -> str:
    """Render a scenario as a JSON document that ``parse_scenario`` accepts.

    Sets and pairs are written sorted so the output is stable.
    """
    goal = spec.game.goal
    doc = {
        "schema_version": SCHEMA_VERSION,
        "name": spec.name,
        "network": {
            "domain_name": spec.network.domain_name,
            "subnets": list(spec.network.subnets),
            "hosts": [
                {
                    "host_id": host.host_id,
                    "os": host.os.value,
                    "subnet_id": host.subnet_id,
                    "role": host.role.value,
                    "local_users": host.local_users,
                    "has_local_admin_cred": host.has_local_admin_cred,
                    "has_domain_admin_session": host.has_domain_admin_session,
                    "modifiable_service": host.modifiable_service,
                    "target_files": host.target_files,
                    "defenses": sorted(item.value for item in host.defenses),
                }
                for host in spec.network.hosts
            ],
            "firewall_allow": [list(pair) for pair in sorted(spec.network.firewall_allow)],
            "internet_reachable": sorted(spec.network.internet_reachable),
            "traffic_pairs": sorted(sorted(pair) for pair in spec.network.traffic_pairs),
        },
        "game": {
            "action_ids": list(spec.game.action_ids),
            "max_steps": spec.game.max_steps,
            "step_cost_per_hand": spec.game.step_cost_per_hand,
            "goal_reward": spec.game.goal_reward,
            "noop_cost": spec.game.noop_cost,
            "goal": {
                "kind": goal.kind.value,
                "host_id": goal.host_id,
                "privilege": None if goal.privilege is None else goal.privilege.label,
            },
            "initial_hands": [
                {"host_id": host_id, "privilege": privilege.label}
                for host_id, privilege in spec.game.initial_hands
            ],
        },
        "catalog_overrides": {str(aid): prob for aid, prob in spec.catalog_overrides},
    }

    return json.dumps(doc, indent=2) + "\n"


def validate_scenario(
    spec: ScenarioSpec, registry: Optional["AbilityRegistry"] = None
) -> List[str]:
    """Check the semantic rules of a scenario.

    Parameters
    ----------
    spec : ScenarioSpec
        The scenario to check.
    registry : AbilityRegistry, optional (default None)
        The registry used to resolve ability ids.

    Returns
    -------
    list
        One message per violation; empty when the scenario is valid.
    """
    if registry is None:
        from cyrange.catalog import default_registry

        registry = default_registry()

    violations: List[str] = []
    network, game = spec.network, spec.game
    host_ids = [host.host_id for host in network.hosts]
    known = set(host_ids)

    duplicates = sorted({hid for hid in host_ids if host_ids.count(hid) > 1})
    if duplicates:
        violations.append(f"network.hosts: duplicate host_id {duplicates}")
    stray = sorted({h.subnet_id for h in network.hosts} - set(network.subnets))
    if stray:
        violations.append(f"network.hosts: subnet_id not declared in subnets {stray}")
    controllers = [host.host_id for host in network.hosts if host.is_domain_controller]
    if len(controllers) > 1:
        violations.append(
            f"network.hosts: at most one domain_controller allowed, found {controllers}"
        )
    missing = sorted(
        {hid for pair in network.firewall_allow for hid in pair} - known
    )
    if missing:
        violations.append(f"network.firewall_allow: unknown hosts {missing}")
    missing = sorted(set(network.internet_reachable) - known)
    if missing:
        violations.append(f"network.internet_reachable: unknown hosts {missing}")
    missing = sorted({hid for pair in network.traffic_pairs for hid in pair} - known)
    if missing:
        violations.append(f"network.traffic_pairs: unknown hosts {missing}")
    if any(len(pair) != 2 for pair in network.traffic_pairs):
        violations.append("network.traffic_pairs: a pair must name two distinct hosts")

    if not game.action_ids:
        violations.append("game.action_ids: must not be empty")
    unknown = [aid for aid in game.action_ids if aid not in registry]
    if unknown:
        violations.append(f"game.action_ids: unknown ability ids {unknown}")
    if len(set(game.action_ids)) != len(game.action_ids):
        violations.append("game.action_ids: duplicate ability ids")
    if game.max_steps < 1:
        violations.append(f"game.max_steps: must be at least 1, got {game.max_steps}")
    if not game.goal_reward > 0 > game.step_cost_per_hand:
        violations.append(
            "game: goal_reward must be positive and step_cost_per_hand negative"
        )

    goal = game.goal
    if goal.host_id is not None and goal.host_id not in known:
        violations.append(f"game.goal.host_id: unknown host {goal.host_id}")
    if goal.kind is GoalKind.HAND_ON_HOST_WITH_PRIVILEGE and (
        goal.host_id is None or goal.privilege is None
    ):
        violations.append("game.goal: hand_on_host_with_privilege needs host_id and privilege")
    if goal.kind is GoalKind.EXFIL_TARGET_FILE and not any(
        host.target_files for host in network.hosts
    ):
        violations.append("game.goal: exfil_target_file needs a host with target_files")

    hand_hosts = [host_id for host_id, _ in game.initial_hands]
    if not hand_hosts:
        violations.append("game.initial_hands: at least one hand is required")
    if sorted(set(hand_hosts) - known):
        violations.append(
            f"game.initial_hands: unknown hosts {sorted(set(hand_hosts) - known)}"
        )
    if len(set(hand_hosts)) != len(hand_hosts):
        violations.append("game.initial_hands: at most one hand per host")
    if any(privilege is Privilege.NONE for _, privilege in game.initial_hands):
        violations.append("game.initial_hands: privilege must be at least user")

    stray_overrides = [aid for aid, _ in spec.catalog_overrides if aid not in game.action_ids]
    if stray_overrides:
        violations.append(f"catalog_overrides: ids not in the action space {stray_overrides}")
    if any(not 0.0 <= prob <= 1.0 for _, prob in spec.catalog_overrides):
        violations.append("catalog_overrides: probabilities must lie in [0, 1]")

    return violations


def _host(host_id: int, os: str, subnet_id: int, **kwargs) -> HostSpec:
    if "defenses" in kwargs:
        kwargs["defenses"] = frozenset(Defense(item) for item in kwargs["defenses"])
    if "role" in kwargs:
        kwargs["role"] = Role(kwargs["role"])
    return HostSpec(host_id=host_id, os=OperatingSystem(os), subnet_id=subnet_id, **kwargs)


def _pairs(pairs: Sequence[Tuple[int, int]]) -> FrozenSet[FrozenSet[int]]:
    return frozenset(frozenset(pair) for pair in pairs)


def builtin_game1() -> ScenarioSpec:
    """Build the exfiltration game on the four-host network.

    Hosts 1 to 3 run Windows 10 and host 4 runs Ubuntu. The hand starts on host 1
    and the target file sits on host 3, one traffic hop away.
    """
    network = NetworkSpec(
        hosts=(
            _host(1, "windows10", 1, local_users=2),
            _host(2, "windows10", 1, local_users=3),
            _host(3, "windows10", 2, local_users=2, target_files=True),
            _host(4, "ubuntu", 2, local_users=1),
        ),
        subnets=(1, 2),
        firewall_allow=frozenset({(1, 3), (3, 1)}),
        internet_reachable=frozenset({1}),
        traffic_pairs=_pairs([(1, 2), (1, 3), (3, 4)]),
    )
    game = GameConfig(
        action_ids=tuple(range(21, 31)),
        max_steps=100,
        goal=GoalCondition(kind=GoalKind.EXFIL_TARGET_FILE),
        initial_hands=((1, Privilege.USER),),
    )
    return ScenarioSpec(name="game1", network=network, game=game)


def builtin_game2() -> ScenarioSpec:
    """Build the domain-controller game on the nine-host network.

    Hosts 2 and 5 run Ubuntu, host 9 is the Windows Server 2016 domain
    controller and the rest run Windows 10. Host 6 talks to hosts 2 and 3
    through firewall rules and holds a domain administrator session.
    """
    network = NetworkSpec(
        hosts=(
            _host(1, "windows10", 1, local_users=3, defenses=["antivirus"]),
            _host(2, "ubuntu", 1, local_users=2, modifiable_service=True),
            _host(3, "windows10", 2, local_users=4, has_local_admin_cred=True),
            _host(4, "windows10", 2, local_users=3, modifiable_service=True),
            _host(5, "ubuntu", 2, local_users=2),
            _host(
                6,
                "windows10",
                3,
                local_users=5,
                has_domain_admin_session=True,
                modifiable_service=True,
            ),
            _host(
                7,
                "windows10",
                3,
                local_users=3,
                has_local_admin_cred=True,
                defenses=["antivirus"],
            ),
            _host(8, "windows10", 3, local_users=9),
            _host(9, "windows_server_2016", 4, role="domain_controller", local_users=12),
        ),
        subnets=(1, 2, 3, 4),
        firewall_allow=frozenset({(6, 2), (2, 6), (6, 3), (3, 6)}),
        internet_reachable=frozenset({1, 2}),
        traffic_pairs=_pairs(
            [(1, 9), (2, 6), (3, 4), (3, 6), (4, 5), (5, 9), (6, 9), (7, 8), (8, 9)]
        ),
    )
    game = GameConfig(
        action_ids=tuple(range(1, 14)),
        max_steps=300,
        goal=GoalCondition(
            kind=GoalKind.HAND_ON_HOST_WITH_PRIVILEGE,
            host_id=9,
            privilege=Privilege.DOMAIN_ADMIN,
        ),
        initial_hands=((2, Privilege.USER),),
    )
    return ScenarioSpec(name="game2", network=network, game=game)


def deterministic(spec: ScenarioSpec) -> ScenarioSpec:
    """Return a copy in which every action of the game always succeeds."""
    return replace(
        spec, catalog_overrides=tuple((aid, 1.0) for aid in sorted(spec.game.action_ids))
    )


def load_scenario(
    path: Union[str, Path], registry: Optional["AbilityRegistry"] = None
) -> ScenarioSpec:
    """Load a scenario from a file, or a built-in game by name.

    Parameters
    ----------
    path : str or Path
        A path to a JSON document, or ``"game1"`` / ``"game2"``.
    registry : AbilityRegistry, optional (default None)
        The registry used to resolve ability ids.

    Returns
    -------
    ScenarioSpec
        The scenario.
    """
    if str(path) in BUILTIN_NAMES and not Path(path).exists():
        return builtin_game1() if str(path) == "game1" else builtin_game2()
    LOG.debug(f"Loading scenario from {path}")
    return parse_scenario(Path(path).read_bytes(), registry=registry)
