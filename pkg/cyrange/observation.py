"""Encode the fact database into the fixed-shape observation matrix."""

import math
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, List, NamedTuple, Optional, Tuple

import numpy as np

from cyrange.scenario import OperatingSystem, Role, ScenarioSpec
from cyrange.state import FactDB, FactKind, WorldState
from cyrange.utils import format_csv


class ObservationError(ValueError):
    """The fact database cannot be encoded with the layout."""


class ObsCategory(str, Enum):
    """The ten kinds of host knowledge an observation reports."""

    HAND = "hand"
    USERS_AND_CREDENTIALS = "users_and_credentials"
    HOST_TYPE = "host_type"
    MODIFIABLE_SERVICE = "modifiable_service"
    FILES_AND_SHARES = "files_and_shares"
    DEFENSES = "defenses"
    NETWORK_INFO = "network_info"
    SYSTEM_INFO = "system_info"
    REMOTE_INFO = "remote_info"
    ACTION_OUTCOME = "action_outcome"


@dataclass(frozen=True)
class ColumnSpec:
    """One observation column; cells take values ``0 .. cardinality - 1``."""

    name: str
    category: ObsCategory
    cardinality: int
    description: str = ""

    def __post_init__(self):
        if self.cardinality < 2:
            raise ValueError(f"Column {self.name}: cardinality must be at least 2")


@dataclass(frozen=True)
class ObservationLayout:
    """Columns and row budget of the observation matrix.

    Row 0 is the network row; rows ``1 .. max_host_rows`` hold hosts in the
    order they were first discovered.
    """

    columns: Tuple[ColumnSpec, ...]
    max_host_rows: int = 16

    def __post_init__(self):
        if self.max_host_rows < 1:
            raise ValueError("max_host_rows must be positive")
        if not self.columns:
            raise ValueError("A layout needs at least one column")

    @property
    def n_columns(self) -> int:
        return len(self.columns)

    @property
    def shape(self) -> Tuple[int, int]:
        return (1 + self.max_host_rows, self.n_columns)

    @property
    def cardinalities(self) -> Tuple[int, ...]:
        return tuple(column.cardinality for column in self.columns)

    def missing_categories(self) -> List[ObsCategory]:
        present = {column.category for column in self.columns}
        return [category for category in ObsCategory if category not in present]

    def check_scenario(self, spec: ScenarioSpec) -> None:
        """Raise if the scenario could discover more hosts than there are rows."""
        if len(spec.network.hosts) > self.max_host_rows:
            raise ObservationError(
                f"Scenario {spec.name} has {len(spec.network.hosts)} hosts but the "
                f"layout only has {self.max_host_rows} host rows; enlarge max_host_rows"
            )


USERS_CAP = 7

NETWORK_FLAGS = (
    FactKind.DOMAIN_NAME,
    FactKind.DOMAIN_USER_CRED,
    FactKind.DOMAIN_ADMIN_CRED,
    FactKind.EMAIL_SERVER,
    FactKind.ORG_INFO,
)


def default_layout(max_host_rows: int = 16) -> ObservationLayout:
    """The 13-column layout covering all ten categories."""
    cat = ObsCategory
    columns = (
        ColumnSpec("hand_present", cat.HAND, 2, "a hand is on the host"),
        ColumnSpec("hand_privilege", cat.HAND, 4, "0 none, 1 user, 2 admin, 3 domain admin"),
        ColumnSpec(
            "local_users_found",
            cat.USERS_AND_CREDENTIALS,
            USERS_CAP + 1,
            f"local user names found, capped at {USERS_CAP}",
        ),
        ColumnSpec("local_cred_found", cat.USERS_AND_CREDENTIALS, 2, "a local credential"),
        ColumnSpec("os_known", cat.HOST_TYPE, 3, "0 unknown, 1 windows, 2 linux"),
        ColumnSpec("role_known", cat.HOST_TYPE, 3, "0 unknown, 1 domain controller, 2 other server"),
        ColumnSpec("modifiable_service_found", cat.MODIFIABLE_SERVICE, 2),
        ColumnSpec("files_shares_found", cat.FILES_AND_SHARES, 2),
        ColumnSpec("defense_seen", cat.DEFENSES, 2),
        ColumnSpec("network_info_found", cat.NETWORK_INFO, 2),
        ColumnSpec("system_info_found", cat.SYSTEM_INFO, 2),
        ColumnSpec("remote_info_found", cat.REMOTE_INFO, 2),
        ColumnSpec(
            "last_action_succeeded",
            cat.ACTION_OUTCOME,
            2,
            "the previous step succeeded on the host",
        ),
    )
    return ObservationLayout(columns=columns, max_host_rows=max_host_rows)


def _os_code(facts: FactDB, host_id: int) -> int:
    families = {
        OperatingSystem(fact.value).family
        for fact in facts.facts_on(host_id)
        if fact.kind is FactKind.OS
    }
    if "windows" in families:
        return 1
    return 2 if "linux" in families else 0


def _role_code(facts: FactDB, host_id: int) -> int:
    roles = {Role(f.value) for f in facts.facts_on(host_id) if f.kind is FactKind.ROLE}
    if Role.DOMAIN_CONTROLLER in roles:
        return 1
    return 2 if roles - {Role.NONE} else 0


def _flag(kind: FactKind) -> Callable[[FactDB, int], int]:
    return lambda facts, host_id: int(facts.has(kind, host_id))


HOST_ENCODERS: Dict[str, Callable[[FactDB, int], int]] = {
    "hand_present": _flag(FactKind.HAND),
    "hand_privilege": lambda facts, host_id: int(facts.privilege_on(host_id)),
    "local_users_found": lambda facts, host_id: facts.count(FactKind.LOCAL_USER, host_id),
    "local_cred_found": _flag(FactKind.LOCAL_CRED),
    "os_known": _os_code,
    "role_known": _role_code,
    "modifiable_service_found": _flag(FactKind.MODIFIABLE_SERVICE),
    "files_shares_found": _flag(FactKind.FILE),
    "defense_seen": _flag(FactKind.DEFENSE),
    "network_info_found": _flag(FactKind.NETWORK),
    "system_info_found": _flag(FactKind.SYSTEM),
    "remote_info_found": _flag(FactKind.REMOTE),
    "last_action_succeeded": lambda facts, host_id: int(facts.outcome_on(host_id) is True),
}


def _network_row(facts: FactDB, layout: ObservationLayout) -> np.ndarray:
    if layout.n_columns < len(NETWORK_FLAGS):
        raise ObservationError(
            f"The network row needs {len(NETWORK_FLAGS)} columns, layout has {layout.n_columns}"
        )
    row = np.zeros(layout.n_columns, dtype=np.int64)
    for idx, kind in enumerate(NETWORK_FLAGS):
        row[idx] = int(facts.has(kind))
    return row


def _host_row(facts: FactDB, host_id: int, layout: ObservationLayout) -> np.ndarray:
    row = np.zeros(layout.n_columns, dtype=np.int64)
    for idx, column in enumerate(layout.columns):
        try:
            encoder = HOST_ENCODERS[column.name]
        except KeyError:
            raise ObservationError(f"No encoder for column {column.name!r}") from None
        row[idx] = min(encoder(facts, host_id), column.cardinality - 1)
    return row


def _check_rows(facts: FactDB, layout: ObservationLayout) -> None:
    if len(facts.hosts) > layout.max_host_rows:
        raise ObservationError(
            f"{len(facts.hosts)} discovered hosts exceed max_host_rows="
            f"{layout.max_host_rows}; enlarge the layout"
        )


def encode_full(
    facts: FactDB,
    world: Optional[WorldState] = None,
    layout: Optional[ObservationLayout] = None,
) -> np.ndarray:
    """Encode the whole fact database.

    Cells hold presence codes and capped counts only; raw values never reach
    the matrix. Host rows follow first-discovery order, so row positions say
    nothing about host ids or the size of the network.

    Parameters
    ----------
    facts : FactDB
        The fact database.
    world : WorldState, optional (default None)
        When given, every live hand must be reflected in the facts.
    layout : ObservationLayout, optional (default None)
        Defaults to ``default_layout()``.

    Returns
    -------
    np.ndarray
        Integer matrix of shape ``layout.shape``.

    Raises
    ------
    ObservationError
        If more hosts are discovered than the layout has rows, or if the hands
        disagree with the facts.
    """
    layout = default_layout() if layout is None else layout
    _check_rows(facts, layout)
    if world is not None:
        for hand in world.live_hands:
            if facts.privilege_on(hand.host_id) < hand.privilege:
                raise ObservationError(
                    f"Hand {hand.hand_id} on host {hand.host_id} is not reflected in the facts"
                )

    obs = np.zeros(layout.shape, dtype=np.int64)
    obs[0] = _network_row(facts, layout)
    for slot, host_id in enumerate(facts.discovery_order(), start=1):
        obs[slot] = _host_row(facts, host_id, layout)
    return obs


class RowDelta(NamedTuple):
    """A changed row: ``row`` 0 is the network row, ``row`` k the k-th discovered host."""

    row: int
    values: np.ndarray

    @property
    def is_network(self) -> bool:
        return self.row == 0


def encode_delta(
    facts_before: FactDB,
    facts_after: FactDB,
    layout: Optional[ObservationLayout] = None,
) -> List[RowDelta]:
    """Encode only the rows whose encoding changed between two databases.

    Raises
    ------
    ObservationError
        If ``facts_before`` is not contained in ``facts_after`` or the discovery
        order was rewritten.
    """
    layout = default_layout() if layout is None else layout
    before_order = facts_before.discovery_order()
    after_order = facts_after.discovery_order()
    if (
        not facts_before.issubset(facts_after)
        or after_order[: len(before_order)] != before_order
    ):
        raise ObservationError("Facts shrank between observations")
    _check_rows(facts_after, layout)

    rows: List[RowDelta] = []
    net_before = _network_row(facts_before, layout)
    net_after = _network_row(facts_after, layout)
    if not np.array_equal(net_before, net_after):
        rows.append(RowDelta(0, net_after))
    for slot, host_id in enumerate(after_order, start=1):
        after = _host_row(facts_after, host_id, layout)
        if host_id in before_order:
            if np.array_equal(_host_row(facts_before, host_id, layout), after):
                continue
        rows.append(RowDelta(slot, after))
    return rows


def apply_delta(obs: np.ndarray, delta: List[RowDelta]) -> np.ndarray:
    """Overlay delta rows on a previous observation."""
    updated = obs.copy()
    for row in delta:
        updated[row.row] = row.values
    return updated


def obs_space_size(layout: ObservationLayout, rows: int) -> int:
    """Number of distinct observations with ``rows`` rows.

    Computed exactly in integer arithmetic as the product over cardinalities
    ``n`` of ``n ** C_n`` (``C_n`` columns have ``n`` values), raised to the
    number of rows. The network row counts as a row.
    """
    if rows < 1:
        raise ValueError("rows must be positive")
    counts = Counter(layout.cardinalities)
    per_row = math.prod(n**c_n for n, c_n in counts.items() if n >= 2)
    return per_row**rows


def observation_to_csv(obs: np.ndarray, layout: Optional[ObservationLayout] = None) -> str:
    """Dump an observation as CSV with a header naming the columns.

    Rows are tagged ``network`` and ``host1``, ``host2``, ... by discovery slot.
    """
    layout = default_layout() if layout is None else layout
    header = ["row"] + [column.name for column in layout.columns]
    tags = ["network"] + [f"host{slot}" for slot in range(1, obs.shape[0])]
    return format_csv(header, ([tag] + [int(v) for v in row] for tag, row in zip(tags, obs)))
