"""Generate rST or GitHub tables."""

from itertools import groupby
from typing import List, Optional

from tabulate import tabulate

from cyrange.agents import Rollout
from cyrange.catalog import AbilityRegistry, catalog_for_game
from cyrange.observation import ObservationLayout, default_layout
from cyrange.oracle import OracleResult, describe_plan
from cyrange.scenario import ScenarioSpec

VALID_OUTPUTS = ["rst", "github"]


def _check_output(output_type: str) -> None:
    if output_type not in VALID_OUTPUTS:
        raise ValueError(f"Invalid output_type provided: {output_type}")


def _yes(flag: bool) -> str:
    return "yes" if flag else ""


def hosts_table(spec: ScenarioSpec, output_type: str = "rst") -> str:
    """Ground truth of every host, one row each.

    Parameters
    ----------
    spec : ScenarioSpec
        The scenario.
    output_type : str
        A valid output type of ``rst`` or ``github``

    Returns
    -------
    str
        The table.
    """
    _check_output(output_type)
    network = spec.network
    headers = [
        "Host",
        "Address",
        "OS",
        "Subnet",
        "Role",
        "Local users",
        "Local admin cred",
        "Domain admin session",
        "Modifiable service",
        "Target files",
        "Defenses",
        "Internet",
    ]
    rows = [
        [
            host.host_id,
            host.address,
            host.os.value,
            host.subnet_id,
            host.role.value,
            host.local_users,
            _yes(host.has_local_admin_cred),
            _yes(host.has_domain_admin_session),
            _yes(host.modifiable_service),
            _yes(host.target_files),
            ", ".join(sorted(defense.value for defense in host.defenses)),
            _yes(host.host_id in network.internet_reachable),
        ]
        for host in network.hosts
    ]
    return tabulate(rows, headers=headers, tablefmt=output_type)


def actions_table(
    spec: ScenarioSpec,
    registry: Optional[AbilityRegistry] = None,
    output_type: str = "rst",
) -> str:
    """The game's action space grouped by tactic.

    Within a tactic, actions keep their action-index order.
    """
    _check_output(output_type)
    headers = ["Tactic", "Index", "Id", "Name", "Technique", "Success", "Goal"]
    indexed = sorted(
        enumerate(catalog_for_game(spec, registry)),
        key=lambda pair: (list(type(pair[1].tactic)).index(pair[1].tactic), pair[0]),
    )
    rows: List[List] = []
    for tactic, group in groupby(indexed, key=lambda pair: pair[1].tactic):
        for position, (index, ability) in enumerate(group):
            override = spec.override_for(ability.ability_id)
            rows.append(
                [
                    tactic.value if position == 0 else "",
                    index,
                    ability.ability_id,
                    ability.name,
                    ability.technique,
                    f"{override:.2f} (fixed)" if override is not None else ability.describe_success(),
                    _yes(ability.can_satisfy(spec.game.goal)),
                ]
            )
    return tabulate(rows, headers=headers, tablefmt=output_type)


def layout_table(layout: Optional[ObservationLayout] = None, output_type: str = "rst") -> str:
    """Observation columns with their categories and cardinalities."""
    _check_output(output_type)
    layout = default_layout() if layout is None else layout
    headers = ["Column", "Name", "Category", "Cardinality", "Meaning"]
    rows = [
        [idx, column.name, column.category.value, column.cardinality, column.description]
        for idx, column in enumerate(layout.columns)
    ]
    return tabulate(rows, headers=headers, tablefmt=output_type)


def eval_table(
    spec: ScenarioSpec,
    rollout: Rollout,
    registry: Optional[AbilityRegistry] = None,
    output_type: str = "rst",
) -> str:
    """Summary of a greedy evaluation and the plan of its first episode."""
    _check_output(output_type)
    catalog = catalog_for_game(spec, registry)
    stats = [
        len(rollout.returns),
        f"{rollout.mean_return:.2f}",
        f"{rollout.std_return:.2f}",
        min(rollout.returns),
        max(rollout.returns),
    ]
    summary = tabulate(
        [stats],
        headers=["Episodes", "Mean return", "Std return", "Min", "Max"],
        tablefmt=output_type,
    )
    plan = tabulate(
        [
            [step, catalog[index].ability_id, catalog[index].name]
            for step, index in enumerate(rollout.trajectories[0], start=1)
        ],
        headers=["Step", "Id", "Ability"],
        tablefmt=output_type,
    )
    return f"{summary}\n\n{plan}"


def oracle_table(
    spec: ScenarioSpec,
    result: OracleResult,
    registry: Optional[AbilityRegistry] = None,
    output_type: str = "rst",
) -> str:
    """The oracle's plan, one row per step."""
    _check_output(output_type)
    return tabulate(
        describe_plan(spec, result, registry),
        headers=["Step", "Id", "Ability"],
        tablefmt=output_type,
    )
