from unittest.mock import patch

import pytest

from cyrange.agents import Rollout
from cyrange.oracle import bfs_oracle
from cyrange.report import actions_table, eval_table, hosts_table, layout_table, oracle_table


@patch("cyrange.report.tabulate", autospec=True)
def test_hosts_table(mock_tabulate, game2):
    """Test hosts_table function"""
    expected_headers = [
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
    hosts_table(game2)

    rows = mock_tabulate.call_args[0][0]
    assert mock_tabulate.call_args[1] == {"headers": expected_headers, "tablefmt": "rst"}
    assert len(rows) == 9
    assert rows[0] == [1, "10.0.1.1", "windows10", 1, "none", 3, "", "", "", "", "antivirus", "yes"]
    assert rows[8][4] == "domain_controller"

    hosts_table(game2, output_type="github")
    assert mock_tabulate.call_args[1]["tablefmt"] == "github"

    with pytest.raises(ValueError):
        hosts_table(game2, output_type="bad")


@patch("cyrange.report.tabulate", autospec=True)
def test_actions_table(mock_tabulate, game2):
    """Test that actions are grouped by tactic in index order."""
    actions_table(game2)

    rows = mock_tabulate.call_args[0][0]
    assert mock_tabulate.call_args[1]["headers"] == [
        "Tactic", "Index", "Id", "Name", "Technique", "Success", "Goal"
    ]
    assert [row[2] for row in rows] == [1, 2, 3, 7, 5, 6, 4, 8, 9, 10, 11, 12, 13]
    assert [row[0] for row in rows[:5]] == ["discovery", "", "", "", "credential_access"]
    assert rows[5][5] == "0.60 (x0.5 with antivirus)"
    assert rows[11][6] == "yes"
    assert [row[2] for row in rows if row[6] == "yes"] == [12]


@patch("cyrange.report.tabulate", autospec=True)
def test_actions_table_overrides(mock_tabulate, det_game1):
    """Test that overridden success probabilities are marked."""
    actions_table(det_game1)

    rows = mock_tabulate.call_args[0][0]
    assert {row[5] for row in rows} == {"1.00 (fixed)"}


def test_layout_table():
    """Test the observation layout table."""
    lines = layout_table(output_type="github").splitlines()

    assert len(lines) == 2 + 13
    assert "hand_present" in lines[2]
    assert "local_users_found" in lines[4] and "capped at 7" in lines[4]


@patch("cyrange.report.tabulate", autospec=True, return_value="table")
def test_eval_table(mock_tabulate, game1):
    """Test the evaluation summary and the plan of the first episode."""
    rollout = Rollout(95.5, 0.5, [96, 95], [[4, 5, 6, 7], [4, 4, 5, 6, 7]], [])

    assert eval_table(game1, rollout) == "table\n\ntable"

    summary, plan = mock_tabulate.call_args_list
    assert summary[0][0] == [[2, "95.50", "0.50", 95, 96]]
    assert summary[1]["headers"] == ["Episodes", "Mean return", "Std return", "Min", "Max"]
    assert plan[0][0] == [
        [1, 25, "data_from_network_shared_drive"],
        [2, 26, "remote_data_staging"],
        [3, 27, "archive_via_utility"],
        [4, 28, "exfil_over_c2_channel"],
    ]


@patch("cyrange.report.tabulate", autospec=True)
def test_oracle_table(mock_tabulate, game1):
    """Test the oracle plan table."""
    oracle_table(game1, bfs_oracle(game1), output_type="github")

    mock_tabulate.assert_called_with(
        [
            (1, 25, "data_from_network_shared_drive"),
            (2, 26, "remote_data_staging"),
            (3, 27, "archive_via_utility"),
            (4, 28, "exfil_over_c2_channel"),
        ],
        headers=["Step", "Id", "Ability"],
        tablefmt="github",
    )
