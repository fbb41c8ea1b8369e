"""Test the scenario and hyperparameter schemas."""

import pytest

from cyrange.schema import (
    CE_SCHEMA,
    DQN_SCHEMA,
    SCENARIO_SCHEMA,
    CyrangeValidator,
    flatten_errors,
    normalize_hyperparameters,
)

MINIMAL = {
    "schema_version": "1.0",
    "name": " tiny ",
    "network": {
        "subnets": [1],
        "hosts": [{"host_id": 1, "os": "windows10", "subnet_id": 1, "target_files": True}],
    },
    "game": {
        "action_ids": [23, 26, 27, 28],
        "max_steps": 10,
        "goal": {"kind": "exfil_target_file"},
        "initial_hands": [{"host_id": 1}],
    },
}


def test_minimal_document_defaults():
    """Test that omitted fields get their defaults."""
    validator = CyrangeValidator(schema=SCENARIO_SCHEMA)

    assert validator.validate(MINIMAL)

    doc = validator.document
    assert doc["name"] == "tiny"
    assert doc["network"]["domain_name"] == "corp.local"
    assert doc["network"]["firewall_allow"] == []
    assert doc["network"]["hosts"][0]["role"] == "none"
    assert doc["network"]["hosts"][0]["defenses"] == []
    assert doc["game"]["step_cost_per_hand"] == -1
    assert doc["game"]["goal_reward"] == 99
    assert doc["game"]["noop_cost"] == -1
    assert doc["game"]["goal"]["host_id"] is None
    assert doc["game"]["initial_hands"] == [{"host_id": 1, "privilege": "user"}]
    assert doc["catalog_overrides"] == {}


def test_unknown_field_rejected():
    """Test that unknown fields are rejected at any depth."""
    validator = CyrangeValidator(schema=SCENARIO_SCHEMA)
    doc = {**MINIMAL, "network": {**MINIMAL["network"], "vlan": 3}}

    assert not validator.validate(doc)
    assert flatten_errors(validator.errors) == ["network.vlan: unknown field"]


@pytest.mark.parametrize(
    "section, field",
    [("game", "max_steps"), ("game", "goal_reward"), ("network", "subnets")],
)
def test_booleans_are_not_integers(section, field):
    """Test that JSON booleans are rejected where integers are expected."""
    validator = CyrangeValidator(schema=SCENARIO_SCHEMA)
    value = [True] if field == "subnets" else True
    doc = {**MINIMAL, section: {**MINIMAL[section], field: value}}

    assert not validator.validate(doc)
    assert any("must be of integer type" in error for error in flatten_errors(validator.errors))


@pytest.mark.parametrize(
    "version, valid", [("1.0", True), ("1.3", True), ("2.0", False), ("banana", False)]
)
def test_schema_version(version, valid):
    """Test the major-version compatibility check."""
    validator = CyrangeValidator(schema=SCENARIO_SCHEMA)

    assert validator.validate({**MINIMAL, "schema_version": version}) is valid
    if not valid:
        assert "schema_version" in validator.errors


def test_override_probability_range():
    """Test the bounds of catalog overrides."""
    validator = CyrangeValidator(schema=SCENARIO_SCHEMA)

    assert validator.validate({**MINIMAL, "catalog_overrides": {"28": 0.5}})
    assert not validator.validate({**MINIMAL, "catalog_overrides": {"28": 1.5}})
    assert not validator.validate({**MINIMAL, "catalog_overrides": {"abc": 0.5}})


def test_flatten_errors():
    """Test flattening a nested error tree."""
    errors = {
        "game": [{"max_steps": ["must be of integer type"], "goal": [{"kind": ["required field"]}]}],
        "name": ["required field"],
    }

    assert flatten_errors(errors) == [
        "game.goal.kind: required field",
        "game.max_steps: must be of integer type",
        "name: required field",
    ]


def test_normalize_hyperparameters():
    """Test coercing command-line strings."""
    doc = normalize_hyperparameters(
        DQN_SCHEMA, {"hidden": "32, 16", "gamma": "0.9", "batch_size": "8"}
    )

    assert doc == {"hidden": [32, 16], "gamma": 0.9, "batch_size": 8}


def test_normalize_hyperparameters_errors():
    """Test unknown keys and out-of-range values."""
    with pytest.raises(ValueError, match="Invalid hyperparameters"):
        normalize_hyperparameters(DQN_SCHEMA, {"gama": 0.9})
    with pytest.raises(ValueError, match="gamma"):
        normalize_hyperparameters(DQN_SCHEMA, {"gamma": 1.5})
    with pytest.raises(ValueError, match="batch_size"):
        normalize_hyperparameters(CE_SCHEMA, {"batch_size": 1})
