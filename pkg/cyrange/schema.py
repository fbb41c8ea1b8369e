"""Define the Cerberus schemas for scenario documents and hyperparameters."""

from typing import Any, Dict, List, Mapping, Sequence, Union

from cerberus import TypeDefinition, Validator
from packaging.version import InvalidVersion, Version

SCHEMA_VERSION = "1.0"

OS_NAMES = ["windows10", "ubuntu", "windows_server_2016"]
ROLE_NAMES = ["none", "domain_controller", "web_server", "email_server"]
PRIVILEGE_NAMES = ["none", "user", "admin", "domain_admin"]
DEFENSE_NAMES = ["antivirus"]
GOAL_KINDS = ["exfil_target_file", "hand_on_host_with_privilege"]

HOST_SCHEMA = {
    "host_id": {"type": "integer", "required": True, "min": 0},
    "os": {"type": "string", "coerce": "strip", "required": True, "allowed": OS_NAMES},
    "subnet_id": {"type": "integer", "required": True, "min": 0},
    "role": {
        "type": "string",
        "coerce": "strip",
        "allowed": ROLE_NAMES,
        "default": "none",
    },
    "local_users": {"type": "integer", "min": 0, "default": 0},
    "has_local_admin_cred": {"type": "boolean", "default": False},
    "has_domain_admin_session": {"type": "boolean", "default": False},
    "modifiable_service": {"type": "boolean", "default": False},
    "target_files": {"type": "boolean", "default": False},
    "defenses": {
        "type": "list",
        "schema": {"type": "string", "allowed": DEFENSE_NAMES},
        "default": [],
    },
}

HOST_PAIR = {
    "type": "list",
    "items": [{"type": "integer"}, {"type": "integer"}],
}

SCENARIO_SCHEMA = {
    "schema_version": {
        "type": "string",
        "required": True,
        "check_with": "schema_version",
    },
    "name": {"type": "string", "coerce": "strip", "required": True},
    "network": {
        "type": "dict",
        "required": True,
        "schema": {
            "domain_name": {"type": "string", "coerce": "strip", "default": "corp.local"},
            "subnets": {
                "type": "list",
                "required": True,
                "schema": {"type": "integer", "min": 0},
            },
            "hosts": {
                "type": "list",
                "required": True,
                "minlength": 1,
                "schema": {"type": "dict", "schema": HOST_SCHEMA},
            },
            "firewall_allow": {"type": "list", "schema": HOST_PAIR, "default": []},
            "internet_reachable": {
                "type": "list",
                "schema": {"type": "integer"},
                "default": [],
            },
            "traffic_pairs": {"type": "list", "schema": HOST_PAIR, "default": []},
        },
    },
    "game": {
        "type": "dict",
        "required": True,
        "schema": {
            "action_ids": {
                "type": "list",
                "required": True,
                "schema": {"type": "integer"},
            },
            "max_steps": {"type": "integer", "required": True},
            "step_cost_per_hand": {"type": "integer", "default": -1},
            "goal_reward": {"type": "integer", "default": 99},
            "noop_cost": {"type": "integer", "default": -1},
            "goal": {
                "type": "dict",
                "required": True,
                "schema": {
                    "kind": {"type": "string", "required": True, "allowed": GOAL_KINDS},
                    "host_id": {"type": "integer", "nullable": True, "default": None},
                    "privilege": {
                        "type": "string",
                        "nullable": True,
                        "allowed": PRIVILEGE_NAMES,
                        "default": None,
                    },
                },
            },
            "initial_hands": {
                "type": "list",
                "required": True,
                "schema": {
                    "type": "dict",
                    "schema": {
                        "host_id": {"type": "integer", "required": True},
                        "privilege": {
                            "type": "string",
                            "allowed": PRIVILEGE_NAMES,
                            "default": "user",
                        },
                    },
                },
            },
        },
    },
    "catalog_overrides": {
        "type": "dict",
        "keysrules": {"type": "string", "regex": "^[0-9]+$"},
        "valuesrules": {"type": "number", "min": 0.0, "max": 1.0},
        "default": {},
    },
}

DQN_SCHEMA = {
    "hidden": {
        "type": "list",
        "coerce": "intlist",
        "schema": {"type": "integer", "min": 1},
        "minlength": 1,
    },
    "gamma": {"type": "float", "coerce": float, "min": 0.0, "max": 1.0},
    "learning_rate": {"type": "float", "coerce": float, "min": 0.0},
    "replay_capacity": {"type": "integer", "coerce": int, "min": 1},
    "batch_size": {"type": "integer", "coerce": int, "min": 1},
    "warmup": {"type": "integer", "coerce": int, "min": 1},
    "target_update": {"type": "integer", "coerce": int, "min": 1},
    "epsilon_start": {"type": "float", "coerce": float, "min": 0.0, "max": 1.0},
    "epsilon_end": {"type": "float", "coerce": float, "min": 0.0, "max": 1.0},
    "epsilon_decay_steps": {"type": "integer", "coerce": int, "min": 1},
    "reward_scale": {"type": "float", "coerce": float, "min": 0.0},
    "grad_clip": {"type": "float", "coerce": float, "min": 0.0},
    "report_interval": {"type": "integer", "coerce": int, "min": 1},
    "eval_interval": {"type": "integer", "coerce": int, "min": 1},
    "eval_episodes": {"type": "integer", "coerce": int, "min": 1},
    "seed": {"type": "integer", "coerce": int},
}

CE_SCHEMA = {
    "hidden": DQN_SCHEMA["hidden"],
    "learning_rate": DQN_SCHEMA["learning_rate"],
    "batch_size": {"type": "integer", "coerce": int, "min": 2},
    "elite_percentile": {"type": "float", "coerce": float, "min": 0.0, "max": 100.0},
    "fit_steps": {"type": "integer", "coerce": int, "min": 1},
    "eval_every": {"type": "integer", "coerce": int, "min": 1},
    "eval_episodes": {"type": "integer", "coerce": int, "min": 1},
    "parallel_envs": {"type": "integer", "coerce": int, "min": 1},
    "seed": {"type": "integer", "coerce": int},
}


class CyrangeValidator(Validator):
    """Custom validator for scenario documents and hyperparameter tables."""

    types_mapping = Validator.types_mapping.copy()
    # JSON booleans are not counts
    types_mapping["integer"] = TypeDefinition("integer", (int,), (bool,))

    def _normalize_coerce_strip(self, value: str) -> str:
        """Remove leading and trailing spaces.

        Parameters
        ----------
        value : str
            The original value for the field.

        Returns
        -------
        str
            The stripped string.
        """
        return value.strip() if isinstance(value, str) else value

    def _normalize_coerce_intlist(self, value: Union[str, Sequence]) -> List:
        """Coerce ``"64,64"`` or a sequence into a list of integers.

        Parameters
        ----------
        value : str or sequence
            The original value for the field.

        Returns
        -------
        list
            The list of integers.
        """
        if isinstance(value, str):
            return [int(part) for part in value.split(",") if part.strip()]
        return [int(part) for part in value]

    def _check_with_schema_version(self, field: str, value: str):
        """Reject documents written for an incompatible schema major version."""
        try:
            version = Version(value)
        except InvalidVersion:
            self._error(field, f"not a version string: {value!r}")
            return
        if version.major != Version(SCHEMA_VERSION).major:
            self._error(
                field,
                f"unsupported schema version {value}; expected {SCHEMA_VERSION}",
            )


def flatten_errors(errors: Mapping[Any, Any], prefix: str = "") -> List[str]:
    """Flatten a Cerberus error tree into ``"field.path: message"`` strings.

    Parameters
    ----------
    errors : dict
        The ``errors`` attribute of a validator.
    prefix : str, optional (default "")
        The path of the enclosing document.

    Returns
    -------
    list
        One entry per leaf error, sorted.
    """
    flat: List[str] = []
    for field, messages in errors.items():
        path = f"{prefix}.{field}" if prefix else str(field)
        for message in messages:
            if isinstance(message, dict):
                flat.extend(flatten_errors(message, path))
            else:
                flat.append(f"{path}: {message}")

    return sorted(flat)


def normalize_hyperparameters(
    schema: Dict[str, Dict], values: Mapping[str, Any]
) -> Dict[str, Any]:
    """Validate and coerce a hyperparameter mapping.

    Parameters
    ----------
    schema : dict
        ``DQN_SCHEMA`` or ``CE_SCHEMA``.
    values : dict
        Raw values (strings from the command line are coerced).

    Returns
    -------
    dict
        The normalized mapping.

    Raises
    ------
    ValueError
        If the mapping does not validate.
    """
    validator = CyrangeValidator(schema=schema)
    if not validator.validate(dict(values)):
        raise ValueError(
            "Invalid hyperparameters: " + "; ".join(flatten_errors(validator.errors))
        )

    return validator.document
