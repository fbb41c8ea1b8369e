"""Hook specifications for cyrange."""

from typing import TYPE_CHECKING, Dict, List

import pluggy

if TYPE_CHECKING:
    from cyrange.agents import TrainReport
    from cyrange.catalog import AbilitySpec

hookspec = pluggy.HookspecMarker("cyrange")


@hookspec
def register_abilities() -> "List[AbilitySpec]":
    """Contribute abilities to the registry.

    Results from every plugin are merged; an ability id registered by two
    plugins is an error.

    Returns
    -------
    list
        The ``AbilitySpec`` objects this plugin provides.
    """


@hookspec
def pre_run_hook(manifest: Dict):
    """Pre-training hook.

    Called by ``cyrange train`` once ``manifest.json`` is written and before the
    first environment step.

    Parameters
    ----------
    manifest : dict
        The run manifest.
    """


@hookspec
def post_run_hook(report: "TrainReport", manifest: Dict):
    """Post-training hook.

    For executing code after every training output has been written.

    Parameters
    ----------
    report : TrainReport
        The training report.
    manifest : dict
        The run manifest, including end timestamp and output paths.
    """
