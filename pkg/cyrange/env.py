"""Environment facade consumed by the trainers and by external RL code."""

from concurrent.futures import ThreadPoolExecutor
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import gymnasium as gym
import numpy as np
from gymnasium import spaces

from cyrange.catalog import AbilityRegistry
from cyrange.engine import SEED_MASK, Engine, StepResult
from cyrange.logger import get_logger
from cyrange.observation import ObservationLayout, default_layout, observation_to_csv
from cyrange.scenario import ScenarioSpec, load_scenario

LOG = get_logger(__name__)

# seed bases of vectorized handles are this far apart
VECTOR_SEED_STRIDE = 1 << 32


def episode_seed(seed_base: int, episode: int) -> int:
    """Seed of the ``episode``-th reset of a handle: ``seed_base + episode``."""
    return (seed_base + episode) & SEED_MASK


class EnvHandle:
    """An engine plus episode bookkeeping.

    The n-th call to ``reset`` (counting from 0) seeds the engine with
    ``episode_seed(seed_base, n)``. ``step`` returns the engine's result
    untouched.

    Parameters
    ----------
    spec : ScenarioSpec
        The scenario.
    layout : ObservationLayout, optional (default None)
        Observation layout; defaults to ``default_layout()``.
    seed : int, optional (default 0)
        Base seed of the episode seeds.
    registry : AbilityRegistry, optional (default None)
        Ability registry.
    delta : bool, optional (default False)
        Emit delta observations in ``info``.
    action_mask : bool, optional (default False)
        Emit the eligible-action mask in ``info``.
    """

    def __init__(
        self,
        spec: ScenarioSpec,
        layout: Optional[ObservationLayout] = None,
        seed: int = 0,
        registry: Optional[AbilityRegistry] = None,
        delta: bool = False,
        action_mask: bool = False,
    ):
        self.engine = Engine(
            spec,
            registry=registry,
            layout=layout,
            emit_delta=delta,
            emit_action_mask=action_mask,
        )
        self.layout = self.engine.layout
        self.registry = registry
        self.seed_base = seed
        self.episode_counter = 0

    @property
    def spec(self) -> ScenarioSpec:
        return self.engine.scenario

    @property
    def action_count(self) -> int:
        return self.engine.action_count

    @property
    def observation_shape(self) -> Tuple[int, int]:
        return self.layout.shape

    @property
    def done(self) -> bool:
        return self.engine.done

    def reset(self) -> np.ndarray:
        seed = episode_seed(self.seed_base, self.episode_counter)
        self.episode_counter += 1
        return self.engine.reset(seed)

    def step(self, action_index: int) -> StepResult:
        return self.engine.step(action_index)


def make_env(
    spec: ScenarioSpec,
    layout: Optional[ObservationLayout] = None,
    seed: int = 0,
    registry: Optional[AbilityRegistry] = None,
    delta: bool = False,
    action_mask: bool = False,
) -> EnvHandle:
    """Build an environment handle; see ``EnvHandle``."""
    return EnvHandle(
        spec, layout=layout, seed=seed, registry=registry, delta=delta, action_mask=action_mask
    )


def env_reset(handle: EnvHandle) -> np.ndarray:
    return handle.reset()


def env_step(handle: EnvHandle, action_index: int) -> StepResult:
    return handle.step(action_index)


class VectorEnv:
    """Independent handles reset and stepped in lockstep on a thread pool.

    Parameters
    ----------
    handles : sequence of EnvHandle
        The handles; the vector owns them from now on.
    """

    def __init__(self, handles: Sequence[EnvHandle]):
        if not handles:
            raise ValueError("A VectorEnv needs at least one handle")
        self.handles = list(handles)
        self._pool = ThreadPoolExecutor(
            max_workers=len(self.handles), thread_name_prefix="cyrange-env"
        )

    @classmethod
    def from_spec(
        cls,
        spec: ScenarioSpec,
        num_envs: int,
        layout: Optional[ObservationLayout] = None,
        seed: int = 0,
        registry: Optional[AbilityRegistry] = None,
    ) -> "VectorEnv":
        """Build ``num_envs`` handles; handle ``i`` has base seed ``seed + i * VECTOR_SEED_STRIDE``."""
        if num_envs < 1:
            raise ValueError("num_envs must be at least 1")
        return cls(
            [
                make_env(spec, layout=layout, seed=seed + i * VECTOR_SEED_STRIDE, registry=registry)
                for i in range(num_envs)
            ]
        )

    def __len__(self) -> int:
        return len(self.handles)

    def __enter__(self) -> "VectorEnv":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    @property
    def action_count(self) -> int:
        return self.handles[0].action_count

    @property
    def observation_shape(self) -> Tuple[int, int]:
        return self.handles[0].observation_shape

    def reset(self) -> np.ndarray:
        """Reset every handle; returns observations stacked on axis 0."""
        return np.stack(list(self._pool.map(EnvHandle.reset, self.handles)))

    def step(self, actions: Sequence[Optional[int]]) -> List[Optional[StepResult]]:
        """Step each handle with its action; ``None`` leaves a handle idle."""
        if len(actions) != len(self.handles):
            raise ValueError(f"Expected {len(self.handles)} actions, got {len(actions)}")

        def _step(pair):
            handle, action = pair
            return None if action is None else handle.step(action)

        return list(self._pool.map(_step, zip(self.handles, actions)))

    def close(self) -> None:
        self._pool.shutdown(wait=True)


class CyberRangeEnv(gym.Env):
    """Gymnasium view of an engine.

    ``terminated`` means the goal was reached and ``truncated`` that the step
    budget ran out. Without an explicit seed, ``reset`` draws the episode seed
    from the environment's own generator.

    Parameters
    ----------
    spec : ScenarioSpec or str
        A scenario, a path to a scenario file, or ``"game1"`` / ``"game2"``.
    layout : ObservationLayout, optional (default None)
        Observation layout.
    render_mode : str, optional (default None)
        ``"ansi"`` renders the current observation as CSV.
    registry : AbilityRegistry, optional (default None)
        Ability registry.
    """

    metadata = {"render_modes": ["ansi"]}

    def __init__(
        self,
        spec: Union[ScenarioSpec, str] = "game1",
        layout: Optional[ObservationLayout] = None,
        render_mode: Optional[str] = None,
        registry: Optional[AbilityRegistry] = None,
    ):
        if render_mode is not None and render_mode not in self.metadata["render_modes"]:
            raise ValueError(f"Unsupported render_mode: {render_mode}")
        if not isinstance(spec, ScenarioSpec):
            spec = load_scenario(spec, registry=registry)
        layout = default_layout() if layout is None else layout
        self.engine = Engine(spec, registry=registry, layout=layout, emit_action_mask=True)
        self.render_mode = render_mode
        self.action_space = spaces.Discrete(self.engine.action_count)
        self.observation_space = spaces.MultiDiscrete(
            np.tile(np.array(layout.cardinalities, dtype=np.int64), (layout.shape[0], 1))
        )

    def reset(
        self, *, seed: Optional[int] = None, options: Optional[Dict[str, Any]] = None
    ) -> Tuple[np.ndarray, Dict[str, Any]]:
        super().reset(seed=seed)
        episode = int(seed) if seed is not None else int(self.np_random.integers(0, 2**63))
        obs = self.engine.reset(episode)
        return obs, {"seed": episode & SEED_MASK, "action_mask": self.engine.action_mask().tolist()}

    def step(self, action) -> Tuple[np.ndarray, float, bool, bool, Dict[str, Any]]:
        result = self.engine.step(int(action))
        terminated = bool(result.info["goal_reached"])
        truncated = bool(result.done and not terminated)
        return result.observation, float(result.reward), terminated, truncated, result.info

    def render(self) -> Optional[str]:
        if self.render_mode == "ansi":
            return observation_to_csv(self.engine.observe(), self.engine.layout)
        return None


gym.register(id="cyrange/Game1-v0", entry_point="cyrange.env:CyberRangeEnv", kwargs={"spec": "game1"})
gym.register(id="cyrange/Game2-v0", entry_point="cyrange.env:CyberRangeEnv", kwargs={"spec": "game2"})
