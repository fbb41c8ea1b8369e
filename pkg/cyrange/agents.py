"""Built-in trainers: DQN, cross-entropy method and greedy evaluation."""

import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import (
    Any,
    Dict,
    List,
    Mapping,
    NamedTuple,
    Optional,
    Sequence,
    Tuple,
    Type,
    TypeVar,
    Union,
)

import numpy as np

from cyrange.engine import TraceRecorder
from cyrange.env import VECTOR_SEED_STRIDE, EnvHandle, VectorEnv, make_env
from cyrange.logger import get_logger
from cyrange.nets import (
    Adam,
    Head,
    PolicyNet,
    clip_by_global_norm,
    flatten_grads,
    huber_loss,
    softmax,
    softmax_cross_entropy,
)
from cyrange.observation import ObservationLayout
from cyrange.schema import CE_SCHEMA, DQN_SCHEMA, normalize_hyperparameters
from cyrange.utils import merge_layers, parse_toml, write_csv

LOG = get_logger(__name__)

METRICS_HEADER = ("step", "episodes", "loss", "train_return", "eval_return")

# evaluation handles never share seeds with training handles
EVAL_SEED_OFFSET = 10_000


class TrainingDivergedError(RuntimeError):
    """The training loss became NaN or infinite."""


class ObservationScaler:
    """Flatten observations row-major and scale each cell to [0, 1].

    Each column is divided by ``cardinality - 1``.
    """

    def __init__(self, layout: ObservationLayout):
        cards = np.array(layout.cardinalities, dtype=np.float64)
        self.scale = np.tile(1.0 / (cards - 1.0), layout.shape[0])
        self.size = int(self.scale.size)

    def __call__(self, obs: np.ndarray) -> np.ndarray:
        obs = np.asarray(obs, dtype=np.float64)
        if obs.ndim == 2:
            return obs.reshape(-1) * self.scale
        return obs.reshape(obs.shape[0], -1) * self.scale


class Batch(NamedTuple):
    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_obs: np.ndarray
    dones: np.ndarray


class ReplayBuffer:
    """Fixed-capacity ring buffer of transitions with uniform sampling."""

    def __init__(self, capacity: int, obs_size: int, rng: np.random.Generator):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.rng = rng
        self.obs = np.zeros((capacity, obs_size))
        self.next_obs = np.zeros((capacity, obs_size))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.dones = np.zeros(capacity)
        self._next = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def add(self, obs, action: int, reward: float, next_obs, done: bool) -> None:
        idx = self._next
        self.obs[idx] = obs
        self.actions[idx] = action
        self.rewards[idx] = reward
        self.next_obs[idx] = next_obs
        self.dones[idx] = float(done)
        self._next = (idx + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, batch_size: int) -> Batch:
        if self._size == 0:
            raise ValueError("Cannot sample from an empty buffer")
        idx = self.rng.integers(0, self._size, size=batch_size)
        return Batch(
            self.obs[idx], self.actions[idx], self.rewards[idx], self.next_obs[idx], self.dones[idx]
        )


@dataclass(frozen=True)
class ReportRecord:
    """One metrics row; ``None`` marks a value not measured in the interval."""

    step: int
    episodes: int
    loss: Optional[float] = None
    train_return: Optional[float] = None
    eval_return: Optional[float] = None

    def row(self) -> Tuple:
        return (self.step, self.episodes, self.loss, self.train_return, self.eval_return)


@dataclass
class TrainReport:
    """Metrics collected during training, strictly increasing in ``step``."""

    algo: str
    records: List[ReportRecord] = field(default_factory=list)
    wall_time: float = field(default=0.0, compare=False)

    def add(self, record: ReportRecord) -> None:
        if self.records and record.step <= self.records[-1].step:
            raise ValueError(
                f"Report steps must increase: {record.step} after {self.records[-1].step}"
            )
        self.records.append(record)

    @property
    def final_eval_return(self) -> Optional[float]:
        for record in reversed(self.records):
            if record.eval_return is not None:
                return record.eval_return
        return None

    def write_csv(self, filename: Union[str, Path]) -> None:
        write_csv(filename, METRICS_HEADER, (record.row() for record in self.records))


C = TypeVar("C", "DQNConfig", "CEConfig")


def _normalized(cls: Type[C], schema: Dict, values: Mapping[str, Any]) -> C:
    doc = normalize_hyperparameters(schema, merge_layers(asdict(cls()), values))
    doc["hidden"] = tuple(doc["hidden"])
    return cls(**doc)


@dataclass(frozen=True)
class DQNConfig:
    """DQN hyperparameters."""

    hidden: Tuple[int, ...] = (64, 64)
    gamma: float = 0.99
    learning_rate: float = 1e-3
    replay_capacity: int = 10_000
    batch_size: int = 64
    warmup: int = 1_000
    target_update: int = 500
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_steps: int = 10_000
    reward_scale: float = 0.01
    grad_clip: float = 10.0
    report_interval: int = 100
    eval_interval: int = 1_000
    eval_episodes: int = 5
    seed: int = 0

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any]) -> "DQNConfig":
        """Overlay ``values`` on the defaults, validated by ``DQN_SCHEMA``."""
        return _normalized(cls, DQN_SCHEMA, values)

    def epsilon(self, step: int) -> float:
        """Linearly decayed exploration rate at a 1-based step."""
        frac = min(max(step - 1, 0) / self.epsilon_decay_steps, 1.0)
        return self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)


@dataclass(frozen=True)
class CEConfig:
    """Cross-entropy method hyperparameters."""

    hidden: Tuple[int, ...] = (64, 64)
    learning_rate: float = 1e-2
    batch_size: int = 32
    elite_percentile: float = 70.0
    fit_steps: int = 4
    eval_every: int = 1
    eval_episodes: int = 5
    parallel_envs: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError(f"batch_size must be at least 2, got {self.batch_size}")
        if not 0.0 <= self.elite_percentile <= 100.0:
            raise ValueError(f"elite_percentile outside [0, 100]: {self.elite_percentile}")

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any]) -> "CEConfig":
        """Overlay ``values`` on the defaults, validated by ``CE_SCHEMA``."""
        return _normalized(cls, CE_SCHEMA, values)


CONFIGS: Dict[str, Any] = {"dqn": DQNConfig, "ce": CEConfig}


def load_config(
    algo: str,
    filename: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> Union[DQNConfig, CEConfig]:
    """Resolve hyperparameters: defaults, then the TOML file, then overrides.

    Parameters
    ----------
    algo : str
        ``"dqn"`` or ``"ce"``.
    filename : str or Path, optional (default None)
        TOML file with a ``[cyrange.<algo>]`` table.
    overrides : dict, optional (default None)
        ``--hp`` values.

    Returns
    -------
    DQNConfig or CEConfig
        The validated configuration.

    Raises
    ------
    ValueError
        For unknown algorithms, unknown keys or out-of-range values.
    """
    try:
        config_cls = CONFIGS[algo]
    except KeyError:
        raise ValueError(f"Unknown algorithm: {algo}") from None
    from_file = parse_toml(filename, algo) if filename is not None else {}
    return config_cls.from_mapping(merge_layers(from_file, overrides or {}))


class Rollout(NamedTuple):
    """Greedy evaluation results."""

    mean_return: float
    std_return: float
    returns: List[int]
    trajectories: List[List[int]]
    trace: List[Dict[str, Any]]


def greedy_rollout(
    policy: PolicyNet,
    env: EnvHandle,
    episodes: int,
    scaler: Optional[ObservationScaler] = None,
) -> Rollout:
    """Play ``episodes`` episodes taking the arg-max action.

    Ties go to the lowest action index. Trajectories list the chosen action
    indices; ``trace`` holds one trace record per step.
    """
    if episodes < 1:
        raise ValueError("episodes must be at least 1")
    scaler = ObservationScaler(env.layout) if scaler is None else scaler
    recorder = TraceRecorder()
    returns: List[int] = []
    trajectories: List[List[int]] = []
    for episode in range(episodes):
        recorder.start_episode(episode)
        obs = env.reset()
        total, actions, done = 0, [], False
        while not done:
            action = int(np.argmax(policy.forward(scaler(obs))))
            result = env.step(action)
            recorder.record(result)
            total += result.reward
            actions.append(action)
            obs, done = result.observation, result.done
        returns.append(total)
        trajectories.append(actions)
    return Rollout(
        mean_return=float(np.mean(returns)),
        std_return=float(np.std(returns)),
        returns=returns,
        trajectories=trajectories,
        trace=recorder.records,
    )


def _eval_env(env: EnvHandle, seed: int) -> EnvHandle:
    return make_env(env.spec, layout=env.layout, seed=seed + EVAL_SEED_OFFSET, registry=env.registry)


def _mean(values: Sequence[float]) -> Optional[float]:
    return float(np.mean(values)) if len(values) else None


def _check_finite(loss: float, step: int) -> None:
    if not np.isfinite(loss):
        LOG.error(f"Loss became {loss} at step {step}")
        raise TrainingDivergedError(
            f"Non-finite loss {loss} at step {step}; lower the learning rate or "
            "the reward scale"
        )


def train_dqn(
    env: EnvHandle, hp: DQNConfig, budget_steps: int
) -> Tuple[PolicyNet, TrainReport]:
    """Train a Q network with experience replay and a target network.

    The network trains on every step once ``hp.warmup`` transitions are stored.
    A report row is written every ``hp.report_interval`` steps and a greedy
    evaluation runs every ``hp.eval_interval`` steps and on the last step.
    Truncated episodes still bootstrap; only reaching the goal is terminal.

    Parameters
    ----------
    env : EnvHandle
        The training environment.
    hp : DQNConfig
        Hyperparameters.
    budget_steps : int
        Number of environment steps.

    Returns
    -------
    PolicyNet
        The trained Q network.
    TrainReport
        The metrics.

    Raises
    ------
    ValueError
        If the budget is smaller than the warmup.
    TrainingDivergedError
        If the loss becomes non-finite.
    """
    if budget_steps < hp.warmup:
        raise ValueError(f"budget_steps ({budget_steps}) must be at least warmup ({hp.warmup})")
    started = time.perf_counter()
    rng = np.random.default_rng(hp.seed)
    scaler = ObservationScaler(env.layout)
    n_actions = env.action_count
    net = PolicyNet.build(scaler.size, n_actions, hp.hidden, Head.Q, rng)
    target = net.copy()
    optimizer = Adam(net.parameters(), hp.learning_rate)
    buffer = ReplayBuffer(hp.replay_capacity, scaler.size, rng)
    evaluator = _eval_env(env, hp.seed)
    report = TrainReport(algo="dqn")
    LOG.info(f"Training DQN on {env.spec.name} for {budget_steps} steps")

    obs = scaler(env.reset())
    episode_return, episodes = 0, 0
    returns: List[float] = []
    losses: List[float] = []
    batch_index = np.arange(hp.batch_size)
    for step in range(1, budget_steps + 1):
        if rng.random() < hp.epsilon(step):
            action = int(rng.integers(n_actions))
        else:
            action = int(np.argmax(net.forward(obs)))
        result = env.step(action)
        next_obs = scaler(result.observation)
        buffer.add(obs, action, result.reward * hp.reward_scale, next_obs, result.info["goal_reached"])
        episode_return += result.reward
        if result.done:
            episodes += 1
            returns.append(episode_return)
            episode_return = 0
            obs = scaler(env.reset())
        else:
            obs = next_obs

        if step >= hp.warmup and len(buffer) >= hp.batch_size:
            batch = buffer.sample(hp.batch_size)
            bootstrap = target.forward(batch.next_obs).max(axis=1)
            targets = batch.rewards + hp.gamma * bootstrap * (1.0 - batch.dones)
            q_values, cache = net.forward_with_cache(batch.obs)
            loss, grad_pred = huber_loss(q_values[batch_index, batch.actions], targets)
            _check_finite(loss, step)
            grad_out = np.zeros_like(q_values)
            grad_out[batch_index, batch.actions] = grad_pred
            grads = flatten_grads(net.backward(cache, grad_out))
            clip_by_global_norm(grads, hp.grad_clip)
            optimizer.step(grads)
            losses.append(loss)
        if step % hp.target_update == 0:
            target.load_from(net)

        if step % hp.report_interval == 0 or step == budget_steps:
            eval_return = None
            if step % hp.eval_interval == 0 or step == budget_steps:
                eval_return = greedy_rollout(net, evaluator, hp.eval_episodes, scaler).mean_return
            record = ReportRecord(step, episodes, _mean(losses), _mean(returns), eval_return)
            report.add(record)
            LOG.debug(f"DQN report: {record}")
            losses, returns = [], []

    report.wall_time = time.perf_counter() - started
    LOG.info(
        f"DQN finished after {episodes} episodes; final greedy return {report.final_eval_return}"
    )
    return net, report


class _Episode(NamedTuple):
    obs: List[np.ndarray]
    actions: List[int]
    total: int


def _rollout_batch(
    vector: VectorEnv,
    net: PolicyNet,
    scaler: ObservationScaler,
    rng: np.random.Generator,
    count: int,
) -> List[_Episode]:
    """Sample ``count`` episodes from the softmax policy, ``len(vector)`` at a time."""
    episodes: List[_Episode] = []
    n_actions = net.output_size
    while len(episodes) < count:
        width = min(len(vector), count - len(episodes))
        obs = scaler(vector.reset())
        live = [i < width for i in range(len(vector))]
        buffers: List[_Episode] = [_Episode([], [], 0) for _ in range(len(vector))]
        totals = [0] * len(vector)
        while any(live):
            probs = softmax(net.forward(obs))
            actions: List[Optional[int]] = []
            for i in range(len(vector)):
                if live[i]:
                    action = int(rng.choice(n_actions, p=probs[i]))
                    buffers[i].obs.append(obs[i].copy())
                    buffers[i].actions.append(action)
                    actions.append(action)
                else:
                    actions.append(None)
            results = vector.step(actions)
            for i, result in enumerate(results):
                if result is None:
                    continue
                totals[i] += result.reward
                obs[i] = scaler(result.observation)
                if result.done:
                    live[i] = False
        episodes.extend(
            _Episode(buffers[i].obs, buffers[i].actions, totals[i]) for i in range(width)
        )
    return episodes


def elite_mask(returns: np.ndarray, percentile: float) -> np.ndarray:
    """Episodes at or above the return percentile; all of them if returns are equal."""
    if np.all(returns == returns[0]):
        return np.ones(returns.shape, dtype=bool)
    return returns >= np.percentile(returns, percentile)


def train_ce(
    env: EnvHandle, hp: CEConfig, budget_episodes: int
) -> Tuple[PolicyNet, TrainReport]:
    """Train a softmax policy with the cross-entropy method.

    Each iteration samples ``hp.batch_size`` complete episodes, keeps the elite
    ones and fits the policy to their (observation, action) pairs. Rollouts run
    on ``hp.parallel_envs`` handles in lockstep: ``env`` itself plus copies
    seeded ``VECTOR_SEED_STRIDE`` apart. Report rows are written per iteration
    with the cumulative step and episode counts.

    Parameters
    ----------
    env : EnvHandle
        The training environment.
    hp : CEConfig
        Hyperparameters.
    budget_episodes : int
        Number of training episodes, at least ``hp.batch_size``.

    Returns
    -------
    PolicyNet
        The trained policy (logits head).
    TrainReport
        The metrics.
    """
    if budget_episodes < hp.batch_size:
        raise ValueError(
            f"budget_episodes ({budget_episodes}) must be at least batch_size ({hp.batch_size})"
        )
    started = time.perf_counter()
    rng = np.random.default_rng(hp.seed)
    scaler = ObservationScaler(env.layout)
    net = PolicyNet.build(scaler.size, env.action_count, hp.hidden, Head.LOGITS, rng)
    optimizer = Adam(net.parameters(), hp.learning_rate)
    evaluator = _eval_env(env, hp.seed)
    report = TrainReport(algo="ce")
    iterations = budget_episodes // hp.batch_size
    LOG.info(f"Training CE on {env.spec.name} for {iterations} iterations")

    extra = [
        make_env(
            env.spec,
            layout=env.layout,
            seed=env.seed_base + i * VECTOR_SEED_STRIDE,
            registry=env.registry,
        )
        for i in range(1, hp.parallel_envs)
    ]
    steps = episodes = 0
    with VectorEnv([env] + extra) as vector:
        for iteration in range(1, iterations + 1):
            batch = _rollout_batch(vector, net, scaler, rng, hp.batch_size)
            returns = np.array([episode.total for episode in batch], dtype=np.float64)
            steps += sum(len(episode.actions) for episode in batch)
            episodes += len(batch)

            keep = elite_mask(returns, hp.elite_percentile)
            elite = [episode for episode, kept in zip(batch, keep) if kept]
            inputs = np.array([o for episode in elite for o in episode.obs])
            targets = np.array([a for episode in elite for a in episode.actions], dtype=np.int64)
            loss = float("nan")
            for _ in range(hp.fit_steps):
                logits, cache = net.forward_with_cache(inputs)
                loss, grad = softmax_cross_entropy(logits, targets)
                _check_finite(loss, steps)
                optimizer.step(flatten_grads(net.backward(cache, grad)))

            eval_return = None
            if iteration % hp.eval_every == 0 or iteration == iterations:
                eval_return = greedy_rollout(net, evaluator, hp.eval_episodes, scaler).mean_return
            record = ReportRecord(steps, episodes, loss, float(returns.mean()), eval_return)
            report.add(record)
            LOG.debug(f"CE report: {record}")

    report.wall_time = time.perf_counter() - started
    LOG.info(f"CE finished after {episodes} episodes; final greedy return {report.final_eval_return}")
    return net, report
