"""Dense networks, optimizer and checkpoint format for the built-in learners."""

import struct
from enum import IntEnum
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from cyrange.utils import atomic_write

MAGIC = b"CYRN"
CHECKPOINT_VERSION = 1
_HEADER = struct.Struct("<4sHBB")
_DIMS = struct.Struct("<II")
_FLOAT = np.dtype("<f4")

Grads = List[Tuple[np.ndarray, np.ndarray]]


class CheckpointError(ValueError):
    """A checkpoint file is malformed or from an unsupported version."""


class Head(IntEnum):
    """What the output layer means."""

    Q = 0
    LOGITS = 1


class PolicyNet:
    """Multilayer perceptron with rectifier hidden layers and a linear output.

    Weights are float64 in memory and float32 on disk.

    Parameters
    ----------
    sizes : sequence of int
        Layer widths from input to output, at least two entries.
    head : Head, optional (default Head.Q)
        Meaning of the outputs.
    rng : np.random.Generator, optional (default None)
        Generator for He initialisation; zeros when omitted.
    """

    def __init__(
        self,
        sizes: Sequence[int],
        head: Head = Head.Q,
        rng: Optional[np.random.Generator] = None,
    ):
        if len(sizes) < 2 or any(size < 1 for size in sizes):
            raise ValueError(f"Invalid layer sizes: {list(sizes)}")
        self.sizes = [int(size) for size in sizes]
        self.head = Head(head)
        self.weights: List[np.ndarray] = []
        self.biases: List[np.ndarray] = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            if rng is None:
                weight = np.zeros((fan_in, fan_out))
            else:
                weight = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
            self.weights.append(weight)
            self.biases.append(np.zeros(fan_out))

    @classmethod
    def build(
        cls,
        input_size: int,
        output_size: int,
        hidden: Sequence[int] = (64, 64),
        head: Head = Head.Q,
        rng: Optional[np.random.Generator] = None,
    ) -> "PolicyNet":
        return cls([input_size, *hidden, output_size], head=head, rng=rng)

    @property
    def input_size(self) -> int:
        return self.sizes[0]

    @property
    def output_size(self) -> int:
        return self.sizes[-1]

    def parameters(self) -> List[np.ndarray]:
        """Weights and biases interleaved, layer by layer."""
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def forward(self, x: np.ndarray) -> np.ndarray:
        out, _ = self.forward_with_cache(x)
        return out

    def forward_with_cache(self, x: np.ndarray) -> Tuple[np.ndarray, List[np.ndarray]]:
        """Run the network and keep the layer inputs for ``backward``.

        A 1-D input is treated as a batch of one and a 1-D output returned.
        """
        single = np.ndim(x) == 1
        activation = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if activation.shape[1] != self.input_size:
            raise ValueError(
                f"Expected inputs of size {self.input_size}, got {activation.shape[1]}"
            )
        cache = [activation]
        last = len(self.weights) - 1
        for idx, (weight, bias) in enumerate(zip(self.weights, self.biases)):
            activation = activation @ weight + bias
            if idx < last:
                activation = np.maximum(activation, 0.0)
                cache.append(activation)
        return (activation[0] if single else activation), cache

    def backward(self, cache: List[np.ndarray], grad_out: np.ndarray) -> Grads:
        """Gradients of a scalar loss given its gradient w.r.t. the outputs."""
        grad = np.atleast_2d(grad_out)
        grads: Grads = []
        for idx in range(len(self.weights) - 1, -1, -1):
            inputs = cache[idx]
            grads.append((inputs.T @ grad, grad.sum(axis=0)))
            if idx > 0:
                grad = (grad @ self.weights[idx].T) * (inputs > 0.0)
        grads.reverse()
        return grads

    def copy(self) -> "PolicyNet":
        clone = PolicyNet(self.sizes, head=self.head)
        clone.load_from(self)
        return clone

    def load_from(self, other: "PolicyNet") -> None:
        """Copy the parameters of a network with the same sizes."""
        if other.sizes != self.sizes:
            raise ValueError(f"Layer sizes differ: {other.sizes} vs {self.sizes}")
        self.weights = [w.copy() for w in other.weights]
        self.biases = [b.copy() for b in other.biases]

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.parameters())

    def save(self, filename: Union[str, Path]) -> None:
        """Write the checkpoint atomically; see ``docs/source/checkpoint.rst``."""
        with atomic_write(filename, "wb") as outfile:
            outfile.write(to_bytes(self))

    @classmethod
    def load(cls, filename: Union[str, Path]) -> "PolicyNet":
        return from_bytes(Path(filename).read_bytes())


def to_bytes(net: PolicyNet) -> bytes:
    """Serialize a network to the versioned checkpoint layout."""
    parts = [_HEADER.pack(MAGIC, CHECKPOINT_VERSION, int(net.head), len(net.weights))]
    parts.extend(_DIMS.pack(*weight.shape) for weight in net.weights)
    for weight, bias in zip(net.weights, net.biases):
        parts.append(np.ascontiguousarray(weight, dtype=_FLOAT).tobytes(order="C"))
        parts.append(np.ascontiguousarray(bias, dtype=_FLOAT).tobytes())
    return b"".join(parts)


def from_bytes(data: bytes) -> PolicyNet:
    """Parse a checkpoint.

    Raises
    ------
    CheckpointError
        On bad magic bytes, an unknown version or head, inconsistent layer
        dimensions, or a truncated or oversized payload.
    """
    if len(data) < _HEADER.size:
        raise CheckpointError("Checkpoint truncated in header")
    magic, version, head, n_layers = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise CheckpointError(f"Not a policy checkpoint (magic {magic!r})")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"Unsupported checkpoint version {version}")
    try:
        head = Head(head)
    except ValueError as err:
        raise CheckpointError(f"Unknown head kind {head}") from err
    if n_layers < 1:
        raise CheckpointError("Checkpoint has no layers")

    offset = _HEADER.size
    if len(data) < offset + n_layers * _DIMS.size:
        raise CheckpointError("Checkpoint truncated in layer table")
    dims = [_DIMS.unpack_from(data, offset + i * _DIMS.size) for i in range(n_layers)]
    offset += n_layers * _DIMS.size
    for (_, fan_out), (fan_in, _) in zip(dims[:-1], dims[1:]):
        if fan_out != fan_in:
            raise CheckpointError(f"Layer dimensions do not chain: {dims}")

    net = PolicyNet([dims[0][0]] + [fan_out for _, fan_out in dims], head=head)
    for idx, (fan_in, fan_out) in enumerate(dims):
        count = fan_in * fan_out + fan_out
        end = offset + count * _FLOAT.itemsize
        if len(data) < end:
            raise CheckpointError("Checkpoint truncated in weights")
        values = np.frombuffer(data, dtype=_FLOAT, count=count, offset=offset)
        net.weights[idx] = values[: fan_in * fan_out].reshape(fan_in, fan_out).astype(np.float64)
        net.biases[idx] = values[fan_in * fan_out :].astype(np.float64)
        offset = end
    if offset != len(data):
        raise CheckpointError(f"{len(data) - offset} unexpected trailing bytes")
    return net


class Adam:
    """Adam optimizer updating parameter arrays in place."""

    def __init__(
        self,
        params: List[np.ndarray],
        learning_rate: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = params
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads: Sequence[np.ndarray]) -> None:
        self.t += 1
        correction1 = 1.0 - self.beta1**self.t
        correction2 = 1.0 - self.beta2**self.t
        for param, grad, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad * grad
            param -= self.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + self.eps)


def flatten_grads(grads: Grads) -> List[np.ndarray]:
    """Order gradients like ``PolicyNet.parameters``."""
    return [g for pair in grads for g in pair]


def clip_by_global_norm(grads: List[np.ndarray], max_norm: float) -> float:
    """Scale gradients in place so their joint norm is at most ``max_norm``.

    Returns the norm before clipping. ``max_norm <= 0`` disables clipping.
    """
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))
    if max_norm > 0 and norm > max_norm:
        for g in grads:
            g *= max_norm / norm
    return norm


def huber_loss(pred: np.ndarray, target: np.ndarray, delta: float = 1.0) -> Tuple[float, np.ndarray]:
    """Mean Huber loss and its gradient w.r.t. ``pred``."""
    diff = pred - target
    quadratic = np.abs(diff) <= delta
    loss = np.where(quadratic, 0.5 * diff**2, delta * (np.abs(diff) - 0.5 * delta))
    grad = np.where(quadratic, diff, delta * np.sign(diff)) / diff.shape[0]
    return float(loss.mean()), grad


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, actions: np.ndarray) -> Tuple[float, np.ndarray]:
    """Mean cross-entropy of ``actions`` under ``softmax(logits)`` and its gradient."""
    batch = np.arange(logits.shape[0])
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = -float(log_probs[batch, actions].mean())
    grad = np.exp(log_probs)
    grad[batch, actions] -= 1.0
    return loss, grad / logits.shape[0]
