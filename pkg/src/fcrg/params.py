"""Named parameter storage, Adam updates, gradient clipping, checkpoints.

Parameters are tagged with the network partition they belong to (encoder,
decoder or shared) so checkpoints and reports can group them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Iterator, Optional

import numpy as np

from .tensor import Tensor, backward

PARTITIONS = ("encoder", "decoder", "shared")


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 32
    clip_norm: float = 0.25
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    max_epochs: int = 20
    patience: int = 3

    def __post_init__(self):
        for name in ("learning_rate", "batch_size", "clip_norm", "beta1", "beta2", "epsilon", "max_epochs"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")


class _Slot:
    __slots__ = ("tensor", "m", "v", "partition", "trainable")

    def __init__(self, tensor: Tensor, partition: str, trainable: bool):
        self.tensor = tensor
        self.m = np.zeros_like(tensor.data)
        self.v = np.zeros_like(tensor.data)
        self.partition = partition
        self.trainable = trainable


class ParamStore:
    """Map of named parameter tensors with gradient and Adam moment buffers."""

    def __init__(self):
        self._slots: dict[str, _Slot] = {}

    def add(self, name: str, value: np.ndarray, partition: str = "shared", trainable: bool = True) -> Tensor:
        if name in self._slots:
            raise ValueError(f"duplicate parameter name {name!r}")
        if partition not in PARTITIONS:
            raise ValueError(f"unknown partition {partition!r}")
        t = Tensor(np.array(value), requires_grad=trainable)
        self._slots[name] = _Slot(t, partition, trainable)
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._slots[name].tensor

    def __contains__(self, name: str) -> bool:
        return name in self._slots

    def names(self) -> list[str]:
        return list(self._slots)

    def partition(self, name: str) -> str:
        return self._slots[name].partition

    def items(self) -> Iterator[tuple[str, Tensor]]:
        for name, slot in self._slots.items():
            yield name, slot.tensor

    def trainable_items(self) -> Iterator[tuple[str, Tensor]]:
        for name, slot in self._slots.items():
            if slot.trainable:
                yield name, slot.tensor

    def zero_grads(self) -> None:
        for slot in self._slots.values():
            slot.tensor.grad = None

    def grad_norm(self) -> float:
        total = 0.0
        for slot in self._slots.values():
            if slot.trainable and slot.tensor.grad is not None:
                total += float((slot.tensor.grad.astype(np.float64) ** 2).sum())
        return float(np.sqrt(total))

    def clip_gradients(self, clip_norm: float) -> float:
        """Global-norm clipping; returns the scaling factor applied."""
        norm = self.grad_norm()
        if norm <= clip_norm or norm == 0.0:
            return 1.0
        factor = clip_norm / norm
        for slot in self._slots.values():
            if slot.trainable and slot.tensor.grad is not None:
                slot.tensor.grad *= factor
        return factor

    def adam_step(self, config: TrainConfig, step_index: int) -> None:
        """Bias-corrected Adam update; gradients are zeroed afterwards."""
        if step_index < 1:
            raise ValueError("step_index must be >= 1")
        b1, b2 = config.beta1, config.beta2
        correction1 = 1.0 - b1**step_index
        correction2 = 1.0 - b2**step_index
        for slot in self._slots.values():
            if not slot.trainable:
                continue
            g = slot.tensor.grad
            if g is None:
                g = np.zeros_like(slot.tensor.data)
            slot.m = b1 * slot.m + (1.0 - b1) * g
            slot.v = b2 * slot.v + (1.0 - b2) * g * g
            m_hat = slot.m / correction1
            v_hat = slot.v / correction2
            slot.tensor.data -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.epsilon)
        self.zero_grads()

    def state(self) -> dict[str, np.ndarray]:
        return {name: slot.tensor.data.copy() for name, slot in self._slots.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for name, value in state.items():
            slot = self._slots[name]
            if slot.tensor.shape != value.shape:
                raise ValueError(f"state shape mismatch for {name!r}: {slot.tensor.shape} vs {value.shape}")
            slot.tensor.data = value.astype(slot.tensor.dtype, copy=True)


CHECKPOINT_MAGIC = "fcrg-checkpoint 1"


def save_checkpoint(path, store: ParamStore, config: dict, *, seed: int = 0, epoch: int = 0) -> None:
    """Text header (version, config, parameter table) + raw little-endian payload."""
    names = store.names()
    dtype = store[names[0]].dtype if names else np.float32
    header_lines = [
        CHECKPOINT_MAGIC,
        f"dtype {np.dtype(dtype).name}",
        f"seed {seed}",
        f"epoch {epoch}",
        "config " + json.dumps(config, sort_keys=True),
    ]
    for name in names:
        shape = ",".join(str(d) for d in store[name].shape)
        header_lines.append(f"param {name} {store.partition(name)} {shape}")
    header_lines.append("payload")
    with open(path, "wb") as fh:
        fh.write(("\n".join(header_lines) + "\n").encode("utf-8"))
        for name in names:
            fh.write(np.ascontiguousarray(store[name].data, dtype=f"<{np.dtype(dtype).kind}{np.dtype(dtype).itemsize}").tobytes())


def load_checkpoint(path) -> tuple[ParamStore, dict]:
    """Returns (parameter store, metadata with config/seed/epoch/dtype)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    marker = b"\npayload\n"
    split = raw.find(marker)
    if split < 0:
        raise ValueError(f"{path}: not a checkpoint file (missing payload marker)")
    header = raw[:split].decode("utf-8").split("\n")
    payload = raw[split + len(marker) :]
    if header[0] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: unsupported checkpoint format {header[0]!r}")
    meta: dict = {}
    params: list[tuple[str, str, tuple[int, ...]]] = []
    for line in header[1:]:
        key, _, rest = line.partition(" ")
        if key == "config":
            meta["config"] = json.loads(rest)
        elif key in ("dtype", "seed", "epoch"):
            meta[key] = rest if key == "dtype" else int(rest)
        elif key == "param":
            name, partition, shape_text = rest.split(" ")
            shape = tuple(int(d) for d in shape_text.split(","))
            params.append((name, partition, shape))
        else:
            raise ValueError(f"{path}: unknown header line {line!r}")
    dtype = np.dtype(meta["dtype"])
    store = ParamStore()
    offset = 0
    for name, partition, shape in params:
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * dtype.itemsize
        chunk = payload[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise ValueError(f"{path}: truncated payload for parameter {name!r}")
        value = np.frombuffer(chunk, dtype=f"<{dtype.kind}{dtype.itemsize}").astype(dtype).reshape(shape)
        store.add(name, value.copy(), partition=partition)
        offset += nbytes
    return store, meta


def finite_diff_check(
    loss_fn: Callable[[], Tensor],
    store: ParamStore,
    *,
    step: float = 1e-5,
    samples_per_param: int = 50,
    seed: int = 0,
    abs_floor: float = 1e-8,
) -> dict[str, float]:
    """Compare analytic gradients with central finite differences.

    ``loss_fn`` must recompute the forward pass from the current parameter
    values (dropout disabled).  Requires float64 parameters.  Returns the max
    relative error per trainable parameter, sampling up to
    ``samples_per_param`` coordinates each; coordinates where both sides are
    below ``abs_floor`` in disagreement count as exact.
    """
    rng = np.random.default_rng(seed)
    for name, tensor in store.trainable_items():
        if tensor.dtype != np.float64:
            raise ValueError(f"finite_diff_check requires float64 parameters ({name} is {tensor.dtype})")

    store.zero_grads()
    loss = loss_fn()
    if not np.isfinite(loss.item()):
        raise ValueError("loss is non-finite")
    backward(loss)
    analytic = {name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data)) for name, t in store.trainable_items()}

    report: dict[str, float] = {}
    for name, tensor in store.trainable_items():
        flat = tensor.data.reshape(-1)
        grad_flat = analytic[name].reshape(-1)
        n = flat.size
        coords = np.arange(n) if n <= samples_per_param else rng.choice(n, size=samples_per_param, replace=False)
        worst = 0.0
        for c in coords:
            original = flat[c]
            flat[c] = original + step
            f_plus = loss_fn().item()
            flat[c] = original - step
            f_minus = loss_fn().item()
            flat[c] = original
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise ValueError(f"non-finite loss while perturbing {name}[{c}]")
            numeric = (f_plus - f_minus) / (2.0 * step)
            diff = abs(grad_flat[c] - numeric)
            if diff > abs_floor:
                worst = max(worst, diff / max(abs(grad_flat[c]), abs(numeric)))
        report[name] = worst
    store.zero_grads()
    return report
