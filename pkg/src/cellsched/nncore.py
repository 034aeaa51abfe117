"""Minimal dense-network engine: multi-block MLPs, backprop, minibatch training.

Models take named input blocks, push each through optional per-block dense
layers, concatenate, and finish with a trunk and an output layer. Everything
is float64 numpy; gradients are exact reverse-mode derivatives of the MSE
loss. Training with fixed seeds is deterministic.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

MODEL_FORMAT_VERSION = 1


class Activation(str, Enum):
    RELU = "RELU"
    SIGMOID = "SIGMOID"
    LINEAR = "LINEAR"


class TrainingDivergedError(RuntimeError):
    """Raised when the training loss becomes NaN or infinite."""


class ModelFormatError(ValueError):
    """Raised when a model file cannot be loaded against its spec."""


def _act(z: np.ndarray, kind: Activation) -> np.ndarray:
    if kind == Activation.RELU:
        return np.maximum(z, 0.0)
    if kind == Activation.SIGMOID:
        # Stable on both tails.
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out
    return z


def _act_grad(z: np.ndarray, a: np.ndarray, kind: Activation) -> np.ndarray:
    """Derivative of the activation at pre-activation z (a = act(z))."""
    if kind == Activation.RELU:
        return (z > 0.0).astype(z.dtype)
    if kind == Activation.SIGMOID:
        return a * (1.0 - a)
    return np.ones_like(z)


@dataclass(frozen=True)
class LayerSpec:
    width: int
    activation: Activation = Activation.RELU

    def __post_init__(self) -> None:
        if self.width < 1:
            raise ValueError("layer width must be >= 1")


@dataclass(frozen=True)
class BlockSpec:
    """One named input block and its (possibly empty) private layer stack."""

    name: str
    width: int
    layers: tuple[LayerSpec, ...] = ()

    def __post_init__(self) -> None:
        if self.width < 1:
            raise ValueError(f"block '{self.name}' width must be >= 1")

    @property
    def out_width(self) -> int:
        return self.layers[-1].width if self.layers else self.width


@dataclass(frozen=True)
class MlpSpec:
    blocks: tuple[BlockSpec, ...]
    trunk: tuple[LayerSpec, ...]
    output: LayerSpec

    def __post_init__(self) -> None:
        if not self.blocks:
            raise ValueError("need at least one input block")
        names = [b.name for b in self.blocks]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate block names: {names}")

    @property
    def concat_width(self) -> int:
        return sum(b.out_width for b in self.blocks)

    def to_dict(self) -> dict:
        return {
            "blocks": [
                {
                    "name": b.name,
                    "width": b.width,
                    "layers": [[l.width, l.activation.value] for l in b.layers],
                }
                for b in self.blocks
            ],
            "trunk": [[l.width, l.activation.value] for l in self.trunk],
            "output": [self.output.width, self.output.activation.value],
        }

    @staticmethod
    def from_dict(data: dict) -> "MlpSpec":
        return MlpSpec(
            blocks=tuple(
                BlockSpec(
                    name=b["name"],
                    width=b["width"],
                    layers=tuple(LayerSpec(w, Activation(a)) for w, a in b["layers"]),
                )
                for b in data["blocks"]
            ),
            trunk=tuple(LayerSpec(w, Activation(a)) for w, a in data["trunk"]),
            output=LayerSpec(data["output"][0], Activation(data["output"][1])),
        )


def _layer_chain(spec: MlpSpec) -> list[tuple[str, int, int, Activation]]:
    """(param key, fan_in, fan_out, activation) for every dense layer in order."""
    chain = []
    for block in spec.blocks:
        fan_in = block.width
        for i, layer in enumerate(block.layers):
            chain.append((f"block.{block.name}.{i}", fan_in, layer.width, layer.activation))
            fan_in = layer.width
    fan_in = spec.concat_width
    for i, layer in enumerate(spec.trunk):
        chain.append((f"trunk.{i}", fan_in, layer.width, layer.activation))
        fan_in = layer.width
    chain.append(("out", fan_in, spec.output.width, spec.output.activation))
    return chain


class MlpModel:
    """Dense network parameters for one MlpSpec.

    Parameters live in ``params`` keyed by "<layer>.W" / "<layer>.b"; He-style
    uniform fan-in initialization from ``init_seed`` (biases start at zero).
    """

    def __init__(self, spec: MlpSpec, init_seed: int = 0, init: bool = True):
        self.spec = spec
        self.init_seed = init_seed
        self.params: dict[str, np.ndarray] = {}
        rng = np.random.default_rng(init_seed)
        for key, fan_in, fan_out, _ in _layer_chain(spec):
            if init:
                limit = np.sqrt(6.0 / fan_in)
                w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
            else:
                w = np.zeros((fan_in, fan_out))
            self.params[f"{key}.W"] = w
            self.params[f"{key}.b"] = np.zeros(fan_out)

    def copy_params(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params.items()}

    def set_params(self, params: dict[str, np.ndarray]) -> None:
        for k in self.params:
            self.params[k][...] = params[k]

    def n_params(self) -> int:
        return sum(v.size for v in self.params.values())


def _as_batch(x: np.ndarray) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        return arr[None, :], True
    if arr.ndim == 2:
        return arr, False
    raise ValueError(f"inputs must be 1-D or 2-D, got shape {arr.shape}")


def _check_blocks(spec: MlpSpec, inputs: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    batched = {}
    batch_size = None
    for block in spec.blocks:
        if block.name not in inputs:
            raise ValueError(f"missing input block '{block.name}'")
        x, _ = _as_batch(inputs[block.name])
        if x.shape[1] != block.width:
            raise ValueError(
                f"input block '{block.name}' has width {x.shape[1]}, "
                f"spec requires {block.width}"
            )
        if batch_size is None:
            batch_size = x.shape[0]
        elif x.shape[0] != batch_size:
            raise ValueError(
                f"input block '{block.name}' batch size {x.shape[0]} "
                f"!= {batch_size}"
            )
        batched[block.name] = x
    return batched


def _forward_cached(model: MlpModel, inputs: dict[str, np.ndarray]):
    """Forward pass keeping pre-activations/activations for backprop."""
    spec = model.spec
    xs = _check_blocks(spec, inputs)
    cache: dict[str, tuple] = {}
    parts = []
    for block in spec.blocks:
        h = xs[block.name]
        for i, layer in enumerate(block.layers):
            key = f"block.{block.name}.{i}"
            z = h @ model.params[f"{key}.W"] + model.params[f"{key}.b"]
            a = _act(z, layer.activation)
            cache[key] = (h, z, a, layer.activation)
            h = a
        parts.append(h)
    h = parts[0] if len(parts) == 1 else np.concatenate(parts, axis=1)
    for i, layer in enumerate(spec.trunk):
        key = f"trunk.{i}"
        z = h @ model.params[f"{key}.W"] + model.params[f"{key}.b"]
        a = _act(z, layer.activation)
        cache[key] = (h, z, a, layer.activation)
        h = a
    z = h @ model.params["out.W"] + model.params["out.b"]
    y = _act(z, spec.output.activation)
    cache["out"] = (h, z, y, spec.output.activation)
    return y, cache, xs


def forward(model: MlpModel, inputs: dict[str, np.ndarray]) -> np.ndarray:
    """Batch (or single-vector) forward pass; output matches input arity."""
    single = all(np.asarray(v).ndim == 1 for v in inputs.values())
    y, _, _ = _forward_cached(model, inputs)
    return y[0] if single else y


def mse(predicted: np.ndarray, target: np.ndarray) -> float:
    p = np.asarray(predicted, dtype=float)
    t = np.asarray(target, dtype=float)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {t.shape}")
    return float(np.mean((p - t) ** 2))


def backward(
    model: MlpModel, inputs: dict[str, np.ndarray], target: np.ndarray
) -> tuple[float, dict[str, np.ndarray]]:
    """MSE loss and its exact gradients w.r.t. every parameter."""
    spec = model.spec
    y, cache, xs = _forward_cached(model, inputs)
    t, _ = _as_batch(target)
    if y.shape != t.shape:
        raise ValueError(f"target shape {t.shape} does not match output {y.shape}")
    loss = float(np.mean((y - t) ** 2))
    grads = {k: None for k in model.params}

    def layer_backward(key: str, delta_out: np.ndarray) -> np.ndarray:
        h, z, a, activation = cache[key]
        delta = delta_out * _act_grad(z, a, activation)
        grads[f"{key}.W"] = h.T @ delta
        grads[f"{key}.b"] = delta.sum(axis=0)
        return delta @ model.params[f"{key}.W"].T

    d = 2.0 * (y - t) / y.size
    d = layer_backward("out", d)
    for i in reversed(range(len(spec.trunk))):
        d = layer_backward(f"trunk.{i}", d)
    # Split the concat gradient back into the block tails.
    offset = 0
    for block in spec.blocks:
        width = block.out_width
        db = d[:, offset : offset + width]
        offset += width
        for i in reversed(range(len(block.layers))):
            db = layer_backward(f"block.{block.name}.{i}", db)
    return loss, grads


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 256
    learning_rate: float = 1e-3
    optimizer: str = "adam"  # "adam" | "sgd"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs: int = 50
    shuffle_seed: int = 0
    early_stop_patience: int = 0  # 0 disables early stopping

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer: {self.optimizer}")


@dataclass
class TrainReport:
    """Per-checkpoint losses; index 0 is the pre-training state."""

    train_mse: list[float] = field(default_factory=list)
    val_mse: list[float] = field(default_factory=list)
    best_epoch: int = 0
    epochs_run: int = 0
    wall_time_s: float = 0.0


class _Adam:
    def __init__(self, params: dict[str, np.ndarray], cfg: TrainConfig):
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0
        self.cfg = cfg

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        c = self.cfg
        self.t += 1
        bc1 = 1.0 - c.adam_beta1**self.t
        bc2 = 1.0 - c.adam_beta2**self.t
        for k, g in grads.items():
            m = self.m[k]
            v = self.v[k]
            m *= c.adam_beta1
            m += (1.0 - c.adam_beta1) * g
            v *= c.adam_beta2
            v += (1.0 - c.adam_beta2) * g * g
            params[k] -= c.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + c.adam_eps)


def _dataset_mse(model: MlpModel, inputs, targets, batch_size: int = 4096) -> float:
    n = targets.shape[0]
    total = 0.0
    for start in range(0, n, batch_size):
        sl = slice(start, min(start + batch_size, n))
        y = forward(model, {k: v[sl] for k, v in inputs.items()})
        total += float(np.sum((y - targets[sl]) ** 2))
    return total / targets.size


def train(
    model: MlpModel,
    dataset: tuple[dict[str, np.ndarray], np.ndarray],
    config: TrainConfig,
    validation: tuple[dict[str, np.ndarray], np.ndarray] | None = None,
) -> TrainReport:
    """Minibatch training; mutates the model in place.

    The report records full-dataset train (and validation) MSE before
    training and after every epoch. When a validation set is given, the
    parameters with the best validation MSE are restored at the end;
    ``early_stop_patience`` > 0 stops after that many epochs without
    improvement.
    """
    t0 = time.perf_counter()
    inputs, targets = dataset
    targets, _ = _as_batch(targets)
    if targets.shape[0] == 0:
        raise ValueError("empty dataset")
    inputs = _check_blocks(model.spec, inputs)
    n = targets.shape[0]

    opt = _Adam(model.params, config) if config.optimizer == "adam" else None
    rng = np.random.default_rng(config.shuffle_seed)
    report = TrainReport()
    report.train_mse.append(_dataset_mse(model, inputs, targets))

    val_in = val_t = None
    best_val = np.inf
    best_params = None
    if validation is not None:
        val_in = _check_blocks(model.spec, validation[0])
        val_t, _ = _as_batch(validation[1])
        report.val_mse.append(_dataset_mse(model, val_in, val_t))
        best_val = report.val_mse[0]
        best_params = model.copy_params()
        report.best_epoch = 0

    for epoch in range(1, config.epochs + 1):
        perm = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            batch_in = {k: v[idx] for k, v in inputs.items()}
            loss, grads = backward(model, batch_in, targets[idx])
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss {loss} at epoch {epoch}, sample {start}"
                )
            if opt is not None:
                opt.step(model.params, grads)
            else:
                for k, g in grads.items():
                    model.params[k] -= config.learning_rate * g
        report.train_mse.append(_dataset_mse(model, inputs, targets))
        report.epochs_run = epoch
        if val_in is not None:
            vm = _dataset_mse(model, val_in, val_t)
            report.val_mse.append(vm)
            if vm < best_val:
                best_val = vm
                best_params = model.copy_params()
                report.best_epoch = epoch
            elif (
                config.early_stop_patience > 0
                and epoch - report.best_epoch >= config.early_stop_patience
            ):
                break

    if best_params is not None:
        model.set_params(best_params)
    report.wall_time_s = time.perf_counter() - t0
    return report


def save_model(model: MlpModel, path, extra_meta: dict | None = None,
               extra_arrays: dict[str, np.ndarray] | None = None) -> None:
    """Write spec + parameters (and optional companion arrays) to an .npz file."""
    meta = {
        "format_version": MODEL_FORMAT_VERSION,
        "spec": model.spec.to_dict(),
        "init_seed": model.init_seed,
        "extra": extra_meta or {},
    }
    arrays = {f"param/{k}": v for k, v in model.params.items()}
    if extra_arrays:
        for k, v in extra_arrays.items():
            arrays[f"extra/{k}"] = v
    np.savez(path, __meta__=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
             **arrays)


def load_model(path) -> tuple[MlpModel, dict, dict[str, np.ndarray]]:
    """Load a model saved by save_model; returns (model, extra_meta, extra_arrays)."""
    try:
        with np.load(path) as data:
            arrays = {k: data[k] for k in data.files}
    except Exception as exc:
        raise ModelFormatError(f"cannot read model file {path}: {exc}") from exc
    if "__meta__" not in arrays:
        raise ModelFormatError(f"{path} is not a model file (missing metadata)")
    meta = json.loads(bytes(arrays.pop("__meta__")).decode())
    if meta.get("format_version") != MODEL_FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format {meta.get('format_version')}")
    spec = MlpSpec.from_dict(meta["spec"])
    model = MlpModel(spec, init_seed=meta.get("init_seed", 0), init=False)
    for key, ref in model.params.items():
        stored = arrays.pop(f"param/{key}", None)
        if stored is None:
            raise ModelFormatError(f"missing parameter '{key}' in {path}")
        if stored.shape != ref.shape:
            raise ModelFormatError(
                f"parameter '{key}' has shape {stored.shape}, spec requires {ref.shape}"
            )
        model.params[key] = stored.astype(float)
    extras = {k[len("extra/"):]: v for k, v in arrays.items() if k.startswith("extra/")}
    return model, meta.get("extra", {}), extras
