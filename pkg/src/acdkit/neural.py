"""From-scratch fully connected network engine for the spectral predictors.

Plain numpy, float64 throughout: He-normal init, ReLU hidden layers, a
selectable linear or ReLU output layer, squared-error loss with L2 weight
decay, exact reverse-mode gradients, Adam, and seeded mini-batch training.
Everything is deterministic under a fixed seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataIOError, ValidationError

OUTPUT_ACTIVATIONS = ("linear", "relu")


@dataclass(frozen=True)
class NetworkShape:
    """Layer widths of a fully connected net: input -> hidden... -> output."""

    input_dim: int
    hidden: tuple[int, ...]
    output_dim: int
    output_activation: str = "linear"

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        widths = (self.input_dim, *self.hidden, self.output_dim)
        if any(w < 1 for w in widths):
            raise ValidationError(f"all layer widths must be >= 1, got {widths}")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ValidationError(
                f"output_activation must be one of {OUTPUT_ACTIVATIONS}, "
                f"got '{self.output_activation}'"
            )

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden, self.output_dim)

    @classmethod
    def bottleneck(
        cls, bands: int, h1: int, h2: int, output_activation: str = "linear"
    ) -> "NetworkShape":
        """Mirrored three-hidden-layer shape Q -> h1 -> h2 -> h1 -> Q.

        Requires h1 < bands and h2 < h1 so the middle layer is a genuine
        compression of the spectrum.
        """
        shape = cls(bands, (h1, h2, h1), bands, output_activation)
        shape.require_bottleneck()
        return shape

    def require_bottleneck(self) -> None:
        """Reject shapes that do not compress: hidden must be (h1, h2, h1) with h2 < h1 < Q."""
        ok = (
            len(self.hidden) == 3
            and self.hidden[0] == self.hidden[2]
            and self.hidden[0] < self.input_dim
            and self.hidden[1] < self.hidden[0]
            and self.input_dim == self.output_dim
        )
        if not ok:
            raise ValidationError(
                f"shape {self.layer_dims} is not a mirrored bottleneck "
                "(need hidden (h1, h2, h1) with h2 < h1 < input_dim)"
            )


@dataclass
class MlpParams:
    """Per-layer weight matrices (out x in) and bias vectors, float64."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    output_activation: str = "linear"

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValidationError("weights and biases must be non-empty parallel lists")
        self.weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in self.biases]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise ValidationError(f"layer {i} has inconsistent shapes {w.shape}, {b.shape}")
            if i > 0 and w.shape[1] != self.weights[i - 1].shape[0]:
                raise ValidationError(
                    f"layer {i} input dim {w.shape[1]} != previous output "
                    f"{self.weights[i - 1].shape[0]}"
                )
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValidationError(f"layer {i} contains non-finite entries")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ValidationError(f"unknown output_activation '{self.output_activation}'")

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[0]

    def copy(self) -> "MlpParams":
        return MlpParams(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.output_activation,
        )


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for mini-batch Adam training."""

    epochs: int = 200
    batch_size: int = 256
    learning_rate: float = 1e-3
    l2_lambda: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValidationError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ValidationError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.l2_lambda < 0:
            raise ValidationError(f"l2_lambda must be >= 0, got {self.l2_lambda}")


@dataclass(frozen=True)
class SampleSet:
    """Paired (input, label) spectra; row i of both sides comes from one pixel."""

    inputs: np.ndarray  # (S, Q)
    labels: np.ndarray  # (S, Q)
    indices: np.ndarray | None = None  # source pixel rows, kept for audit

    def __post_init__(self):
        inputs = np.asarray(self.inputs, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.float64)
        if inputs.ndim != 2 or labels.ndim != 2:
            raise ValidationError("sample inputs and labels must be 2-D matrices")
        if inputs.shape[0] != labels.shape[0]:
            raise ValidationError(
                f"inputs have {inputs.shape[0]} rows, labels {labels.shape[0]}"
            )
        if not (np.all(np.isfinite(inputs)) and np.all(np.isfinite(labels))):
            raise ValidationError("sample set contains non-finite values")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "labels", labels)
        if self.indices is not None:
            object.__setattr__(self, "indices", np.asarray(self.indices, dtype=np.int64))

    @property
    def size(self) -> int:
        return self.inputs.shape[0]

    def swapped(self) -> "SampleSet":
        """The same pixel pairs with input and label roles exchanged."""
        return SampleSet(self.labels, self.inputs, self.indices)


@dataclass
class AdamState:
    """First/second moment accumulators and the step counter."""

    m_weights: list[np.ndarray]
    v_weights: list[np.ndarray]
    m_biases: list[np.ndarray]
    v_biases: list[np.ndarray]
    step: int = 0


def _init_from_rng(shape: NetworkShape, rng: np.random.Generator) -> MlpParams:
    dims = shape.layer_dims
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases, shape.output_activation)


def init_params(shape: NetworkShape, seed: int) -> MlpParams:
    """He-normal weights (variance 2 / fan_in), zero biases, seeded."""
    return _init_from_rng(shape, np.random.default_rng(seed))


def forward_batch(params: MlpParams, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Run a (B, Q) batch through the net.

    Returns the (B, output_dim) outputs and the list of post-activation
    values per layer (inputs first, outputs last) needed for backprop.
    """
    batch = np.asarray(x, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[1] != params.input_dim:
        raise ValidationError(
            f"batch shape {batch.shape} does not match input_dim {params.input_dim}"
        )
    activations = [batch]
    current = batch
    last = params.n_layers - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        current = current @ w.T + b
        if i < last or params.output_activation == "relu":
            current = np.maximum(current, 0.0)
        activations.append(current)
    return current, activations


def forward(params: MlpParams, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Single-vector forward pass; see `forward_batch`."""
    vec = np.asarray(x, dtype=np.float64)
    if vec.ndim != 1:
        raise ValidationError(f"expected a 1-D spectrum, got shape {vec.shape}")
    out, acts = forward_batch(params, vec[np.newaxis, :])
    return out[0], [a[0] for a in acts]


def loss(params: MlpParams, batch: SampleSet, l2_lambda: float) -> float:
    """Mean squared spectral norm plus L2 weight decay.

    (1/S) sum_i ||out_i - label_i||^2 + lambda * sum_j ||W_j||_F^2.
    The squared norm sums over bands without dividing by Q; biases are not
    regularized.
    """
    if batch.size == 0:
        raise ValidationError("loss of an empty batch is undefined")
    out, _ = forward_batch(params, batch.inputs)
    data_term = float(np.sum((out - batch.labels) ** 2)) / batch.size
    reg_term = l2_lambda * sum(float(np.sum(w * w)) for w in params.weights)
    return data_term + reg_term


def _loss_and_grads(
    params: MlpParams, inputs: np.ndarray, labels: np.ndarray, l2_lambda: float
) -> tuple[float, MlpParams]:
    out, acts = forward_batch(params, inputs)
    size = inputs.shape[0]
    residual = out - labels
    value = float(np.sum(residual * residual)) / size
    value += l2_lambda * sum(float(np.sum(w * w)) for w in params.weights)

    delta = (2.0 / size) * residual
    if params.output_activation == "relu":
        delta = delta * (acts[-1] > 0.0)
    grad_w = [None] * params.n_layers
    grad_b = [None] * params.n_layers
    for i in range(params.n_layers - 1, -1, -1):
        grad_w[i] = delta.T @ acts[i] + 2.0 * l2_lambda * params.weights[i]
        grad_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ params.weights[i]) * (acts[i] > 0.0)
    return value, MlpParams(grad_w, grad_b, params.output_activation)


def backward(params: MlpParams, batch: SampleSet, l2_lambda: float) -> MlpParams:
    """Exact gradient of `loss` w.r.t. every weight and bias.

    ReLU uses the zero subgradient at 0. The return value reuses MlpParams
    as a container of gradient arrays with matching shapes.
    """
    if batch.size == 0:
        raise ValidationError("gradient of an empty batch is undefined")
    _, grads = _loss_and_grads(params, batch.inputs, batch.labels, l2_lambda)
    return grads


def init_adam_state(params: MlpParams) -> AdamState:
    return AdamState(
        m_weights=[np.zeros_like(w) for w in params.weights],
        v_weights=[np.zeros_like(w) for w in params.weights],
        m_biases=[np.zeros_like(b) for b in params.biases],
        v_biases=[np.zeros_like(b) for b in params.biases],
    )


def adam_step(
    params: MlpParams, grads: MlpParams, state: AdamState, config: TrainConfig
) -> tuple[MlpParams, AdamState]:
    """One bias-corrected Adam update; returns fresh params and state."""
    if [w.shape for w in grads.weights] != [w.shape for w in params.weights]:
        raise ValidationError("gradient shapes do not match parameter shapes")
    b1, b2, eps, lr = (
        config.adam_beta1,
        config.adam_beta2,
        config.adam_eps,
        config.learning_rate,
    )
    t = state.step + 1
    corr1 = 1.0 - b1**t
    corr2 = 1.0 - b2**t

    def update(p, g, m, v):
        m_new = b1 * m + (1.0 - b1) * g
        v_new = b2 * v + (1.0 - b2) * (g * g)
        p_new = p - lr * (m_new / corr1) / (np.sqrt(v_new / corr2) + eps)
        return p_new, m_new, v_new

    new_w, new_mw, new_vw = [], [], []
    for p, g, m, v in zip(params.weights, grads.weights, state.m_weights, state.v_weights):
        pn, mn, vn = update(p, g, m, v)
        new_w.append(pn)
        new_mw.append(mn)
        new_vw.append(vn)
    new_b, new_mb, new_vb = [], [], []
    for p, g, m, v in zip(params.biases, grads.biases, state.m_biases, state.v_biases):
        pn, mn, vn = update(p, g, m, v)
        new_b.append(pn)
        new_mb.append(mn)
        new_vb.append(vn)
    return (
        MlpParams(new_w, new_b, params.output_activation),
        AdamState(new_mw, new_vw, new_mb, new_vb, t),
    )


def train(
    shape: NetworkShape, samples: SampleSet, config: TrainConfig
) -> tuple[MlpParams, list[float]]:
    """Seeded mini-batch Adam training.

    Samples are reshuffled every epoch with the generator that also drew
    the initial weights, so a fixed seed yields a bit-identical run. The
    final short batch of each epoch is trained on like any other. Returns
    the trained parameters and the mean mini-batch loss per epoch
    (recorded before each update).
    """
    if samples.size == 0:
        raise ValidationError("cannot train on an empty sample set")
    if shape.input_dim != samples.inputs.shape[1] or shape.output_dim != samples.labels.shape[1]:
        raise ValidationError(
            f"shape {shape.layer_dims} does not match sample dims "
            f"{samples.inputs.shape[1]} -> {samples.labels.shape[1]}"
        )
    rng = np.random.default_rng(config.seed)
    params = _init_from_rng(shape, rng)
    state = init_adam_state(params)
    history: list[float] = []
    for _ in range(config.epochs):
        order = rng.permutation(samples.size)
        batch_losses = []
        for start in range(0, samples.size, config.batch_size):
            idx = order[start : start + config.batch_size]
            value, grads = _loss_and_grads(
                params, samples.inputs[idx], samples.labels[idx], config.l2_lambda
            )
            params, state = adam_step(params, grads, state, config)
            batch_losses.append(value)
        history.append(float(np.mean(batch_losses)))
    return params, history


def save_params(params: MlpParams, path) -> None:
    """Serialize params as a JSON header plus one raw float64 blob per layer.

    Each layer's blob is the row-major weight matrix followed by the bias
    vector, little-endian. Loading restores the exact float64 values.
    """
    header_path = Path(path)
    layers = []
    try:
        for i, (w, b) in enumerate(zip(params.weights, params.biases)):
            raw_name = f"{header_path.stem}.layer{i}.raw"
            blob = np.concatenate([w.ravel(), b]).astype("<f8").tobytes()
            (header_path.parent / raw_name).write_bytes(blob)
            layers.append({"out": w.shape[0], "in": w.shape[1], "raw": raw_name})
        header = {
            "dtype": "f64",
            "output_activation": params.output_activation,
            "layers": layers,
        }
        header_path.write_text(json.dumps(header, indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise DataIOError(f"cannot write params to {header_path}: {exc}") from exc


def load_params(path) -> MlpParams:
    """Inverse of `save_params`."""
    header_path = Path(path)
    try:
        header = json.loads(header_path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataIOError(f"cannot read params header {header_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataIOError(f"malformed params header {header_path}: {exc}") from exc
    if header.get("dtype") != "f64":
        raise DataIOError(f"unsupported params dtype '{header.get('dtype')}'")
    weights, biases = [], []
    for layer in header["layers"]:
        out_dim, in_dim = int(layer["out"]), int(layer["in"])
        raw_path = header_path.parent / layer["raw"]
        try:
            blob = raw_path.read_bytes()
        except OSError as exc:
            raise DataIOError(f"cannot read params blob {raw_path}: {exc}") from exc
        expected = (out_dim * in_dim + out_dim) * 8
        if len(blob) != expected:
            raise DataIOError(
                f"params blob {raw_path} holds {len(blob)} bytes, header implies {expected}"
            )
        flat = np.frombuffer(blob, dtype="<f8")
        weights.append(flat[: out_dim * in_dim].reshape(out_dim, in_dim).copy())
        biases.append(flat[out_dim * in_dim :].copy())
    return MlpParams(weights, biases, header.get("output_activation", "linear"))


def derived_seed(base: int, *keys: int) -> int:
    """A deterministic 64-bit sub-seed from a base seed and integer keys."""
    seq = np.random.SeedSequence([int(base) & 0xFFFFFFFFFFFFFFFF, *[int(k) for k in keys]])
    return int(seq.generate_state(1, np.uint64)[0])
