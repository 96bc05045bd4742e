"""The three downstream architectures and checkpoint serialization.

All models share the contract: sequence input for the convolutional
architectures, pooled mean+variance vectors for the MLP; a linear head with
3 outputs (regression) or K logits (classification).  Default sizes are
tuned so the three architectures land within +/-10% of one another in
trainable parameter count at 128 input dims.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass

import numpy as np

from .layers import (
    AvgPool1d,
    BatchNorm,
    Conv1d,
    GlobalAvgPool,
    Linear,
    MaxPool1d,
    PositionalEncoding,
    ReLU,
    Sequential,
    TransformerEncoderBlock,
    softmax,
)

CHECKPOINT_MAGIC = b"EMO1"

ARCHITECTURES = ("mlp", "cnn", "cnn_trans")
HEADS = ("regression", "classification")


class CheckpointError(Exception):
    """Malformed model checkpoint file."""


@dataclass
class ModelSpec:
    architecture: str  # mlp | cnn | cnn_trans
    head: str          # regression | classification
    input_dims: int = 128
    n_outputs: int = 3  # 3 for regression, K for classification
    mlp_widths: tuple = (256, 128, 64, 32, 32)
    cnn_channels: int = 60
    cnn_kernel: int = 5
    ct_channels: int = 44
    ct_kernel: int = 5
    d_model: int = 56
    n_heads: int = 2
    d_ff: int = 112
    n_blocks: int = 2
    pool_factor: int = 4

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {self.architecture!r}")
        if self.head not in HEADS:
            raise ValueError(f"unknown head {self.head!r}")
        if self.head == "classification" and self.n_outputs < 2:
            raise ValueError("classification needs at least 2 classes")
        if self.head == "regression" and self.n_outputs != 3:
            raise ValueError("regression head has exactly 3 outputs")
        if self.input_dims < 1:
            raise ValueError("input_dims must be positive")


class Model:
    """A built network: spec + layer graph.

    forward() returns head activations: raw values for regression, logits
    for classification (predict_proba applies the softmax).
    """

    def __init__(self, spec: ModelSpec):
        self.spec = spec

    @property
    def params(self):
        raise NotImplementedError

    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    def forward(self, x, train: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy) -> np.ndarray:
        raise NotImplementedError

    def predict_proba(self, x) -> np.ndarray:
        if self.spec.head != "classification":
            raise ValueError("predict_proba needs a classification head")
        return softmax(self.forward(x, train=False))

    def predict(self, x) -> np.ndarray:
        out = self.forward(x, train=False)
        if self.spec.head == "classification":
            return out.argmax(axis=1)
        return out

    def _check_input(self, x, expect_ndim, expect_last):
        x = np.asarray(x, dtype=float)
        if x.ndim != expect_ndim or x.shape[-1] != expect_last:
            raise ValueError(
                f"{self.spec.architecture} expects input (..., {expect_last}) with "
                f"{expect_ndim} axes, got shape {x.shape}"
            )
        return x


class MLPModel(Model):
    """Five stacked fully connected layers over pooled mean+variance input."""

    def __init__(self, spec: ModelSpec, rng):
        super().__init__(spec)
        layers = []
        d = 2 * spec.input_dims
        for w in spec.mlp_widths:
            layers += [Linear(d, w, rng), ReLU()]
            d = w
        layers.append(Linear(d, spec.n_outputs, rng))
        self.net = Sequential(*layers)

    @property
    def params(self):
        return self.net.params

    def forward(self, x, train=False):
        x = self._check_input(x, 2, 2 * self.spec.input_dims)
        return self.net.forward(x, train)

    def backward(self, dy):
        return self.net.backward(dy)


class CNNModel(Model):
    """Five conv + batch-norm + max-pool blocks, then global average pooling."""

    def __init__(self, spec: ModelSpec, rng):
        super().__init__(spec)
        layers = []
        c_in = spec.input_dims
        for _ in range(5):
            layers += [
                Conv1d(c_in, spec.cnn_channels, spec.cnn_kernel, rng),
                BatchNorm(spec.cnn_channels),
                ReLU(),
                MaxPool1d(2),
            ]
            c_in = spec.cnn_channels
        layers += [GlobalAvgPool(), Linear(spec.cnn_channels, spec.n_outputs, rng)]
        self.net = Sequential(*layers)

    @property
    def params(self):
        return self.net.params

    def forward(self, x, train=False):
        x = self._check_input(x, 3, self.spec.input_dims)
        if x.shape[1] < 2 ** 5:
            raise ValueError(f"cnn needs at least 32 frames, got {x.shape[1]}")
        return self.net.forward(x, train)

    def backward(self, dy):
        return self.net.backward(dy)


class CNNTransModel(Model):
    """Parallel branches: stacked convolutions alongside average pooling into
    transformer encoder blocks; outputs are concatenated into the head."""

    def __init__(self, spec: ModelSpec, rng):
        super().__init__(spec)
        conv = []
        c_in = spec.input_dims
        for _ in range(4):
            conv += [Conv1d(c_in, spec.ct_channels, spec.ct_kernel, rng), ReLU()]
            c_in = spec.ct_channels
        conv.append(GlobalAvgPool())
        self.conv_branch = Sequential(*conv)

        trans = [
            AvgPool1d(spec.pool_factor),
            Linear(spec.input_dims, spec.d_model, rng),
            PositionalEncoding(spec.d_model),
        ]
        for _ in range(spec.n_blocks):
            trans.append(TransformerEncoderBlock(spec.d_model, spec.n_heads, spec.d_ff, rng))
        trans.append(GlobalAvgPool())
        self.trans_branch = Sequential(*trans)

        self.head = Linear(spec.ct_channels + spec.d_model, spec.n_outputs, rng)

    @property
    def params(self):
        return self.conv_branch.params + self.trans_branch.params + self.head.params

    def forward(self, x, train=False):
        x = self._check_input(x, 3, self.spec.input_dims)
        if x.shape[1] < self.spec.pool_factor:
            raise ValueError(
                f"cnn_trans needs at least {self.spec.pool_factor} frames, got {x.shape[1]}"
            )
        a = self.conv_branch.forward(x, train)
        b = self.trans_branch.forward(x, train)
        self._split_at = a.shape[1]
        return self.head.forward(np.concatenate([a, b], axis=1), train)

    def backward(self, dy):
        dcat = self.head.backward(dy)
        da = self.conv_branch.backward(dcat[:, :self._split_at])
        db = self.trans_branch.backward(dcat[:, self._split_at:])
        return da + db


def build_model(spec: ModelSpec, seed: int) -> Model:
    """Instantiate an architecture with seeded fan-in-uniform initialization."""
    rng = np.random.default_rng(seed)
    if spec.architecture == "mlp":
        return MLPModel(spec, rng)
    if spec.architecture == "cnn":
        return CNNModel(spec, rng)
    return CNNTransModel(spec, rng)


def save_checkpoint(model: Model, path) -> None:
    """Binary checkpoint: magic "EMO1", JSON spec, float32 parameter blobs in
    declaration order.  Includes batch-norm running statistics so eval-mode
    forward survives the round trip."""
    spec_blob = json.dumps(asdict(model.spec), sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(spec_blob)))
        fh.write(spec_blob)
        for p in model.params:
            fh.write(p.value.astype("<f4").tobytes())
        for stat in _running_stats(model):
            fh.write(stat.astype("<f4").tobytes())


def load_checkpoint(path) -> Model:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"bad magic in {path}: {blob[:4]!r}")
    if len(blob) < 8:
        raise CheckpointError(f"truncated checkpoint {path}")
    (spec_len,) = struct.unpack("<I", blob[4:8])
    try:
        raw = json.loads(blob[8:8 + spec_len])
        raw["mlp_widths"] = tuple(raw["mlp_widths"])
        spec = ModelSpec(**raw)
    except (json.JSONDecodeError, TypeError, KeyError) as e:
        raise CheckpointError(f"bad spec in {path}: {e}") from e
    model = build_model(spec, seed=0)
    offset = 8 + spec_len
    for p in model.params:
        end = offset + 4 * p.size
        if end > len(blob):
            raise CheckpointError(f"truncated parameters in {path}")
        p.value = np.frombuffer(blob[offset:end], dtype="<f4").astype(float).reshape(
            p.value.shape
        )
        p.grad = np.zeros_like(p.value)
        offset = end
    for stat in _running_stats(model):
        end = offset + 4 * stat.size
        if end > len(blob):
            raise CheckpointError(f"truncated running stats in {path}")
        stat[:] = np.frombuffer(blob[offset:end], dtype="<f4").astype(float)
        offset = end
    if offset != len(blob):
        raise CheckpointError(f"trailing bytes in {path}")
    return model


def _layers_of(model: Model):
    if isinstance(model, CNNTransModel):
        return model.conv_branch.layers + model.trans_branch.layers + [model.head]
    return model.net.layers


def _running_stats(model: Model):
    stats = []
    for layer in _layers_of(model):
        if isinstance(layer, BatchNorm):
            stats += [layer.running_mean, layer.running_var]
    return stats
