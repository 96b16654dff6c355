"""Leaky integrate-and-fire networks unrolled over discrete timesteps.

Feedforward networks are simulated layer by layer: the synaptic drive of a
layer for all T timesteps is one matmul/conv over the stacked T*B inputs, then
the membrane recurrence is unrolled step by step.  This is equivalent to the
time-major loop for any network without recurrent connections.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from . import tape
from .tape import DimensionError, Tensor

RESET_MODES = ("subtract", "zero")


@dataclass(frozen=True)
class LifConfig:
    beta: float = 0.9
    theta: float = 1.0
    gamma: float = 1.0
    reset: str = "subtract"

    def __post_init__(self):
        if not 0.0 < self.beta <= 1.0:
            raise ValueError(f"beta must lie in (0, 1], got {self.beta}")
        if self.theta <= 0:
            raise ValueError(f"theta must be positive, got {self.theta}")
        if self.gamma <= 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.reset not in RESET_MODES:
            raise ValueError(f"reset must be one of {RESET_MODES}, got {self.reset!r}")


@dataclass
class LifLayer:
    """Spiking layer: dense (in x out weights) or conv (F x C x kh x kw kernel)."""

    kind: str
    weights: Tensor
    config: LifConfig = field(default_factory=LifConfig)
    stride: int = 1
    padding: int = 0
    membrane: Tensor | None = None

    def drive(self, x: Tensor) -> Tensor:
        if self.kind == "dense":
            if x.ndim != 2:
                x = tape.reshape(x, (x.shape[0], -1))
            return tape.matmul(x, self.weights)
        if self.kind == "conv":
            return tape.conv2d(x, self.weights, self.stride, self.padding)
        raise ValueError(f"unknown layer kind {self.kind!r}")

    def reset_state(self, shape: tuple[int, ...]) -> None:
        self.membrane = Tensor(np.zeros(shape))


@dataclass
class AvgPool:
    """Stateless 2x2 average pooling between spiking layers."""

    def __call__(self, x: Tensor) -> Tensor:
        return tape.avgpool2(x)


@dataclass
class Readout:
    """Non-spiking leaky integrator; classification uses its max-over-time membrane."""

    weights: Tensor
    beta: float = 0.9


Layer = Union[LifLayer, AvgPool]


@dataclass
class Network:
    layers: list[Layer]
    readout: Readout
    timesteps: int
    input_shape: tuple[int, ...]

    @property
    def spiking_layers(self) -> list[LifLayer]:
        return [layer for layer in self.layers if isinstance(layer, LifLayer)]

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        params = [(f"layer{i}.weights", layer.weights)
                  for i, layer in enumerate(self.layers) if isinstance(layer, LifLayer)]
        params.append(("readout.weights", self.readout.weights))
        return params

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None


@dataclass
class SpikeTrain:
    """Binary spikes with shape T x B x (per-sample shape)."""

    values: np.ndarray

    def __post_init__(self):
        if self.values.ndim < 2:
            raise DimensionError(f"spike train needs T x B x ... dims, got {self.values.shape}")

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def B(self) -> int:
        return self.values.shape[1]


@dataclass
class SpikeRecord:
    layer_sums: list[Tensor] = field(default_factory=list)
    layer_counts: list[int] = field(default_factory=list)
    batch_size: int = 1
    sample_counts: np.ndarray | None = None   # per-sample totals, integer

    @property
    def total_count(self) -> int:
        return int(np.sum(self.layer_counts, dtype=np.int64)) if self.layer_counts else 0

    @property
    def total_sum(self) -> Tensor:
        return count_spikes(self)[0]


# ---------------------------------------------------------------- dynamics

def lif_update(layer: LifLayer, drive_t: Tensor) -> Tensor:
    """Integrate one timestep of precomputed synaptic drive; returns the spikes."""
    cfg = layer.config
    if layer.membrane is None:
        layer.reset_state(drive_t.shape)
    if layer.membrane.shape != drive_t.shape:
        raise DimensionError(f"membrane {layer.membrane.shape} vs drive {drive_t.shape}")
    v = tape.add(tape.scale(layer.membrane, cfg.beta), drive_t)
    spikes = tape.spike_threshold(v, cfg.theta, cfg.gamma)
    fired = tape.detach(spikes)
    if cfg.reset == "subtract":
        layer.membrane = tape.sub(v, tape.scale(fired, cfg.theta))
    else:
        layer.membrane = tape.mul(v, Tensor(1.0 - fired.data))
    return spikes


def lif_step(layer: LifLayer, input_t: Tensor) -> tuple[Tensor, Tensor]:
    """One timestep: drive from ``input_t``, leak, fire, reset."""
    spikes = lif_update(layer, layer.drive(input_t))
    return spikes, layer.membrane


def _drive_all(layer: LifLayer, x: Tensor, T: int, B: int) -> Tensor:
    flat = tape.reshape(x, (T * B,) + x.shape[2:])
    d = layer.drive(flat)
    return tape.reshape(d, (T, B) + d.shape[1:])


def forward(net: Network, train: SpikeTrain) -> tuple[Tensor, SpikeRecord]:
    """Run the network over a spike train.

    Returns the BxK readout (elementwise max of the readout membrane over
    time) and the record of hidden-layer spikes.
    """
    T, B = train.T, train.B
    if T != net.timesteps:
        raise ValueError(f"spike train has {T} timesteps, network expects {net.timesteps}")
    if tuple(train.values.shape[2:]) != tuple(net.input_shape):
        raise DimensionError(f"input shape {train.values.shape[2:]} != {net.input_shape}")

    x = Tensor(train.values)
    record = SpikeRecord(batch_size=B, sample_counts=np.zeros(B, dtype=np.int64))
    for layer in net.layers:
        if isinstance(layer, AvgPool):
            pooled = layer(tape.reshape(x, (T * B,) + x.shape[2:]))
            x = tape.reshape(pooled, (T, B) + pooled.shape[1:])
            continue
        drives = tape.unstack(_drive_all(layer, x, T, B))
        layer.reset_state(drives[0].shape)
        spikes = [lif_update(layer, d) for d in drives]
        x = tape.stack(spikes)
        record.layer_sums.append(tape.sum(x))
        per_sample = np.count_nonzero(x.data.reshape(T, B, -1), axis=(0, 2))
        record.sample_counts += per_sample
        record.layer_counts.append(int(per_sample.sum()))

    flat = tape.reshape(x, (T * B, -1))
    w = net.readout.weights
    if flat.shape[1] != w.shape[0]:
        raise DimensionError(f"readout expects {w.shape[0]} inputs, got {flat.shape[1]}")
    drives = tape.unstack(tape.reshape(tape.matmul(flat, w), (T, B, w.shape[1])))
    u = drives[0]
    peak = u
    for d in drives[1:]:
        u = tape.add(tape.scale(u, net.readout.beta), d)
        peak = tape.maximum(peak, u)
    return peak, record


def count_spikes(record: SpikeRecord) -> tuple[Tensor, int]:
    """Differentiable total spike sum and its exact integer value."""
    if not record.layer_sums:
        return Tensor(0.0), 0
    total = record.layer_sums[0]
    for s in record.layer_sums[1:]:
        total = tape.add(total, s)
    return total, record.total_count


# ---------------------------------------------------------------- encoding

def encode_poisson(image, T: int, max_rate: float = 1.0,
                   seed: int | np.random.Generator | None = None) -> SpikeTrain:
    """Rate-code pixel intensities in [0, 1] into a T x B x ... spike train.

    Each pixel fires independently per step with probability pixel * max_rate.
    """
    img = image.data if isinstance(image, Tensor) else np.asarray(image, dtype=np.float64)
    if not 0.0 < max_rate <= 1.0:
        raise ValueError(f"max_rate must lie in (0, 1], got {max_rate}")
    if T < 1:
        raise ValueError(f"T must be positive, got {T}")
    if img.size and (img.min() < 0.0 or img.max() > 1.0 or not np.isfinite(img).all()):
        raise ValueError("pixel values must lie in [0, 1]")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    p = img * max_rate
    return SpikeTrain((rng.random((T,) + img.shape) < p).astype(np.float64))


# ---------------------------------------------------------------- assembly

@dataclass(frozen=True)
class LayerSpec:
    kind: str           # dense | conv | pool
    size: int = 0       # units (dense) or filters (conv)
    kernel: int = 0
    stride: int = 1
    padding: int = 0

    def __str__(self) -> str:
        if self.kind == "dense":
            return f"dense:{self.size}"
        if self.kind == "conv":
            return f"conv:{self.size}:{self.kernel}:{self.stride}:{self.padding}"
        return "pool"


def parse_architecture(text: str) -> list[LayerSpec]:
    """Parse e.g. ``"conv:6:5,pool,conv:16:5,pool,dense:120"``.

    conv entries are ``conv:filters:kernel[:stride[:padding]]``.
    """
    specs = []
    for raw in text.split(","):
        parts = raw.strip().split(":")
        kind = parts[0]
        try:
            nums = [int(p) for p in parts[1:]]
        except ValueError as exc:
            raise ValueError(f"bad layer spec {raw.strip()!r}") from exc
        if kind == "dense" and len(nums) == 1 and nums[0] > 0:
            specs.append(LayerSpec("dense", nums[0]))
        elif kind == "conv" and 2 <= len(nums) <= 4 and min(nums) >= 0 and nums[0] > 0 and nums[1] > 0:
            stride = nums[2] if len(nums) > 2 else 1
            padding = nums[3] if len(nums) > 3 else 0
            if stride < 1:
                raise ValueError(f"bad layer spec {raw.strip()!r}")
            specs.append(LayerSpec("conv", nums[0], nums[1], stride, padding))
        elif kind == "pool" and not nums:
            specs.append(LayerSpec("pool"))
        else:
            raise ValueError(f"bad layer spec {raw.strip()!r}")
    return specs


def format_architecture(specs: Sequence[LayerSpec]) -> str:
    return ",".join(str(s) for s in specs)


def _init_weights(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, gain: float) -> Tensor:
    bound = gain * np.sqrt(3.0 / fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def build_network(specs: Sequence[LayerSpec], input_shape: tuple[int, ...], n_classes: int,
                  lif: LifConfig = LifConfig(), timesteps: int = 25, beta_readout: float = 0.9,
                  seed: int | np.random.Generator | None = 0, init_gain: float = 1.0) -> Network:
    """Assemble a network, checking that layer shapes compose.

    Weights are uniform with variance ``init_gain**2 / fan_in``.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    shape = tuple(input_shape)
    layers: list[Layer] = []
    for spec in specs:
        if spec.kind == "dense":
            fan_in = int(np.prod(shape))
            layers.append(LifLayer("dense", _init_weights(rng, (fan_in, spec.size), fan_in, init_gain), lif))
            shape = (spec.size,)
        elif spec.kind == "conv":
            if len(shape) != 3:
                raise DimensionError(f"conv layer needs CxHxW input, got {shape}")
            C, H, W = shape
            k = spec.kernel
            Ho = tape._conv_out(H, k, spec.stride, spec.padding)
            Wo = tape._conv_out(W, k, spec.stride, spec.padding)
            fan_in = C * k * k
            layers.append(LifLayer("conv", _init_weights(rng, (spec.size, C, k, k), fan_in, init_gain),
                                   lif, spec.stride, spec.padding))
            shape = (spec.size, Ho, Wo)
        elif spec.kind == "pool":
            if len(shape) != 3 or shape[1] % 2 or shape[2] % 2:
                raise DimensionError(f"pool needs CxHxW input with even H, W, got {shape}")
            layers.append(AvgPool())
            shape = (shape[0], shape[1] // 2, shape[2] // 2)
        else:
            raise ValueError(f"unknown layer kind {spec.kind!r}")
    fan_in = int(np.prod(shape))
    readout = Readout(_init_weights(rng, (fan_in, n_classes), fan_in, init_gain), beta_readout)
    return Network(layers, readout, timesteps, tuple(input_shape))
