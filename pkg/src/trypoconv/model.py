"""VGG16-style cut models: configuration, construction and parameter counting."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .nn import DTYPE, Conv2D, Dense, Dropout, Flatten, GlobalPool, Layer, MaxPool2, Param, ReLU, make_rng

VGG16_BLOCKS = ((64, 64), (128, 128), (256, 256, 256), (512, 512, 512), (512, 512, 512))

# Parameter totals of the default configs, keyed by number of conv blocks.
EXPECTED_PARAMS = {5: 17_926_209, 4: 8_161_089, 3: 1_867_329, 2: 293_313, 1: 47_105}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    """Architecture of one cut model.

    ``head="conv"`` is the fully convolutional head (1x1 conv, global pooling,
    hidden dense, output dense); ``head="flatten"`` is the classic VGG head and
    only exists for the full 5-block base. ``conv_width``/``hidden`` default to
    the width of the last conv block (conv head) or 128 (flatten head).
    """

    blocks: int = 2
    head: str = "conv"
    pool_mode: str = "avg"
    conv_width: Optional[int] = None
    hidden: Optional[int] = None
    dropout_rate: float = 0.5
    input_size: int = 224

    @classmethod
    def default(cls, blocks: int, **overrides) -> "ModelConfig":
        """The default configuration for ``blocks`` conv blocks."""
        head = "flatten" if blocks == 5 else "conv"
        return cls(blocks=blocks, head=head, **overrides)

    @property
    def base_width(self) -> int:
        return VGG16_BLOCKS[self.blocks - 1][-1]

    @property
    def resolved_conv_width(self) -> int:
        return self.conv_width if self.conv_width is not None else self.base_width

    @property
    def resolved_hidden(self) -> int:
        if self.hidden is not None:
            return self.hidden
        return 128 if self.head == "flatten" else self.base_width

    def validate(self) -> "ModelConfig":
        if self.blocks not in (1, 2, 3, 4, 5):
            raise ConfigError(f"blocks must be in 1..5, got {self.blocks}")
        if self.head not in ("conv", "flatten"):
            raise ConfigError(f"head must be 'conv' or 'flatten', got {self.head!r}")
        if self.head == "flatten" and self.blocks != 5:
            raise ConfigError(f"flatten head requires blocks=5, got blocks={self.blocks}")
        if self.pool_mode not in ("avg", "max"):
            raise ConfigError(f"pool_mode must be 'avg' or 'max', got {self.pool_mode!r}")
        if self.head == "conv" and not 32 <= self.resolved_hidden <= 1024:
            raise ConfigError(f"conv head hidden width must be in [32, 1024], got {self.resolved_hidden}")
        if self.resolved_hidden < 1 or self.resolved_conv_width < 1:
            raise ConfigError("layer widths must be positive")
        if not 0 <= self.dropout_rate < 1:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.input_size < 1 or self.input_size % (2**self.blocks):
            raise ConfigError(
                f"input_size {self.input_size} must be divisible by 2^blocks = {2**self.blocks}"
            )
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


def layer_shapes(config: ModelConfig) -> list[tuple[str, tuple[int, ...], tuple[int, ...]]]:
    """(name, weight shape, bias shape) of every parametrised layer, in stack order."""
    config.validate()
    shapes = []
    c_in = 3
    for b, widths in enumerate(VGG16_BLOCKS[: config.blocks], start=1):
        for i, w in enumerate(widths, start=1):
            shapes.append((f"block{b}_conv{i}", (w, c_in, 3, 3), (w,)))
            c_in = w
    hidden = config.resolved_hidden
    if config.head == "conv":
        cw = config.resolved_conv_width
        shapes.append(("head_conv", (cw, c_in, 1, 1), (cw,)))
        d = cw
    else:
        side = config.input_size // 2**config.blocks
        d = side * side * c_in
    shapes.append(("fc_hidden", (d, hidden), (hidden,)))
    shapes.append(("fc_out", (hidden, 1), (1,)))
    return shapes


def count_config_params(config: ModelConfig) -> int:
    """Closed-form parameter count without allocating the model."""
    return sum(int(np.prod(w)) + int(np.prod(b)) for _, w, b in layer_shapes(config))


class Model:
    """A sequential layer stack with named feature taps.

    The tap ``block{j}`` is the post-ReLU output of the last conv of block j,
    i.e. the input of that block's max pool.
    """

    def __init__(self, config: ModelConfig, layers: list[tuple[str, Layer]], taps: dict[str, int]):
        self.config = config
        self.layers = layers
        self.taps = taps
        self.activations: dict[str, np.ndarray] = {}
        self.tap_grads: dict[str, np.ndarray] = {}
        self._tap_at = {i: name for name, i in taps.items()}

    def params(self) -> list[Param]:
        return [p for _, layer in self.layers for p in layer.params()]

    def named_params(self) -> list[tuple[str, Param]]:
        out = []
        for name, layer in self.layers:
            for suffix, p in zip(("weight", "bias"), layer.params()):
                out.append((f"{name}.{suffix}", p))
        return out

    def zero_grad(self):
        for p in self.params():
            p.zero_grad()

    def set_dropout_rng(self, rng: np.random.Generator):
        for _, layer in self.layers:
            if isinstance(layer, Dropout):
                layer.rng = rng

    def tap_index(self, tap) -> int:
        name = f"block{tap}" if isinstance(tap, (int, np.integer)) else tap
        if name not in self.taps:
            raise KeyError(f"no feature tap {tap!r}; available: {sorted(self.taps)}")
        return self.taps[name]

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        self.activations = {}
        for i, (_, layer) in enumerate(self.layers):
            x = layer.forward(x, training=training)
            if i in self._tap_at:
                self.activations[self._tap_at[i]] = x
        return x

    def backward(self, grad: np.ndarray, input_grad: bool = True) -> np.ndarray | None:
        """Backpropagate ``grad`` (w.r.t. the logits); records gradients at every tap.

        ``input_grad=False`` skips the gradient w.r.t. the image, which
        training never needs.
        """
        self.tap_grads = {}
        for i in range(len(self.layers) - 1, -1, -1):
            if i in self._tap_at:
                self.tap_grads[self._tap_at[i]] = grad
            layer = self.layers[i][1]
            if i == 0 and not input_grad and isinstance(layer, Conv2D):
                return layer.backward(grad, need_input=False)
            grad = layer.backward(grad)
        return grad

    def forward_from(self, activation: np.ndarray, tap, training: bool = False) -> np.ndarray:
        """Run only the layers after ``tap`` on a given tap activation."""
        start = self.tap_index(tap) + 1
        x = activation
        for _, layer in self.layers[start:]:
            x = layer.forward(x, training=training)
        return x

    def predict_logits(self, images: np.ndarray, batch_size: int = 32) -> np.ndarray:
        out = [self.forward(images[i : i + batch_size]) for i in range(0, len(images), batch_size)]
        return np.concatenate(out, axis=0)


def build_model(config: ModelConfig, rng: np.random.Generator | None = None, dtype=DTYPE) -> Model:
    """Realise ``config`` as a layer stack with He-uniform weights and zero biases."""
    config.validate()
    rng = make_rng(0) if rng is None else rng
    layers: list[tuple[str, Layer]] = []
    taps = {}
    c_in = 3
    for b, widths in enumerate(VGG16_BLOCKS[: config.blocks], start=1):
        for i, w in enumerate(widths, start=1):
            layers.append((f"block{b}_conv{i}", Conv2D(c_in, w, 3, rng=rng, dtype=dtype)))
            layers.append((f"block{b}_relu{i}", ReLU()))
            c_in = w
        taps[f"block{b}"] = len(layers) - 1
        layers.append((f"block{b}_pool", MaxPool2()))
    hidden = config.resolved_hidden
    if config.head == "conv":
        cw = config.resolved_conv_width
        layers.append(("head_conv", Conv2D(c_in, cw, 1, rng=rng, dtype=dtype)))
        layers.append(("head_relu", ReLU()))
        layers.append(("global_pool", GlobalPool(config.pool_mode)))
        d = cw
    else:
        side = config.input_size // 2**config.blocks
        d = side * side * c_in
        layers.append(("flatten", Flatten()))
    layers.append(("fc_hidden", Dense(d, hidden, rng=rng, dtype=dtype)))
    layers.append(("fc_relu", ReLU()))
    layers.append(("dropout", Dropout(config.dropout_rate, rng=make_rng(rng.integers(2**63)))))
    layers.append(("fc_out", Dense(hidden, 1, rng=rng, dtype=dtype)))
    return Model(config, layers, taps)


def count_params(model: Model) -> int:
    return sum(p.size for p in model.params())
