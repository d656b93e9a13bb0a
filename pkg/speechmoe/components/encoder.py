from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from typing_extensions import override

from speechmoe.components.base import Linear, Module, glorot_uniform
from speechmoe.constants import N_CHANNELS
from speechmoe.errors import ContainerError, ShapeError, ValidationError
from speechmoe.logger import get_logger
from speechmoe.schema import EncoderConfig
from speechmoe.tensor import Parameter, RngStream, Tensor, conv2d, maxpool2d, relu
from speechmoe.utils.container import read_container, write_container

_logger = get_logger()


class LayerSpec(BaseModel):
    """One step of an encoder's layer plan."""

    model_config = ConfigDict(extra="forbid")

    kind: Literal["conv2d", "relu", "maxpool2d", "flatten", "linear"]
    in_channels: int = 0
    out_channels: int = 0
    kernel: int = 0
    stride: int = 1
    padding: int = 0
    in_features: int = 0
    out_features: int = 0


def _conv(c_in: int, c_out: int, kernel: int, stride: int = 1, padding: int = 0) -> LayerSpec:
    return LayerSpec(
        kind="conv2d",
        in_channels=c_in,
        out_channels=c_out,
        kernel=kernel,
        stride=stride,
        padding=padding,
    )


def _pool(window: int, stride: int | None = None) -> LayerSpec:
    return LayerSpec(kind="maxpool2d", kernel=window, stride=stride or window)


_RELU = LayerSpec(kind="relu")
_FLATTEN = LayerSpec(kind="flatten")


def layer_plan(cfg: EncoderConfig) -> list[LayerSpec]:
    """
    Walk the topology over a C×S×S input and return every layer with resolved sizes.

    Raises:
        ValidationError: unknown topology
        ShapeError: the image is too small for the topology
    """
    match cfg.topology:
        case "tiny":
            convs = [
                _conv(N_CHANNELS, 8, 3, 1, 1),
                _RELU,
                _pool(4),
                _conv(8, 16, 3, 1, 1),
                _RELU,
                _pool(4),
                _conv(16, 32, 3, 1, 1),
                _RELU,
                _pool(4),
            ]
            hidden: list[int] = []
        case "alexnet_like":
            convs = [
                _conv(N_CHANNELS, 64, 11, 4, 2),
                _RELU,
                _pool(3, 2),
                _conv(64, 192, 5, 1, 2),
                _RELU,
                _pool(3, 2),
                _conv(192, 384, 3, 1, 1),
                _RELU,
                _conv(384, 256, 3, 1, 1),
                _RELU,
                _conv(256, 256, 3, 1, 1),
                _RELU,
                _pool(3, 2),
            ]
            hidden = [4096, 4096]
        case _:
            raise ValidationError(f"Unknown encoder topology: {cfg.topology}")

    channels, side = N_CHANNELS, cfg.image_size
    for spec in convs:
        if spec.kind == "conv2d":
            side = (side + 2 * spec.padding - spec.kernel) // spec.stride + 1
            channels = spec.out_channels
        elif spec.kind == "maxpool2d":
            side = (side - spec.kernel) // spec.stride + 1
        if side <= 0:
            raise ShapeError(
                f"{cfg.topology} encoder: image size {cfg.image_size} shrinks to nothing"
            )

    plan = list(convs) + [_FLATTEN]
    features = channels * side * side
    # the classifier's last layer is replaced by a projection to the embedding
    for width in hidden:
        plan += [LayerSpec(kind="linear", in_features=features, out_features=width), _RELU]
        features = width
    plan.append(LayerSpec(kind="linear", in_features=features, out_features=cfg.embedding_dim))
    return plan


def plan_parameter_count(plan: list[LayerSpec]) -> int:
    total = 0
    for spec in plan:
        if spec.kind == "conv2d":
            total += spec.out_channels * spec.in_channels * spec.kernel**2 + spec.out_channels
        elif spec.kind == "linear":
            total += spec.in_features * spec.out_features + spec.out_features
    return total


class Conv2d(Module):
    def __init__(self, spec: LayerSpec, rng: RngStream):
        super().__init__()
        k = spec.kernel
        shape = (spec.out_channels, spec.in_channels, k, k)
        fan_in, fan_out = spec.in_channels * k * k, spec.out_channels * k * k
        self.weight = Parameter(glorot_uniform(shape, rng, fan_in, fan_out))
        self.bias = Parameter(np.zeros(spec.out_channels))
        self._stride = spec.stride
        self._padding = spec.padding

    @override
    def forward(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias, stride=self._stride, padding=self._padding)


class Encoder(Module):
    """Convolutional stand-in for the pretrained image network: image batch -> embeddings."""

    def __init__(self, config: EncoderConfig, rng: RngStream):
        super().__init__(config=config)
        self._plan = layer_plan(config)
        self.layers: list[Module] = []
        for i, spec in enumerate(self._plan):
            layer_rng = rng.split(i)
            if spec.kind == "conv2d":
                self.layers.append(Conv2d(spec, layer_rng))
            elif spec.kind == "linear":
                self.layers.append(Linear(spec.in_features, spec.out_features, layer_rng))

    @property
    def plan(self) -> list[LayerSpec]:
        return list(self._plan)

    @override
    def forward(self, images: Tensor) -> Tensor:
        """Map N×3×S×S (or 3×S×S) images to N×embedding_dim (or embedding_dim)."""
        side = self.config.image_size
        if images.shape[-3:] != (N_CHANNELS, side, side):
            raise ShapeError(
                f"encoder expects images of shape ({N_CHANNELS}, {side}, {side}), "
                f"got {images.shape}"
            )
        single = images.ndim == 3
        x = images.reshape((1,) + images.shape) if single else images
        modules = iter(self.layers)
        for spec in self._plan:
            match spec.kind:
                case "conv2d" | "linear":
                    x = next(modules)(x)
                case "relu":
                    x = relu(x)
                case "maxpool2d":
                    x = maxpool2d(x, spec.kernel, spec.stride)
                case "flatten":
                    x = x.reshape(x.shape[0], -1)
        return x.reshape(-1) if single else x


def build_encoder(cfg: EncoderConfig, rng: RngStream) -> Encoder:
    """Build an encoder with Glorot-uniform weights and zero biases drawn from `rng`."""
    enc = Encoder(cfg, rng).name_parameters()
    _logger.debug(f"Built {cfg.topology} encoder with {enc.num_parameters()} parameters")
    return enc


def encode_pair(
    enc_read: Encoder, enc_int: Encoder, f_read: Tensor, f_int: Tensor
) -> tuple[Tensor, Tensor]:
    """
    Embed the reading and interview images.

    With shared weights both arguments are the same encoder, so gradients from the two branches
    accumulate into one parameter set.
    """
    if f_read.shape != f_int.shape:
        raise ShapeError(f"branch image shapes differ: {f_read.shape} vs {f_int.shape}")
    return enc_read(f_read), enc_int(f_int)


def export_weights(module: Module, path: str | Path) -> Path:
    """
    Write `module`'s parameters to a tensor container, keyed by dotted parameter name.

    Args:
        module: any module; a whole DepressionModel or a single encoder
        path: destination file, parent directories are created

    Returns:
        The path written.
    """
    return write_container(path, module.state_dict())


def import_weights(module: Module, path: str | Path) -> Module:
    """
    Overwrite `module`'s parameters from a tensor container.

    Tensors in the file that `module` does not own are ignored.

    Args:
        module: the module to fill in place
        path: container written by `export_weights`

    Returns:
        `module` itself.

    Raises:
        ContainerError: a parameter is missing from the file or has the wrong shape
    """
    stored = read_container(path)
    for name, p in module.named_parameters():
        if name not in stored:
            raise ContainerError(f"{path}: missing tensor {name!r}")
        if stored[name].shape != p.shape:
            raise ContainerError(
                f"{path}: tensor {name!r} has shape {stored[name].shape}, expected {p.shape}"
            )
    module.load_state_dict(stored)
    _logger.info(f"Imported {len(stored)} tensors from {path}")
    return module
