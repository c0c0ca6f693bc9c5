"""Network structure: conv / pool / FC layer lists with resolved dimensions.

Networks are written in the compact notation used for VGG-style models,
e.g. ``64C3-MP2-128C3-128C3-MP2-1024FC-10FC`` together with an input shape
``3x32x32``. Convolutions default to stride 1 and "same" padding (``R // 2``);
``64C5s2p0`` overrides both.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

from .errors import StructuralError

_CONV_RE = re.compile(r"^(\d+)C(\d+)(?:s(\d+))?(?:p(\d+))?$")
_POOL_RE = re.compile(r"^MP(\d+)(?:s(\d+))?$")
_FC_RE = re.compile(r"^(\d+)FC$")


@dataclass(frozen=True)
class Conv:
    name: str
    in_channels: int
    in_size: int
    out_channels: int
    out_size: int
    kernel: int
    stride: int = 1
    pad: int = 0

    @property
    def in_shape(self) -> tuple[int, ...]:
        return (self.in_channels, self.in_size, self.in_size)

    @property
    def out_shape(self) -> tuple[int, ...]:
        return (self.out_channels, self.out_size, self.out_size)

    @property
    def weight_shape(self) -> tuple[int, ...]:
        return (self.out_channels, self.in_channels, self.kernel, self.kernel)


@dataclass(frozen=True)
class Pool:
    name: str
    channels: int
    in_size: int
    out_size: int
    window: int
    stride: int

    @property
    def in_shape(self) -> tuple[int, ...]:
        return (self.channels, self.in_size, self.in_size)

    @property
    def out_shape(self) -> tuple[int, ...]:
        return (self.channels, self.out_size, self.out_size)


@dataclass(frozen=True)
class FC:
    name: str
    in_features: int
    out_features: int

    @property
    def in_shape(self) -> tuple[int, ...]:
        return (self.in_features,)

    @property
    def out_shape(self) -> tuple[int, ...]:
        return (self.out_features,)

    @property
    def weight_shape(self) -> tuple[int, ...]:
        return (self.out_features, self.in_features)


LayerSpec = Union[Conv, Pool, FC]


@dataclass(frozen=True)
class LayerDims:
    """Counting dimensions of one weighted layer.

    FC layers map onto a 1x1 convolution over a 1x1 map, i.e. ``C`` input
    features, ``K`` output features and ``H = E = R = 1``.
    """

    name: str
    C: int
    H: int
    K: int
    E: int
    R: int

    def __post_init__(self):
        for field in ("C", "H", "K", "E", "R"):
            if getattr(self, field) < 1:
                raise StructuralError(f"{self.name}: {field} must be >= 1")

    @property
    def macs(self) -> int:
        """Dense MACs of one forward pass over one timestep."""
        return self.C * self.R**2 * self.K * self.E**2

    @property
    def bwd_macs(self) -> int:
        return self.C * self.R**2 * self.K * self.H**2

    @property
    def weights(self) -> int:
        return self.K * self.C * self.R**2

    @property
    def neurons(self) -> int:
        return self.K * self.E**2

    @property
    def inputs(self) -> int:
        return self.C * self.H**2


@dataclass(frozen=True)
class NetworkSpec:
    name: str
    input_shape: tuple[int, ...]
    layers: tuple[LayerSpec, ...]

    def __post_init__(self):
        validate_network(self)

    @property
    def weighted(self) -> list[Union[Conv, FC]]:
        return [layer for layer in self.layers if not isinstance(layer, Pool)]

    @property
    def layer_names(self) -> list[str]:
        """Names of weighted layers, in order."""
        return [layer.name for layer in self.weighted]

    def dims(self) -> list[LayerDims]:
        return [layer_dims(layer) for layer in self.weighted]


def layer_dims(layer: Union[Conv, FC]) -> LayerDims:
    if isinstance(layer, Conv):
        return LayerDims(layer.name, layer.in_channels, layer.in_size,
                         layer.out_channels, layer.out_size, layer.kernel)
    if isinstance(layer, FC):
        return LayerDims(layer.name, layer.in_features, 1, layer.out_features, 1, 1)
    raise StructuralError(f"pool layer {layer.name} has no counting dimensions")


def conv_out_size(in_size: int, kernel: int, stride: int, pad: int) -> int:
    span = in_size + 2 * pad - kernel
    if span < 0 or span % stride:
        raise StructuralError(
            f"kernel {kernel}, stride {stride}, pad {pad} do not tile input size {in_size}"
        )
    return span // stride + 1


def parse_input_shape(text: str) -> tuple[int, ...]:
    try:
        dims = tuple(int(v) for v in text.lower().split("x"))
    except ValueError:
        raise StructuralError(f"bad input shape {text!r}") from None
    if len(dims) != 3 or dims[1] != dims[2] or min(dims) < 1:
        raise StructuralError(f"input shape must be CxHxH, got {text!r}")
    return dims


def parse_network(name: str, input_shape: str | tuple[int, ...], layers: str) -> NetworkSpec:
    """Build a fully dimensioned network from the compact layer notation."""
    shape = parse_input_shape(input_shape) if isinstance(input_shape, str) else tuple(input_shape)
    specs: list[LayerSpec] = []
    weighted = 0
    pools = 0
    cur = shape
    for token in (t.strip() for t in layers.split("-")):
        if m := _CONV_RE.match(token):
            if len(cur) != 3:
                raise StructuralError(f"conv {token} after a flattened layer")
            k, r = int(m[1]), int(m[2])
            stride = int(m[3]) if m[3] else 1
            pad = int(m[4]) if m[4] is not None else r // 2
            weighted += 1
            e = conv_out_size(cur[1], r, stride, pad)
            specs.append(Conv(f"cov{weighted}", cur[0], cur[1], k, e, r, stride, pad))
            cur = (k, e, e)
        elif m := _POOL_RE.match(token):
            if len(cur) != 3:
                raise StructuralError(f"pool {token} after a flattened layer")
            w = int(m[1])
            stride = int(m[2]) if m[2] else w
            pools += 1
            e = conv_out_size(cur[1], w, stride, 0)
            specs.append(Pool(f"mp{pools}", cur[0], cur[1], e, w, stride))
            cur = (cur[0], e, e)
        elif m := _FC_RE.match(token):
            n_in = 1
            for d in cur:
                n_in *= d
            weighted += 1
            specs.append(FC(f"lin{weighted}", n_in, int(m[1])))
            cur = (int(m[1]),)
        else:
            raise StructuralError(f"unrecognised layer token {token!r}")
    return NetworkSpec(name, shape, tuple(specs))


def validate_network(net: NetworkSpec) -> None:
    if not net.layers:
        raise StructuralError("network has no layers")
    if not isinstance(net.layers[-1], FC):
        raise StructuralError("the last layer must be FC (non-firing output layer)")
    cur: tuple[int, ...] = tuple(net.input_shape)
    for layer in net.layers:
        want = layer.in_shape
        if isinstance(layer, FC):
            flat = 1
            for d in cur:
                flat *= d
            ok = layer.in_features == flat
        else:
            ok = tuple(cur) == want
        if not ok:
            raise StructuralError(f"{layer.name}: expects input {want}, previous layer gives {cur}")
        if isinstance(layer, Conv):
            if layer.out_size != conv_out_size(layer.in_size, layer.kernel, layer.stride, layer.pad):
                raise StructuralError(f"{layer.name}: inconsistent output size")
        elif isinstance(layer, Pool):
            if layer.out_size != conv_out_size(layer.in_size, layer.window, layer.stride, 0):
                raise StructuralError(f"{layer.name}: inconsistent output size")
        for d in (*layer.in_shape, *layer.out_shape):
            if d < 1:
                raise StructuralError(f"{layer.name}: dimensions must be >= 1")
        cur = layer.out_shape


def vgg5(in_channels: int = 3, in_size: int = 32) -> NetworkSpec:
    return parse_network("vgg5", (in_channels, in_size, in_size), "64C3-MP2-128C3-128C3-MP2-1024FC-10FC")


def vgg9(in_channels: int = 3, in_size: int = 32) -> NetworkSpec:
    return parse_network(
        "vgg9", (in_channels, in_size, in_size),
        "64C3-64C3-MP2-128C3-128C3-MP2-256C3-256C3-256C3-MP2-1024FC-10FC",
    )
