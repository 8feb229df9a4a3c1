"""Layer and network descriptions.

Every layer works on vectors flattened row-major; convolutional layers
remember the (height, width, channels) shape of their input.
"""
import math
import threading
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, Optional, Tuple, Union

import numpy as np

from ..moments.activation_stats import ActivationKind
from ..moments.gaussian_layer import (
    AffineLayer, FactorizedGaussianAffine, check_element_budget, conv2d_as_matrix, conv2d_output_shape,
)
from ..utils.context import DEFAULT_ELEMENT_BUDGET
from ..utils.errors import DomainError


def _array(value) -> np.ndarray:
    return np.array(value, dtype=float, copy=True)


@dataclass(eq=False)
class Dense:
    weight: np.ndarray
    bias: np.ndarray
    type_name = 'dense'

    def __post_init__(self):
        self.weight = np.atleast_2d(_array(self.weight))
        self.bias = np.atleast_1d(_array(self.bias))

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    def as_affine(self) -> AffineLayer:
        return AffineLayer(self.weight, self.bias)

    def tensors(self) -> Dict[str, np.ndarray]:
        return {'weight': self.weight, 'bias': self.bias}


@dataclass(eq=False)
class GaussianDense:
    """Dense layer with factorized Gaussian weights and biases"""
    weight_mean: np.ndarray
    weight_var: np.ndarray
    bias_mean: np.ndarray
    bias_var: np.ndarray
    type_name = 'gaussian_dense'

    def __post_init__(self):
        self.weight_mean = np.atleast_2d(_array(self.weight_mean))
        self.weight_var = np.atleast_2d(_array(self.weight_var))
        self.bias_mean = np.atleast_1d(_array(self.bias_mean))
        self.bias_var = np.atleast_1d(_array(self.bias_var))

    @property
    def in_dim(self) -> int:
        return self.weight_mean.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight_mean.shape[0]

    def as_affine(self) -> FactorizedGaussianAffine:
        return FactorizedGaussianAffine(self.weight_mean, self.weight_var, self.bias_mean, self.bias_var)

    def tensors(self) -> Dict[str, np.ndarray]:
        return {
            'weight_mean': self.weight_mean,
            'weight_var': self.weight_var,
            'bias_mean': self.bias_mean,
            'bias_var': self.bias_var,
        }


@dataclass(eq=False)
class Conv2D:
    kernel: np.ndarray
    bias: np.ndarray
    stride: int
    padding: str
    input_shape: Tuple[int, int, int]
    type_name = 'conv2d'
    _lowered: Optional[AffineLayer] = field(default=None, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def __post_init__(self):
        self.kernel = _array(self.kernel)
        self.bias = np.atleast_1d(_array(self.bias))
        self.stride = int(self.stride)
        self.input_shape = tuple(int(v) for v in self.input_shape)

    @property
    def in_dim(self) -> int:
        return math.prod(self.input_shape)

    @property
    def output_shape(self) -> Tuple[int, int, int]:
        return conv2d_output_shape(self.kernel.shape, self.stride, self.padding, self.input_shape)

    @property
    def out_dim(self) -> int:
        return math.prod(self.output_shape)

    def lowered(self, element_budget: int = DEFAULT_ELEMENT_BUDGET) -> AffineLayer:
        """Matrix form, built once; the budget is checked on every call"""
        check_element_budget(self.kernel.shape, self.stride, self.padding, self.input_shape, element_budget)
        with self._lock:
            if self._lowered is None:
                self._lowered = conv2d_as_matrix(
                    self.kernel, self.stride, self.padding, self.input_shape, self.bias, element_budget
                )
            return self._lowered

    def tensors(self) -> Dict[str, np.ndarray]:
        return {'kernel': self.kernel, 'bias': self.bias}


@dataclass(eq=False)
class Activation:
    kind: ActivationKind
    type_name = 'activation'

    def tensors(self) -> Dict[str, np.ndarray]:
        return {}


@dataclass(eq=False)
class Flatten:
    """Marks the end of a spatial block; a no-op on flattened vectors"""
    input_shape: Tuple[int, ...]
    type_name = 'flatten'

    def __post_init__(self):
        self.input_shape = tuple(int(v) for v in self.input_shape)

    @property
    def in_dim(self) -> int:
        return math.prod(self.input_shape)

    @property
    def out_dim(self) -> int:
        return self.in_dim

    def tensors(self) -> Dict[str, np.ndarray]:
        return {}


@dataclass(eq=False)
class Unsupported:
    """A layer type the file format names but moment propagation cannot run"""
    op: str
    params: Dict[str, Any] = field(default_factory=dict)
    type_name = 'unsupported'

    def tensors(self) -> Dict[str, np.ndarray]:
        return {}


LayerSpec = Union[Dense, GaussianDense, Conv2D, Activation, Flatten, Unsupported]


@dataclass(eq=False)
class NetworkSpec:
    layers: Tuple[LayerSpec, ...]
    input_shape: Tuple[int, ...]
    name: str = 'network'
    seed: Optional[int] = None
    params: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.layers = tuple(self.layers)
        self.input_shape = tuple(int(v) for v in self.input_shape)
        if not self.layers:
            raise DomainError("a network needs at least one layer")

    @property
    def input_dim(self) -> int:
        return math.prod(self.input_shape)

    @property
    def output_dim(self) -> int:
        """Width after the last layer, assuming the network validates"""
        dim = self.input_dim
        for layer in self.layers:
            if hasattr(layer, 'out_dim'):
                dim = layer.out_dim
        return dim

    def __len__(self):
        return len(self.layers)

    def tensors(self) -> Iterator[Tuple[str, np.ndarray]]:
        for index, layer in enumerate(self.layers):
            for key, value in layer.tensors().items():
                yield f"layers.{index}.{key}", value

    def summary(self) -> Dict[str, Any]:
        rows = []
        dim = self.input_dim
        for index, layer in enumerate(self.layers):
            row = {'index': index, 'type': layer.type_name, 'in': dim}
            if isinstance(layer, Activation):
                row['kind'] = layer.kind.name
            elif isinstance(layer, Unsupported):
                row['op'] = layer.op
            if hasattr(layer, 'out_dim'):
                dim = layer.out_dim
            row['out'] = dim
            rows.append(row)
        return {
            'name': self.name,
            'seed': self.seed,
            'input_shape': list(self.input_shape),
            'output_dim': self.output_dim,
            'parameters': int(sum(v.size for _, v in self.tensors())),
            'layers': rows,
        }
