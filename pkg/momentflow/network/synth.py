"""Kaiming-initialized synthetic networks"""
import logging
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..moments.activation_stats import RELU, ActivationKind
from ..utils.errors import DomainError
from .model import Activation, Conv2D, Dense, Flatten, LayerSpec, NetworkSpec

logger = logging.getLogger(__name__)


class Family(str, Enum):
    FC = 'fc'
    CNN = 'cnn'


@dataclass(frozen=True)
class SynthConfig:
    """``depth`` counts weight layers, the scalar output layer included.

    FC: input ``input_dim`` (defaults to ``width``), ``depth - 1`` hidden
    layers of ``width`` units. CNN: ``depth - 1`` same-padded convolutions of
    ``channels`` channels over an ``input_hw`` single-channel input, then
    Flatten and a dense scalar head.
    """
    family: Family = Family.FC
    depth: int = 4
    width: int = 100
    input_dim: Optional[int] = None
    channels: int = 10
    input_hw: Tuple[int, int] = (20, 20)
    kernel_size: int = 3
    activation: ActivationKind = RELU
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'family', Family(self.family))
        object.__setattr__(self, 'input_hw', tuple(int(v) for v in self.input_hw))
        for name in ('depth', 'width', 'channels', 'kernel_size'):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise DomainError(f"{name} must be a positive integer, got {value}")
        if self.input_dim is not None and self.input_dim < 1:
            raise DomainError(f"input_dim must be positive, got {self.input_dim}")
        if min(self.input_hw) < 1:
            raise DomainError(f"input_hw must be positive, got {self.input_hw}")

    def to_dict(self) -> Dict:
        data = asdict(self)
        data['family'] = self.family.value
        data['activation'] = self.activation.name
        data['input_hw'] = list(self.input_hw)
        return data


PRESETS: Dict[str, SynthConfig] = {
    'fc4': SynthConfig(Family.FC, depth=4),
    'fc8': SynthConfig(Family.FC, depth=8),
    'cnn4': SynthConfig(Family.CNN, depth=4),
    'cnn8': SynthConfig(Family.CNN, depth=8),
}


def _kaiming(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


def synthesize(cfg: SynthConfig) -> NetworkSpec:
    """Weights i.i.d. N(0, 2 / fan_in), zero biases, activation after every hidden layer"""
    rng = np.random.default_rng(cfg.seed)
    layers: List[LayerSpec] = []

    if cfg.family is Family.FC:
        in_dim = cfg.input_dim if cfg.input_dim is not None else cfg.width
        input_shape: Tuple[int, ...] = (in_dim,)
        dims = [in_dim] + [cfg.width] * (cfg.depth - 1) + [1]
        for index, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
            layers.append(Dense(_kaiming(rng, (fan_out, fan_in), fan_in), np.zeros(fan_out)))
            if index < cfg.depth - 1:
                layers.append(Activation(cfg.activation))
    else:
        h, w = cfg.input_hw
        input_shape = (h, w, 1)
        shape = input_shape
        k = cfg.kernel_size
        for _ in range(cfg.depth - 1):
            in_ch = shape[2]
            kernel = _kaiming(rng, (cfg.channels, in_ch, k, k), in_ch * k * k)
            conv = Conv2D(kernel, np.zeros(cfg.channels), 1, 'same', shape)
            layers.append(conv)
            layers.append(Activation(cfg.activation))
            shape = conv.output_shape
        layers.append(Flatten(shape))
        fan_in = int(np.prod(shape))
        layers.append(Dense(_kaiming(rng, (1, fan_in), fan_in), np.zeros(1)))

    name = f"{cfg.family.value}{cfg.depth}"
    logger.debug("synthesized %s with %d layers (seed %d)", name, len(layers), cfg.seed)
    return NetworkSpec(tuple(layers), input_shape, name=name, seed=cfg.seed, params=cfg.to_dict())
