"""Structural checks on a NetworkSpec, reported as diagnostics rather than raised"""
from dataclasses import asdict, dataclass
from typing import List

import numpy as np

from .model import Activation, Conv2D, Dense, Flatten, GaussianDense, NetworkSpec, Unsupported

POOLING_HINT = "replace pooling with a strided Conv2D layer without activation"


@dataclass(frozen=True)
class Diagnostic:
    position: int
    code: str
    message: str

    def __str__(self):
        return f"layer {self.position}: {self.code}: {self.message}"

    def to_dict(self):
        return asdict(self)


def validate(net: NetworkSpec) -> List[Diagnostic]:
    diagnostics: List[Diagnostic] = []
    dim = net.input_dim

    for position, layer in enumerate(net.layers):
        for key, value in layer.tensors().items():
            if not np.all(np.isfinite(value)):
                bad = int(np.count_nonzero(~np.isfinite(value)))
                diagnostics.append(Diagnostic(position, 'non-finite', f"{bad} non-finite values in {key}"))

        if isinstance(layer, Unsupported):
            hint = f"; {POOLING_HINT}" if 'pool' in layer.op else ''
            diagnostics.append(Diagnostic(
                position, 'unsupported-layer', f"'{layer.op}' cannot be propagated{hint}"
            ))
            continue
        if isinstance(layer, Activation):
            continue

        if isinstance(layer, Dense):
            if layer.bias.shape != (layer.out_dim,):
                diagnostics.append(Diagnostic(
                    position, 'shape', f"bias has shape {layer.bias.shape}, expected ({layer.out_dim},)"
                ))
        elif isinstance(layer, GaussianDense):
            shapes = {layer.weight_mean.shape, layer.weight_var.shape}
            if len(shapes) != 1 or layer.bias_mean.shape != (layer.out_dim,) \
                    or layer.bias_var.shape != (layer.out_dim,):
                diagnostics.append(Diagnostic(position, 'shape', "mean and variance tensors disagree in shape"))
            elif np.any(layer.weight_var < 0) or np.any(layer.bias_var < 0):
                diagnostics.append(Diagnostic(position, 'invalid-parameter', "negative parameter variance"))
        elif isinstance(layer, Conv2D):
            try:
                layer.output_shape
            except ValueError as e:
                diagnostics.append(Diagnostic(position, 'invalid-parameter', str(e)))
                return diagnostics
            if layer.bias.shape != (layer.kernel.shape[0],):
                diagnostics.append(Diagnostic(
                    position, 'shape', f"bias has shape {layer.bias.shape}, expected ({layer.kernel.shape[0]},)"
                ))

        if isinstance(layer, (Dense, GaussianDense, Conv2D, Flatten)):
            if layer.in_dim != dim:
                diagnostics.append(Diagnostic(
                    position, 'dimension-mismatch', f"expects input of size {layer.in_dim}, receives {dim}"
                ))
            dim = layer.out_dim

    return diagnostics
