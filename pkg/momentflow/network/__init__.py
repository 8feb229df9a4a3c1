"""Network data model, synthetic generation, validation and file format"""
from .model import (
    Activation, Conv2D, Dense, Flatten, GaussianDense, LayerSpec, NetworkSpec, Unsupported,
)
from .serialization import load, load_moments, save, save_moments
from .synth import PRESETS, SynthConfig, synthesize
from .validation import Diagnostic, validate

__all__ = [
    'Activation', 'Conv2D', 'Dense', 'Flatten', 'GaussianDense', 'LayerSpec', 'NetworkSpec',
    'Unsupported', 'load', 'load_moments', 'save', 'save_moments', 'PRESETS', 'SynthConfig',
    'synthesize', 'Diagnostic', 'validate',
]
