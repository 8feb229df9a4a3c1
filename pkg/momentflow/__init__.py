"""momentflow - sample-free Gaussian moment propagation through feedforward networks"""
__version__ = "0.1.0"
