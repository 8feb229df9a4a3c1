"""Standard normal functions and probabilist's Hermite polynomials.

All functions accept scalars or numpy arrays and return the same shape.
Scalars in give Python floats out.
"""
import math

import numpy as np
from scipy import special

from ..utils.errors import DomainError

INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _as_finite(x, name: str = 'x'):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite")
    return arr


def _unwrap(arr):
    return float(arr) if np.ndim(arr) == 0 else arr


def phi(x):
    """Standard normal density"""
    arr = _as_finite(x)
    return _unwrap(INV_SQRT_2PI * np.exp(-0.5 * arr * arr))


def Phi(x):
    """Standard normal CDF.

    Uses ``scipy.special.ndtr``, which evaluates the lower tail through
    erfc, so Phi(x) + Phi(-x) = 1 holds to rounding across [-8, 8].
    """
    arr = _as_finite(x)
    return _unwrap(special.ndtr(arr))


def erf(x):
    arr = _as_finite(x)
    return _unwrap(special.erf(arr))


def hermite_sequence(k: int, x):
    """He_0(x) .. He_k(x) stacked along a new leading axis of length k + 1"""
    if int(k) != k or k < 0:
        raise DomainError(f"Hermite order must be a nonnegative integer, got {k}")
    k = int(k)
    arr = _as_finite(x)
    values = np.empty((k + 1,) + arr.shape, dtype=float)
    values[0] = 1.0
    if k >= 1:
        values[1] = arr
    # He_{n+1} = x He_n - n He_{n-1}
    for n in range(1, k):
        values[n + 1] = arr * values[n] - n * values[n - 1]
    return values


def hermite_he(k: int, x):
    """Probabilist's Hermite polynomial He_k(x) via the three-term recurrence"""
    return _unwrap(hermite_sequence(k, x)[k])
