"""Input validation utilities for momentflow commands"""
import math
from typing import List, Tuple

import click

from ..moments.activation_stats import KIND_NAMES, ActivationKind, parse_kind
from .errors import DomainError


def validate_rho(value: float, name: str = "rho") -> float:
    """Validate a correlation lies in [-1, 1]"""
    if not (math.isfinite(value) and -1.0 <= value <= 1.0):
        raise click.BadParameter(f"{name} must be between -1.0 and 1.0, got {value}", param_hint=f"--{name}")
    return value


def validate_sigmas(values: Tuple[float, ...], name: str = "sigma") -> Tuple[float, ...]:
    for value in values:
        if not (math.isfinite(value) and value >= 0.0):
            raise click.BadParameter(f"{name} must be finite and nonnegative, got {value}", param_hint=f"--{name}")
    return tuple(values)


def validate_orders(orders: Tuple[int, ...]) -> List[int]:
    """Deduplicate and sort series orders"""
    if not orders:
        raise click.BadParameter("at least one order is required", param_hint="--order")
    bad = [k for k in orders if k < 1]
    if bad:
        raise click.BadParameter(f"orders must be positive, got {bad}", param_hint="--order")
    return sorted(set(int(k) for k in orders))


def validate_kind(ctx, param, value):
    """Click callback turning a kind name into an ActivationKind"""
    if value is None or isinstance(value, ActivationKind):
        return value
    try:
        return parse_kind(value)
    except DomainError:
        raise click.BadParameter(
            f"unknown activation kind '{value}'. Valid kinds: {', '.join(KIND_NAMES)} or sigmoid:<alpha>"
        )

