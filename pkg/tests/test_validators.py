import click
import pytest

from momentflow.moments.activation_stats import GELU, SIGMOID_PI8
from momentflow.utils.validators import validate_kind, validate_orders, validate_rho, validate_sigmas


def test_validate_rho_bounds():
    assert validate_rho(-1.0) == -1.0
    with pytest.raises(click.BadParameter):
        validate_rho(1.0001)
    with pytest.raises(click.BadParameter):
        validate_rho(float('nan'))


def test_validate_sigmas_rejects_negative():
    assert validate_sigmas((0.0, 2.0)) == (0.0, 2.0)
    with pytest.raises(click.BadParameter):
        validate_sigmas((1.0, -0.1))


def test_validate_orders_sorts_and_deduplicates():
    assert validate_orders((4, 1, 4, 2)) == [1, 2, 4]
    with pytest.raises(click.BadParameter):
        validate_orders(())
    with pytest.raises(click.BadParameter):
        validate_orders((0, 1))


def test_validate_kind_case_insensitive_and_errors():
    assert validate_kind(None, None, 'GELU') == GELU
    assert validate_kind(None, None, 'sigmoid-pi8') == SIGMOID_PI8
    with pytest.raises(click.BadParameter):
        validate_kind(None, None, 'tanh')
