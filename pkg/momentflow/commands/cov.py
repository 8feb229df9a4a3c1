"""Single-pair activation covariance query"""
import click

from ..moments.activation_stats import (
    RELU, ActivationTag, CorrelatedPair, SeriesConfig, UnivariateGaussian, pair_covariance,
)
from ..oracle.quadrature import QuadratureConfig, quad_covariance, scheme_for
from ..utils.validators import validate_kind, validate_rho, validate_sigmas
from . import emit, output_options, run_command

COV_SCHEMA = 'momentflow-cov/1'


def oracle_activation(kind) -> str:
    """Name of the function the quadrature oracle integrates for ``kind``"""
    return 'logistic' if kind.tag is ActivationTag.SIGMOID else kind.name


def covariance_record(kind_a, kind_b, mu, sigma, rho, order, oracle=False, nodes=60):
    pair = CorrelatedPair(UnivariateGaussian(mu[0], sigma[0]), UnivariateGaussian(mu[1], sigma[1]), rho)
    series = pair_covariance(kind_a, kind_b, pair, SeriesConfig(order=order))
    record = {
        'schema': COV_SCHEMA,
        'kind_a': kind_a.name,
        'kind_b': kind_b.name,
        'mu_i': mu[0],
        'mu_j': mu[1],
        'sigma_i': sigma[0],
        'sigma_j': sigma[1],
        'rho': rho,
        'order': order,
        'series_covariance': series,
    }
    if oracle:
        value = quad_covariance(kind_a, kind_b, pair, QuadratureConfig(nodes_per_axis=nodes))
        record.update(
            oracle_covariance=value,
            abs_error=abs(series - value),
            oracle_activation=oracle_activation(kind_a),
            nodes_per_axis=nodes,
            quadrature_scheme_i=scheme_for(kind_a),
            quadrature_scheme_j=scheme_for(kind_b),
        )
    return record


@click.command(name='cov')
@click.option('--kind', '-k', default='relu', callback=validate_kind, help='Activation kind')
@click.option('--kind-b', callback=validate_kind, help='Second activation kind (default: same as --kind)')
@click.option('--mu', nargs=2, type=float, default=(0.0, 0.0), help='Pre-activation means mu_i mu_j')
@click.option('--sigma', nargs=2, type=float, default=(1.0, 1.0), help='Pre-activation std devs sigma_i sigma_j')
@click.option('--rho', type=float, default=0.0, help='Pre-activation correlation')
@click.option('--order', '-K', type=int, default=4, help='Series truncation order')
@click.option('--oracle', is_flag=True, help='Also evaluate the quadrature oracle')
@click.option('--nodes', type=click.IntRange(min=2), default=60, help='Quadrature nodes per axis')
@output_options
@click.pass_obj
def cov_command(ctx, kind, kind_b, mu, sigma, rho, order, oracle, nodes, fmt, as_json):
    """Covariance of g(y_i) and g(y_j) for a correlated Gaussian pair.

    Examples:

        momentflow cov --kind relu --mu 0 0 --sigma 1 1 --rho 0.5 --order 4

        momentflow cov --kind heaviside --rho 0.5 --order 12 --oracle --json
    """
    validate_rho(rho)
    validate_sigmas(sigma)
    kind = kind or RELU
    record = run_command(
        lambda: covariance_record(kind, kind_b or kind, mu, sigma, rho, order, oracle, nodes)
    )
    emit(record, fmt, as_json)
