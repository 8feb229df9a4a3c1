"""Series-versus-oracle error grids over pre-activation means"""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import click
import numpy as np

from ..moments.activation_stats import RELU, ActivationKind, check_order, term_matrix
from ..oracle.quadrature import QuadratureConfig, oracle_records, quad_covariance_grid, scheme_for
from ..utils.errors import DomainError
from ..utils.formatters import format_csv, format_matrix_csv
from ..utils.validators import validate_kind, validate_orders, validate_rho, validate_sigmas
from . import emit, output_options, run_command
from .cov import oracle_activation

logger = logging.getLogger(__name__)

ERROR_GRID_SCHEMA = 'momentflow-error-grid/1'


@dataclass(frozen=True)
class ErrorGridSpec:
    """The same mu grid is used for both members of the pair"""
    kind: ActivationKind = RELU
    mu_start: float = -5.0
    mu_stop: float = 5.0
    mu_step: float = 0.1
    sigma_i: float = 1.0
    sigma_j: float = 1.0
    rho: float = 0.5
    orders: Tuple[int, ...] = (1, 2, 3, 4)

    def __post_init__(self):
        orders = tuple(int(k) for k in self.orders)
        if not orders or list(orders) != sorted(set(orders)):
            raise DomainError(f"orders must be nonempty, unique and ascending, got {list(orders)}")
        check_order(self.kind, orders[-1])
        object.__setattr__(self, 'orders', orders)
        if not -1.0 <= self.rho <= 1.0:
            raise DomainError(f"correlation must lie in [-1, 1], got {self.rho}")
        if self.sigma_i < 0 or self.sigma_j < 0:
            raise DomainError("sigma must be nonnegative")
        if not self.mu_step > 0 or self.mu_stop < self.mu_start:
            raise DomainError("mu grid is empty")

    def mu_values(self) -> np.ndarray:
        count = int(math.floor((self.mu_stop - self.mu_start) / self.mu_step + 1e-9)) + 1
        return np.round(self.mu_start + self.mu_step * np.arange(count), 12)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'kind': self.kind.name,
            'mu_start': self.mu_start,
            'mu_stop': self.mu_stop,
            'mu_step': self.mu_step,
            'sigma_i': self.sigma_i,
            'sigma_j': self.sigma_j,
            'rho': self.rho,
            'orders': list(self.orders),
        }


@dataclass
class ErrorGridReport:
    spec: ErrorGridSpec
    mu: np.ndarray
    max_abs_error: Dict[int, float]
    mean_abs_error: Dict[int, float]
    errors: Dict[int, np.ndarray] = field(default_factory=dict)
    oracle_cross: Optional[np.ndarray] = None
    oracle_cov: Optional[np.ndarray] = None
    nodes_per_axis: int = 60

    def rows(self) -> List[Dict[str, Any]]:
        return [
            {'order': k, 'max_abs_error': self.max_abs_error[k], 'mean_abs_error': self.mean_abs_error[k]}
            for k in self.spec.orders
        ]

    def to_dict(self) -> Dict[str, Any]:
        return {
            'schema': ERROR_GRID_SCHEMA,
            'spec': self.spec.to_dict(),
            'grid_points': int(self.mu.size),
            'nodes_per_axis': self.nodes_per_axis,
            'oracle_activation': oracle_activation(self.spec.kind),
            'quadrature_scheme': scheme_for(self.spec.kind),
            'orders': self.rows(),
        }


def run_error_grid(spec: ErrorGridSpec, q: QuadratureConfig = QuadratureConfig(),
                   keep_matrices: bool = False) -> ErrorGridReport:
    """Max and mean absolute covariance error of each truncation order"""
    mu = spec.mu_values()
    n = mu.size
    top = spec.orders[-1]
    terms_i = term_matrix(spec.kind, mu, np.full(n, spec.sigma_i), top)
    terms_j = term_matrix(spec.kind, mu, np.full(n, spec.sigma_j), top)
    cross, oracle = quad_covariance_grid(spec.kind, spec.kind, mu, mu, spec.sigma_i, spec.sigma_j, spec.rho, q)

    series = np.zeros((n, n))
    rho_k = 1.0
    max_err, mean_err, errors = {}, {}, {}
    for k in range(1, top + 1):
        rho_k *= spec.rho
        series += (rho_k / math.factorial(k)) * np.outer(terms_i[k - 1], terms_j[k - 1])
        if k in spec.orders:
            err = np.abs(series - oracle)
            max_err[k] = float(err.max())
            mean_err[k] = float(err.mean())
            if keep_matrices:
                errors[k] = err
            logger.debug("order %d: max %.3e mean %.3e", k, max_err[k], mean_err[k])

    report = ErrorGridReport(spec, mu, max_err, mean_err, errors, nodes_per_axis=q.nodes_per_axis)
    if keep_matrices:
        report.oracle_cross = cross
        report.oracle_cov = oracle
    return report


def write_matrices(report: ErrorGridReport, directory: Path) -> List[str]:
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for k, err in report.errors.items():
        path = directory / f"error_{report.spec.kind.name}_K{k}.csv"
        path.write_text(format_matrix_csv(err, row_labels=report.mu, col_labels=report.mu))
        written.append(str(path))
    return written


@click.command(name='error-grid')
@click.option('--kind', '-k', default='relu', callback=validate_kind, help='Activation kind')
@click.option('--mu-start', type=float, default=-5.0, help='First grid mean')
@click.option('--mu-stop', type=float, default=5.0, help='Last grid mean (inclusive)')
@click.option('--mu-step', type=float, default=0.1, help='Grid spacing')
@click.option('--sigma', nargs=2, type=float, default=(1.0, 1.0), help='sigma_i sigma_j')
@click.option('--rho', type=float, default=0.5, help='Pre-activation correlation')
@click.option('--order', '-K', 'orders', type=int, multiple=True, default=(1, 2, 3, 4),
              help='Truncation order (repeatable)')
@click.option('--nodes', type=click.IntRange(min=2), default=60, help='Quadrature nodes per axis')
@click.option('--matrix-dir', type=click.Path(file_okay=False), help='Write per-order error matrices as CSV')
@click.option('--oracle-csv', type=click.Path(dir_okay=False), help='Write oracle values as CSV')
@output_options
@click.pass_obj
def error_grid_command(ctx, kind, mu_start, mu_stop, mu_step, sigma, rho, orders, nodes,
                       matrix_dir, oracle_csv, fmt, as_json):
    """Compare truncated series covariances with the quadrature oracle.

    Examples:

        momentflow error-grid --kind relu -K 1 -K 4

        momentflow error-grid --kind gelu --matrix-dir grids/ --json
    """
    validate_rho(rho)
    validate_sigmas(sigma)
    orders = validate_orders(orders)

    def run():
        spec = ErrorGridSpec(kind or RELU, mu_start, mu_stop, mu_step, sigma[0], sigma[1], rho, tuple(orders))
        report = run_error_grid(spec, QuadratureConfig(nodes_per_axis=nodes),
                                keep_matrices=bool(matrix_dir or oracle_csv))
        payload = report.to_dict()
        if matrix_dir:
            payload['matrix_files'] = write_matrices(report, Path(matrix_dir))
        if oracle_csv:
            rows = oracle_records(spec.kind, spec.kind, report.mu, report.mu, spec.sigma_i, spec.sigma_j,
                                  spec.rho, report.oracle_cross, report.oracle_cov)
            Path(oracle_csv).write_text(format_csv(rows))
            payload['oracle_file'] = oracle_csv
        return report, payload

    report, payload = run_command(run)
    if as_json or fmt == 'json':
        emit(payload, 'json')
    else:
        emit(report.rows(), fmt)
