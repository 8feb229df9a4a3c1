"""End-to-end moment propagation and tightness experiments.

``propagate`` drives Gaussian moments through a network one layer at a time:
affine layers (dense, uncertain-weight dense, lowered convolutions) map the
moments exactly, and every activation layer re-assumes a Gaussian input and
applies the truncated correlation series.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from ..network.model import Activation, Conv2D, Dense, Flatten, GaussianDense, NetworkSpec
from ..network.validation import validate
from ..oracle.monte_carlo import McConfig, MomentEstimate, mc_propagate
from ..utils.context import DEFAULT_ELEMENT_BUDGET
from ..utils.errors import DomainError, ValidationFailed
from .activation_stats import LayerDiagnostics, SeriesConfig, activation_layer
from .gaussian_layer import CovFactory, GaussianMoments, affine_propagate, dvi_affine_propagate, random_covariance

logger = logging.getLogger(__name__)

TIGHTNESS_SCHEMA = 'momentflow-tightness/1'
ZERO_DENOMINATOR = 1e-12

TIGHTNESS_COLUMNS = ('output_index', 'q_mu_mean', 'q_mu_std', 'q_var_mean', 'q_var_std', 'excluded_trials')


@dataclass
class PropagationTrace:
    """``snapshots[0]`` is the input; ``snapshots[i + 1]`` follows layer i"""
    snapshots: List[Tuple[str, GaussianMoments]] = field(default_factory=list)
    diagnostics: List[Optional[LayerDiagnostics]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'labels': [label for label, _ in self.snapshots],
            'diagnostics': [d.to_dict() if d is not None else None for d in self.diagnostics],
        }


def interface_dims(net: NetworkSpec) -> List[int]:
    """Vector width before each layer and after the last one"""
    dims = [net.input_dim]
    for layer in net.layers:
        dims.append(getattr(layer, 'out_dim', dims[-1]))
    return dims


def _step(layer, moments: GaussianMoments, cfg: SeriesConfig, threads: int,
          element_budget: int) -> Tuple[GaussianMoments, Optional[LayerDiagnostics]]:
    if isinstance(layer, Dense):
        return affine_propagate(layer.as_affine(), moments), None
    if isinstance(layer, GaussianDense):
        return dvi_affine_propagate(layer.as_affine(), moments), None
    if isinstance(layer, Conv2D):
        return affine_propagate(layer.lowered(element_budget), moments), None
    if isinstance(layer, Activation):
        return activation_layer(layer.kind, moments, cfg, threads)
    if isinstance(layer, Flatten):
        return moments, None
    raise DomainError(f"cannot propagate through layer type '{layer.type_name}'")


def propagate(net: NetworkSpec, moments: GaussianMoments, cfg: SeriesConfig = SeriesConfig(),
              keep_trace: bool = False, threads: int = 1, element_budget: int = DEFAULT_ELEMENT_BUDGET,
              start: int = 0) -> Tuple[GaussianMoments, Optional[PropagationTrace]]:
    """Propagate ``moments`` through ``net.layers[start:]``.

    ``moments`` must have the width the network has before layer ``start``;
    the default runs the whole network from its input.
    """
    diagnostics = validate(net)
    if diagnostics:
        raise ValidationFailed(diagnostics)
    if not 0 <= start <= len(net):
        raise DomainError(f"start layer {start} outside 0..{len(net)}")
    expected = interface_dims(net)[start]
    if moments.dim != expected:
        raise DomainError(f"layer {start} expects input dimension {expected}, got {moments.dim}")

    trace = PropagationTrace([('input', moments)], []) if keep_trace else None
    current = moments
    for index in range(start, len(net)):
        layer = net.layers[index]
        current, layer_diag = _step(layer, current, cfg, threads, element_budget)
        if layer_diag is not None and (layer_diag.clamped_variances or layer_diag.clipped_eigenvalues):
            logger.debug("layer %d: %s", index, layer_diag.to_dict())
        if trace is not None:
            trace.snapshots.append((f"{index}:{layer.type_name}", current))
            trace.diagnostics.append(layer_diag)
    return current, trace


@dataclass(frozen=True)
class OutputRatio:
    output_index: int
    q_mu_mean: float
    q_mu_std: float
    q_var_mean: float
    q_var_std: float
    excluded_trials: int

    def to_dict(self) -> Dict[str, Any]:
        return {column: getattr(self, column) for column in TIGHTNESS_COLUMNS}


@dataclass
class TightnessReport:
    rows: List[OutputRatio]
    metadata: Dict[str, Any]
    cov_ratio_mean: Optional[np.ndarray] = None
    cov_ratio_std: Optional[np.ndarray] = None

    def to_rows(self) -> List[Dict[str, Any]]:
        return [row.to_dict() for row in self.rows]

    def to_dict(self) -> Dict[str, Any]:
        data = {'schema': TIGHTNESS_SCHEMA, 'metadata': self.metadata, 'outputs': self.to_rows()}
        if self.cov_ratio_mean is not None:
            data['covariance_ratio'] = {'mean': self.cov_ratio_mean, 'std': self.cov_ratio_std}
        return data


Estimator = Callable[[NetworkSpec, GaussianMoments, McConfig], MomentEstimate]


def _mean_std(values: np.ndarray) -> Tuple[float, float]:
    if values.size == 0:
        return float('nan'), float('nan')
    std = float(np.std(values, ddof=1)) if values.size > 1 else float('nan')
    return float(np.mean(values)), std


def _trial_input(input_factory: CovFactory, trial: int) -> GaussianMoments:
    rng = np.random.default_rng(np.random.SeedSequence(input_factory.seed, spawn_key=(trial,)))
    mean = rng.standard_normal(input_factory.n)
    return GaussianMoments(mean, random_covariance(input_factory, rng=rng))


def _trial_mc(mc: McConfig, trial: int) -> McConfig:
    seed = int(np.random.SeedSequence(mc.seed, spawn_key=(trial,)).generate_state(1)[0])
    return McConfig(samples=mc.samples, seed=seed, chunk=mc.chunk)


def tightness(net: NetworkSpec, trials: int, mc: McConfig, cfg: SeriesConfig, input_factory: CovFactory,
              estimator: Optional[Estimator] = None, threads: int = 1,
              element_budget: int = DEFAULT_ELEMENT_BUDGET) -> TightnessReport:
    """Ratios of sampled to analytic output moments over random input moments"""
    if int(trials) != trials or trials < 2:
        raise DomainError(f"tightness needs at least 2 trials, got {trials}")
    if input_factory.n != net.input_dim:
        raise DomainError(f"input factory dimension {input_factory.n} does not match network input {net.input_dim}")
    diagnostics = validate(net)
    if diagnostics:
        raise ValidationFailed(diagnostics)
    if estimator is None:
        def estimator(spec, moments, trial_mc):
            return mc_propagate(spec, moments, trial_mc, threads=1, element_budget=element_budget)

    def run(trial: int):
        moments = _trial_input(input_factory, trial)
        analytic, _ = propagate(net, moments, cfg, element_budget=element_budget)
        sampled = estimator(net, moments, _trial_mc(mc, trial))
        return analytic, sampled

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, range(trials)))
    else:
        results = [run(trial) for trial in range(trials)]

    a_mean = np.array([a.mean for a, _ in results])
    a_var = np.array([a.variance for a, _ in results])
    s_mean = np.array([s.mean for _, s in results])
    s_var = np.array([s.variance for _, s in results])
    usable = (np.abs(a_mean) > ZERO_DENOMINATOR) & (np.abs(a_var) > ZERO_DENOMINATOR)

    rows = []
    for j in range(a_mean.shape[1]):
        keep = usable[:, j]
        q_mu = s_mean[keep, j] / a_mean[keep, j]
        q_var = s_var[keep, j] / a_var[keep, j]
        excluded = int(trials - np.count_nonzero(keep))
        if excluded:
            logger.warning("output %d: %d trial(s) excluded for a near-zero analytic moment", j, excluded)
        rows.append(OutputRatio(j, *_mean_std(q_mu), *_mean_std(q_var), excluded))

    report = TightnessReport(rows, {
        'network': net.name,
        'input_dim': net.input_dim,
        'output_dim': int(a_mean.shape[1]),
        'trials': int(trials),
        'samples': mc.samples,
        'seed': mc.seed,
        'chunk': mc.chunk,
        'order': cfg.order,
        'psd_policy': cfg.psd_policy.value,
        'input_factory': input_factory.to_dict(),
        'zero_denominator': ZERO_DENOMINATOR,
    })

    if a_mean.shape[1] > 1:
        a_cov = np.array([a.cov for a, _ in results])
        s_cov = np.array([s.cov for _, s in results])
        defined = np.abs(a_cov) > ZERO_DENOMINATOR
        ratio = np.where(defined, s_cov / np.where(defined, a_cov, 1.0), np.nan)
        counts = defined.sum(axis=0)
        with np.errstate(invalid='ignore', divide='ignore'):
            mean = np.nansum(ratio, axis=0) / counts
            spread = np.nansum((ratio - mean) ** 2, axis=0) / (counts - 1)
        report.cov_ratio_mean = np.where(counts > 0, mean, np.nan)
        report.cov_ratio_std = np.where(counts > 1, np.sqrt(spread), np.nan)
    return report
