"""Tightness experiments: sampled versus analytic output moments"""
from dataclasses import replace
from pathlib import Path

import click

from ..moments.activation_stats import SeriesConfig
from ..moments.gaussian_layer import CovFactory
from ..moments.propagation import tightness
from ..network.serialization import load
from ..network.synth import PRESETS, synthesize
from ..oracle.monte_carlo import McConfig
from ..utils.formatters import format_csv, format_json
from . import emit, output_options, run_command

DESK_TRIALS = 20
DESK_SAMPLES = 20000
FULL_TRIALS = 200
FULL_SAMPLES = 75000


@click.command(name='tightness')
@click.option('--preset', type=click.Choice(sorted(PRESETS)), default='fc4', help='Synthetic network preset')
@click.option('--net', 'net_path', type=click.Path(dir_okay=False), help='Network file (overrides --preset)')
@click.option('--trials', type=click.IntRange(min=2), default=None, help=f'Trials (default {DESK_TRIALS})')
@click.option('--samples', type=click.IntRange(min=1), default=None,
              help=f'Monte Carlo samples per trial (default {DESK_SAMPLES})')
@click.option('--full-scale', is_flag=True,
              help=f'Use {FULL_TRIALS} trials of {FULL_SAMPLES} samples unless given explicitly')
@click.option('--seed', type=int, default=0, help='Seed for the preset network, inputs and sampling')
@click.option('--chunk', type=click.IntRange(min=1), default=None, help='Monte Carlo chunk size')
@click.option('--order', '-K', type=int, default=4, help='Series truncation order')
@click.option('--max-variance', type=float, default=1.0, help='Largest input variance per trial')
@click.option('--csv', 'csv_path', type=click.Path(dir_okay=False), help='Write per-output rows as CSV')
@click.option('--json-out', 'json_path', type=click.Path(dir_okay=False), help='Write the full report as JSON')
@output_options
@click.pass_obj
def tightness_command(ctx, preset, net_path, trials, samples, full_scale, seed, chunk, order, max_variance,
                      csv_path, json_path, fmt, as_json):
    """Ratios of Monte Carlo to analytic output mean and variance.

    Each trial draws a random input mean and covariance, propagates it
    analytically and by sampling, and records Q_mu and Q_var per output.

    Examples:

        momentflow tightness --preset fc4

        momentflow tightness --preset cnn4 --full-scale --csv cnn4.csv --json-out cnn4.json
    """
    if trials is None:
        trials = FULL_TRIALS if full_scale else DESK_TRIALS
    if samples is None:
        samples = FULL_SAMPLES if full_scale else DESK_SAMPLES

    def run():
        if net_path:
            net = load(net_path)
            source = net_path
        else:
            net = synthesize(replace(PRESETS[preset], seed=seed))
            source = preset
        mc = McConfig(samples=samples, seed=seed, chunk=chunk or ctx.mc_chunk)
        factory = CovFactory(seed=seed, n=net.input_dim, max_variance=max_variance)
        report = tightness(net, trials, mc, SeriesConfig(order=order), factory,
                           threads=ctx.threads, element_budget=ctx.element_budget)
        report.metadata.update(source=source, full_scale=full_scale)
        if csv_path:
            Path(csv_path).write_text(format_csv(report.to_rows()))
        if json_path:
            Path(json_path).write_text(format_json(report) + "\n")
        return report

    report = run_command(run)
    if as_json or fmt == 'json':
        emit(report, 'json')
    else:
        emit(report.to_rows(), fmt)
