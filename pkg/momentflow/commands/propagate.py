"""Propagate moments files through network files"""
import click

from ..moments.activation_stats import SeriesConfig
from ..moments.gaussian_layer import PsdPolicy
from ..moments.propagation import propagate
from ..network.serialization import load, load_moments, save_moments
from . import emit, output_options, run_command

PROPAGATE_SCHEMA = 'momentflow-propagate/1'


@click.command(name='propagate')
@click.argument('network', type=click.Path(dir_okay=False))
@click.argument('moments', type=click.Path(dir_okay=False))
@click.option('--out', '-o', 'out_path', type=click.Path(dir_okay=False), required=True,
              help='Output moments file')
@click.option('--order', '-K', type=int, default=4, help='Series truncation order')
@click.option('--psd-policy', type=click.Choice([p.value for p in PsdPolicy]), default=PsdPolicy.SYMMETRIZE.value,
              help='Covariance repair after each activation layer')
@click.option('--snapshot', type=int, default=-1, help='Which snapshot of the input file to use (default: last)')
@click.option('--trace', 'trace_path', type=click.Path(dir_okay=False), help='Also write every per-layer snapshot')
@output_options
@click.pass_obj
def propagate_command(ctx, network, moments, out_path, order, psd_policy, snapshot, trace_path, fmt, as_json):
    """Propagate input moments through a network.

    Examples:

        momentflow propagate net.mfn input.mfm -o output.mfm

        momentflow propagate net.mfn input.mfm -o output.mfm --trace trace.mfm --json
    """
    def run():
        net = load(network)
        snapshots = load_moments(moments)
        try:
            label, start = snapshots[snapshot]
        except IndexError:
            raise click.BadParameter(f"{moments} has {len(snapshots)} snapshot(s)", param_hint='--snapshot')
        cfg = SeriesConfig(order=order, psd_policy=psd_policy)
        result, trace = propagate(net, start, cfg, keep_trace=bool(trace_path),
                                  threads=ctx.threads, element_budget=ctx.element_budget)
        meta = {'network': net.name, 'source': label, 'order': order, 'psd_policy': cfg.psd_policy.value}
        digest = save_moments(out_path, [('output', result)], meta)
        record = {
            'schema': PROPAGATE_SCHEMA,
            'network': net.name,
            'input_dim': start.dim,
            'output_dim': result.dim,
            'order': order,
            'output_file': out_path,
            'checksum': digest,
            'mean': result.mean,
            'variance': result.variance,
        }
        if trace is not None:
            save_moments(trace_path, trace.snapshots, dict(meta, **trace.to_dict()))
            record['trace_file'] = trace_path
            record['layers'] = [
                {'layer': snap_label, 'diagnostics': diag}
                for (snap_label, _), diag in zip(trace.snapshots[1:], trace.to_dict()['diagnostics'])
            ]
        return record

    emit(run_command(run), fmt, as_json)
