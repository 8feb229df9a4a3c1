"""Synthetic network generation"""
import click

from ..moments.activation_stats import RELU
from ..network.serialization import save
from ..network.synth import Family, SynthConfig, synthesize
from ..utils.validators import validate_kind
from . import emit, output_options, run_command

GEN_NET_SCHEMA = 'momentflow-gen-net/1'


@click.command(name='gen-net')
@click.option('--family', type=click.Choice([f.value for f in Family]), default='fc', help='Network family')
@click.option('--depth', type=click.IntRange(min=1), default=4, help='Number of weight layers')
@click.option('--width', type=click.IntRange(min=1), default=100, help='Hidden units (fc)')
@click.option('--input-dim', type=click.IntRange(min=1), default=None, help='Input size (fc, default: width)')
@click.option('--channels', type=click.IntRange(min=1), default=10, help='Convolution channels (cnn)')
@click.option('--input-hw', nargs=2, type=click.IntRange(min=1), default=(20, 20), help='Input height width (cnn)')
@click.option('--kernel-size', type=click.IntRange(min=1), default=3, help='Square kernel size (cnn)')
@click.option('--activation', default='relu', callback=validate_kind, help='Hidden activation kind')
@click.option('--seed', type=int, default=0, help='Initialization seed')
@click.option('--out', '-o', 'out_path', type=click.Path(dir_okay=False), required=True, help='Network file')
@output_options
@click.pass_obj
def gen_net_command(ctx, family, depth, width, input_dim, channels, input_hw, kernel_size, activation, seed,
                    out_path, fmt, as_json):
    """Generate a Kaiming-initialized network file.

    Examples:

        momentflow gen-net --family fc --depth 4 --seed 7 -o fc4.mfn

        momentflow gen-net --family cnn --depth 4 -o cnn4.mfn --json
    """
    def run():
        cfg = SynthConfig(family, depth, width, input_dim, channels, input_hw, kernel_size,
                          activation or RELU, seed)
        net = synthesize(cfg)
        digest = save(net, out_path)
        return {'schema': GEN_NET_SCHEMA, 'file': out_path, 'checksum': digest, 'config': cfg.to_dict(),
                **net.summary()}

    record = run_command(run)
    if as_json or fmt == 'json':
        emit(record, 'json')
    else:
        emit(record['layers'] if fmt == 'csv' else record, fmt)
