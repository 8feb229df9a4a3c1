import json
import struct

import click
import numpy as np
import pytest
from click.testing import CliRunner

from momentflow.commands import propagate as propagate_mod
from momentflow.commands import tightness as tightness_mod
from momentflow.moments.gaussian_layer import GaussianMoments
from momentflow.moments.propagation import OutputRatio, TightnessReport
from momentflow.momentflow_cli import cli
from momentflow.network import NetworkSpec, load, load_moments, save, save_moments
from momentflow.network.model import Dense
from momentflow.utils.context import RunContext
from momentflow.utils.errors import CholeskyError


def invoke(args):
    return CliRunner().invoke(cli, args)


def payload(result):
    assert result.exit_code == 0, result.output
    return json.loads(result.stdout)


def test_cov_relu_zero_correlation():
    data = payload(invoke(['cov', '--kind', 'relu', '--mu', '0', '0', '--sigma', '1', '1',
                           '--rho', '0', '--order', '4', '--json']))
    assert data['schema'] == 'momentflow-cov/1'
    assert data['series_covariance'] == 0.0


def test_cov_heaviside_with_oracle():
    data = payload(invoke(['cov', '--kind', 'heaviside', '--rho', '0.5', '--order', '12', '--oracle', '--json']))
    assert data['oracle_covariance'] == pytest.approx(1.0 / 12.0, abs=1e-6)
    assert data['series_covariance'] == pytest.approx(1.0 / 12.0, abs=2e-4)
    assert data['abs_error'] <= 2e-4
    assert data['quadrature_scheme_i'] == data['quadrature_scheme_j'] == 'split-gauss-legendre'


def test_cov_sigmoid_oracle_integrates_logistic():
    data = payload(invoke(['cov', '--kind', 'sigmoid', '--rho', '0.3', '--order', '5', '--oracle', '--json']))
    assert data['oracle_activation'] == 'logistic'


@pytest.mark.parametrize('args', [
    ['cov', '--kind', 'relu', '--rho', '1.5'],
    ['cov', '--kind', 'relu', '--sigma', '-1', '1'],
    ['cov', '--kind', 'softmax'],
    ['cov', '--kind', 'sigmoid', '--order', '6'],
])
def test_cov_domain_errors_exit_2(args):
    result = invoke(args)
    assert result.exit_code == 2


def test_error_grid_relu_accuracy_by_order():
    data = payload(invoke(['error-grid', '--kind', 'relu', '-K', '1', '-K', '4', '--json']))
    assert data['schema'] == 'momentflow-error-grid/1'
    assert data['grid_points'] == 101
    errors = {row['order']: row for row in data['orders']}
    assert errors[1]['max_abs_error'] <= 2.5e-2
    assert errors[4]['max_abs_error'] <= 5e-4
    for row in data['orders']:
        assert row['max_abs_error'] >= row['mean_abs_error'] >= 0


def test_error_grid_error_shrinks_with_order():
    data = payload(invoke(['error-grid', '--kind', 'relu', '--mu-step', '0.25',
                           '-K', '1', '-K', '2', '-K', '4', '-K', '8', '--json']))
    assert data['quadrature_scheme'] == 'split-gauss-legendre'
    errors = [row['max_abs_error'] for row in data['orders']]
    assert [row['order'] for row in data['orders']] == [1, 2, 4, 8]
    assert all(later <= earlier for earlier, later in zip(errors, errors[1:]))


def test_error_grid_identity_is_exact(tmp_path):
    result = invoke(['error-grid', '--kind', 'identity', '--mu-step', '1', '-K', '1',
                     '--matrix-dir', str(tmp_path / 'grids'), '--oracle-csv', str(tmp_path / 'oracle.csv'),
                     '--json'])
    data = payload(result)
    assert data['orders'][0]['max_abs_error'] <= 1e-9
    matrix = (tmp_path / 'grids' / 'error_identity_K1.csv').read_text().splitlines()
    assert len(matrix) == 12
    oracle = (tmp_path / 'oracle.csv').read_text().splitlines()
    assert oracle[0] == 'kind_a,kind_b,mu_i,mu_j,sigma_i,sigma_j,rho,cross_moment,covariance'
    assert len(oracle) == 1 + 11 * 11


def test_error_grid_csv_rows():
    result = invoke(['error-grid', '--kind', 'gelu', '--mu-step', '2.5', '-K', '2', '-K', '1', '-f', 'csv'])
    assert result.exit_code == 0, result.output
    lines = result.stdout.splitlines()
    assert lines[0] == 'order,max_abs_error,mean_abs_error'
    assert [line.split(',')[0] for line in lines[1:]] == ['1', '2']


def test_gen_net_writes_loadable_network(tmp_path):
    out = tmp_path / 'fc4.mfn'
    data = payload(invoke(['gen-net', '--family', 'fc', '--depth', '4', '--seed', '7', '-o', str(out), '--json']))
    assert data['schema'] == 'momentflow-gen-net/1'
    net = load(out)
    assert len([layer for layer in net.layers if isinstance(layer, Dense)]) == 4
    again = payload(invoke(['gen-net', '--family', 'fc', '--depth', '4', '--seed', '7',
                            '-o', str(tmp_path / 'again.mfn'), '--json']))
    assert again['checksum'] == data['checksum']


def test_gen_net_depth_zero_is_usage_error(tmp_path):
    result = invoke(['gen-net', '--depth', '0', '-o', str(tmp_path / 'x.mfn')])
    assert result.exit_code == 2


def _identity_files(tmp_path, n=3):
    net_path = tmp_path / 'identity.mfn'
    save(NetworkSpec([Dense(np.eye(n), np.zeros(n))], (n,)), net_path)
    rng = np.random.default_rng(0)
    a = rng.standard_normal((n, n))
    moments = GaussianMoments(rng.standard_normal(n), a @ a.T)
    moments_path = tmp_path / 'input.mfm'
    save_moments(moments_path, [('input', moments)])
    return net_path, moments_path, moments


def test_propagate_identity_network(tmp_path):
    net_path, moments_path, moments = _identity_files(tmp_path)
    out = tmp_path / 'out.mfm'
    trace = tmp_path / 'trace.mfm'
    data = payload(invoke(['propagate', str(net_path), str(moments_path), '-o', str(out),
                           '--trace', str(trace), '--json']))
    assert data['schema'] == 'momentflow-propagate/1'
    ((label, result),) = load_moments(out)
    assert label == 'output'
    assert np.allclose(result.mean, moments.mean, atol=1e-12)
    assert np.allclose(result.cov, moments.cov, atol=1e-12)
    assert len(load_moments(trace)) == 2


def test_propagate_is_byte_identical_across_runs(tmp_path):
    net_path = tmp_path / 'fc4.mfn'
    assert invoke(['gen-net', '--depth', '4', '--width', '20', '--seed', '3', '-o', str(net_path)]).exit_code == 0
    moments_path = tmp_path / 'input.mfm'
    save_moments(moments_path, [('input', GaussianMoments.from_diagonal(np.linspace(-1, 1, 20), np.ones(20)))])
    for name in ('a.mfm', 'b.mfm'):
        result = invoke(['propagate', str(net_path), str(moments_path), '-o', str(tmp_path / name)])
        assert result.exit_code == 0, result.output
    assert (tmp_path / 'a.mfm').read_bytes() == (tmp_path / 'b.mfm').read_bytes()


def test_missing_file_exits_3(tmp_path):
    _, moments_path, _ = _identity_files(tmp_path)
    result = invoke(['propagate', str(tmp_path / 'missing.mfn'), str(moments_path), '-o', str(tmp_path / 'o.mfm')])
    assert result.exit_code == 3
    assert 'Error:' in result.output


def test_corrupt_file_exits_3(tmp_path):
    net_path, moments_path, _ = _identity_files(tmp_path)
    net_path.write_bytes(net_path.read_bytes()[:-4])
    result = invoke(['propagate', str(net_path), str(moments_path), '-o', str(tmp_path / 'o.mfm')])
    assert result.exit_code == 3


def test_malformed_manifest_exits_3(tmp_path):
    net_path, moments_path, _ = _identity_files(tmp_path)
    raw = net_path.read_bytes()
    (length,) = struct.unpack_from('<Q', raw)
    manifest = json.loads(raw[8:8 + length])
    manifest['checksum'] = 'x'
    encoded = json.dumps(manifest).encode()
    net_path.write_bytes(struct.pack('<Q', len(encoded)) + encoded + raw[8 + length:])
    result = invoke(['propagate', str(net_path), str(moments_path), '-o', str(tmp_path / 'o.mfm')])
    assert result.exit_code == 3
    assert 'checksum' in result.output


def test_numerical_failure_exits_4(tmp_path, monkeypatch):
    net_path, moments_path, _ = _identity_files(tmp_path)

    def broken(*args, **kwargs):
        raise CholeskyError(-0.5)

    monkeypatch.setattr(propagate_mod, 'propagate', broken)
    result = invoke(['propagate', str(net_path), str(moments_path), '-o', str(tmp_path / 'o.mfm')])
    assert result.exit_code == 4
    assert 'min eigenvalue' in result.output


def _fake_report_capture(calls):
    def fake(net, trials, mc, cfg, input_factory, estimator=None, threads=1, element_budget=0):
        calls.append({'trials': trials, 'samples': mc.samples, 'n': input_factory.n, 'net': net.name})
        return TightnessReport([OutputRatio(0, 1.0, 0.0, 1.0, 0.0, 0)],
                               {'trials': trials, 'samples': mc.samples})
    return fake


def test_tightness_scale_flags(monkeypatch):
    calls = []
    monkeypatch.setattr(tightness_mod, 'tightness', _fake_report_capture(calls))
    full = payload(invoke(['tightness', '--preset', 'fc4', '--full-scale', '--json']))
    desk = payload(invoke(['tightness', '--preset', 'fc4', '--json']))
    assert full['metadata']['trials'] == 200 and full['metadata']['samples'] == 75000
    assert desk['metadata']['trials'] == 20 and desk['metadata']['samples'] == 20000
    assert full['metadata']['full_scale'] is True
    assert calls[0]['n'] == 100 and calls[0]['net'] == 'fc4'


def test_tightness_cnn_preset_dimensions(monkeypatch):
    calls = []
    monkeypatch.setattr(tightness_mod, 'tightness', _fake_report_capture(calls))
    payload(invoke(['tightness', '--preset', 'cnn8', '--json']))
    assert calls[0]['n'] == 400 and calls[0]['net'] == 'cnn8'


def test_tightness_seeded_runs_write_identical_reports(tmp_path):
    outputs = []
    for name in ('a', 'b'):
        csv_path = tmp_path / f'{name}.csv'
        json_path = tmp_path / f'{name}.json'
        result = invoke(['tightness', '--preset', 'fc4', '--trials', '2', '--samples', '300', '--seed', '5',
                         '--csv', str(csv_path), '--json-out', str(json_path)])
        assert result.exit_code == 0, result.output
        outputs.append((csv_path.read_bytes(), json_path.read_bytes()))
    assert outputs[0] == outputs[1]
    header = outputs[0][0].decode().splitlines()[0]
    assert header == 'output_index,q_mu_mean,q_mu_std,q_var_mean,q_var_std,excluded_trials'
    report = json.loads(outputs[0][1])
    assert report['schema'] == 'momentflow-tightness/1'
    assert report['metadata']['source'] == 'fc4'


def test_tightness_rejects_single_trial():
    assert invoke(['tightness', '--trials', '1']).exit_code == 2


def test_threads_flag_and_environment(monkeypatch):
    monkeypatch.setenv('MOMENTFLOW_THREADS', '3')
    assert RunContext().threads == 3
    assert RunContext(threads=2).threads == 2
    monkeypatch.setenv('MOMENTFLOW_THREADS', 'many')
    with pytest.raises(ValueError):
        RunContext()
    assert invoke(['cov', '--json']).exit_code == 2


def test_commands_work_under_a_wrapper_group():
    from momentflow.commands.cov import cov_command

    @click.group()
    @click.pass_context
    def app(ctx):
        ctx.obj = RunContext(threads=1)

    app.add_command(cov_command)
    result = CliRunner().invoke(app, ['cov', '--kind', 'identity', '--sigma', '2', '3', '--rho', '0.5',
                                      '-f', 'csv'])
    assert result.exit_code == 0, result.output
    header, row = result.stdout.splitlines()
    values = dict(zip(header.split(','), row.split(',')))
    assert float(values['series_covariance']) == 3.0
