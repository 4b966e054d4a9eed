import json
import numpy as np
import pandas as pd
import pytest
from shapeweb_solver.cli import main, build_parser, resolve_config
from shapeweb_solver.config import RunConfig, EFFECTIVE_CONFIG

def test_web_command_writes_leaf(tmp_path):
    assert main(['web', '--res', '16', '-o', str(tmp_path)]) == 0
    for name in ('leaf.obj', 'leaf.csv', EFFECTIVE_CONFIG):
        assert (tmp_path / name).exists()
    df = pd.read_csv(str(tmp_path / 'leaf.csv'))
    assert len(df) > 0
    assert np.abs(df['residual']).median() < 1e-10

def test_bad_arguments_exit_1(tmp_path):
    assert main(['web', '--bogus']) == 1
    assert main(['explode']) == 1
    assert main(['web', '--res', '8', '-o', str(tmp_path)]) == 1
    assert main(['web', '--m', '1,2', '-o', str(tmp_path)]) == 1
    assert main(['stability', '--family', 'scalene', '-o', str(tmp_path)]) == 1

def test_empty_leaf_exit_2(tmp_path):
    argv = ['web', '--model', 'fullbody', '--lambda', '0.5', '--res', '16', '-o', str(tmp_path)]
    assert main(argv) == 2

def test_classify_two_body(tmp_path):
    assert main(['classify', '--model', 's2body', '--res', '16', '-o', str(tmp_path)]) == 0
    data = json.loads((tmp_path / 'catalog.json').read_text())
    assert data['model'] == 's2body'
    assert sum(not row['normal'] for row in data['equilibria']) == 1
    df = pd.read_csv(str(tmp_path / 'catalog.csv'))
    assert (df['kappa'] >= 0).all()

def test_classify_ellipsoid(tmp_path):
    assert main(['classify', '--model', 'ellipsoid', '--rho', '3,1', '-o', str(tmp_path)]) == 0
    df = pd.read_csv(str(tmp_path / 'ellipsoid_web.csv'))
    assert {'x1', 'x2', 'x3'} <= set(df.columns)

def test_stability_planar(tmp_path):
    argv = ['stability', '--family', 'planar-iii', '--n', '10', '-o', str(tmp_path)]
    assert main(argv) == 0
    lines = (tmp_path / 'signature_table.csv').read_text().splitlines()
    assert lines[0].startswith('# theta_scal')
    table = pd.read_csv(str(tmp_path / 'signature_table.csv'), comment='#')
    assert len(table) == 10
    found = json.loads((tmp_path / 'thresholds.json').read_text())
    assert found['L2_gyro'] == pytest.approx(24 * np.sqrt(3), rel=1e-8)
    regimes = pd.read_csv(str(tmp_path / 'regimes.csv'))
    assert len(regimes) == 2

def test_stability_zero_tolerance(tmp_path):
    argv = ['stability', '--family', 'planar-iii', '--n', '10', '--tau-zero', '1e3',
            '-o', str(tmp_path)]
    assert main(argv) == 0
    regimes = pd.read_csv(str(tmp_path / 'regimes.csv'), dtype={'sig_vl': str})
    assert len(regimes) == 1
    assert regimes['sig_vl'].tolist() == ['000']
    table = pd.read_csv(str(tmp_path / 'signature_table.csv'), comment='#')
    assert (table['verdict'] == 'indeterminate').all()

def test_effective_config_reproduces_run(tmp_path):
    first = tmp_path / 'first'
    second = tmp_path / 'second'
    assert main(['web', '--res', '16', '--lambda', '1.2', '-o', str(first)]) == 0
    path = str(first / EFFECTIVE_CONFIG)
    assert main(['web', '--config', path, '-o', str(second)]) == 0
    a = json.loads((first / EFFECTIVE_CONFIG).read_text())
    b = json.loads((second / EFFECTIVE_CONFIG).read_text())
    assert a.pop('output') != b.pop('output')
    assert a == b
    assert (first / 'leaf.csv').read_text() == (second / 'leaf.csv').read_text()

def test_flags_override_config_file(tmp_path):
    path = tmp_path / 'run.json'
    path.write_text(json.dumps({'model': 's2body', 'params': {'m1': 1., 'm2': 2.},
                                'resolution': 32}))
    args = build_parser().parse_args(['classify', '--config', str(path), '--res', '20'])
    config = resolve_config(args)
    assert config.resolution == 20
    assert config.params == {'m1': 1., 'm2': 2.}
    args = build_parser().parse_args(['classify', '--config', str(path), '--model', 's3body'])
    config = resolve_config(args)
    assert config.model == 's3body'
    assert config.params == {}
    assert isinstance(config, RunConfig)
